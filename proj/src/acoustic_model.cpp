#include "himuv/acoustic_model.hpp"

#include "himuv/error.hpp"

#include <cmath>
#include <stdexcept>

namespace himuv {

TextEncoder::TextEncoder(ParameterStore& store, const TrainingConfig& config, std::size_t vocab_size)
    : embedding_(store.add("text_encoder.embedding",
                           store.normal(static_cast<Eigen::Index>(vocab_size), config.d_model,
                                        1.0 / std::sqrt(static_cast<double>(config.d_model))))),
      vocab_size_(vocab_size)
{
    for (std::int64_t b = 0; b < config.encoder_blocks; ++b) {
        blocks_.emplace_back(store, "text_encoder.block" + std::to_string(b), config.d_model, config.n_heads,
                             config.ffn_filter, config.ffn_kernel);
    }
}

Var TextEncoder::operator()(std::span<const std::int64_t> phonemes) const
{
    if (phonemes.empty()) {
        throw Error(ErrorKind::input, "empty phoneme sequence");
    }
    std::vector<long> ids;
    ids.reserve(phonemes.size());
    for (auto id : phonemes) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab_size_) {
            throw Error(ErrorKind::input, "phoneme id " + std::to_string(id) + " outside vocabulary of size " +
                                              std::to_string(vocab_size_));
        }
        ids.push_back(static_cast<long>(id));
    }
    Var h = ag::gather_rows(embedding_, ids);
    h = ag::add(h, ag::constant(positional_encoding(h.rows(), h.cols())));
    for (const auto& block : blocks_) {
        h = block(h);
    }
    return h;
}

ProsodyPredictor::ProsodyPredictor(ParameterStore& store, const std::string& name, const TrainingConfig& config,
                                   Eigen::Index input_width)
    : lstm_(store, name + ".lstm", input_width, config.predictor_hidden, static_cast<int>(config.predictor_layers)),
      proj_(store, name + ".proj", config.predictor_hidden, 1),
      input_width_(input_width)
{
}

Var ProsodyPredictor::operator()(const Var& hidden_with_prosody) const
{
    if (hidden_with_prosody.cols() != input_width_) {
        throw std::invalid_argument("predictor input width " + std::to_string(hidden_with_prosody.cols()) +
                                    " != " + std::to_string(input_width_));
    }
    return proj_(lstm_(hidden_with_prosody));
}

PitchEmbedding::PitchEmbedding(ParameterStore& store, const TrainingConfig& config, Eigen::Index width)
    : conv_(store, "pitch_embedding", 1, width, config.pitch_kernel)
{
}

Var PitchEmbedding::operator()(const Var& pitch) const
{
    return conv_(pitch);
}

Var length_regulate(const Var& per_phoneme, std::span<const std::int64_t> durations)
{
    if (static_cast<Eigen::Index>(durations.size()) != per_phoneme.rows()) {
        throw std::invalid_argument("length_regulate: duration count does not match phoneme rows");
    }
    std::vector<long> rows;
    for (std::size_t i = 0; i < durations.size(); ++i) {
        if (durations[i] < 0) {
            throw std::invalid_argument("length_regulate: negative duration");
        }
        rows.insert(rows.end(), static_cast<std::size_t>(durations[i]), static_cast<long>(i));
    }
    return ag::gather_rows(per_phoneme, rows);
}

MelDecoder::MelDecoder(ParameterStore& store, const TrainingConfig& config, Eigen::Index input_width)
    : in_proj_(store, "decoder.in_proj", input_width, config.d_model),
      out_proj_(store, "decoder.out_proj", config.d_model, kMelBins)
{
    for (std::int64_t b = 0; b < config.decoder_blocks; ++b) {
        blocks_.emplace_back(store, "decoder.block" + std::to_string(b), config.d_model, config.n_heads,
                             config.ffn_filter, config.ffn_kernel);
    }
}

Var MelDecoder::operator()(const Var& frames) const
{
    Var h = in_proj_(frames);
    h = ag::add(h, ag::constant(positional_encoding(h.rows(), h.cols())));
    for (const auto& block : blocks_) {
        h = block(h);
    }
    return out_proj_(h);
}

Matrix duration_to_log_domain(std::span<const std::int64_t> durations)
{
    Matrix m(static_cast<Eigen::Index>(durations.size()), 1);
    for (std::size_t i = 0; i < durations.size(); ++i) {
        m(static_cast<Eigen::Index>(i), 0) = std::log1p(static_cast<double>(durations[i]));
    }
    return m;
}

std::vector<std::int64_t> log_domain_to_duration(const Matrix& log_durations)
{
    std::vector<std::int64_t> out;
    out.reserve(static_cast<std::size_t>(log_durations.size()));
    for (Eigen::Index i = 0; i < log_durations.size(); ++i) {
        const double frames = std::exp(log_durations.data()[i]) - 1.0;
        out.push_back(std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(frames + 0.5))));
    }
    return out;
}

Matrix column_vector(std::span<const double> values)
{
    Matrix m(static_cast<Eigen::Index>(values.size()), 1);
    for (std::size_t i = 0; i < values.size(); ++i) {
        m(static_cast<Eigen::Index>(i), 0) = values[i];
    }
    return m;
}

SquaredError squared_error(const Var& target, const Var& prediction)
{
    if (target.rows() != prediction.rows() || target.cols() != prediction.cols()) {
        throw Error(ErrorKind::consistency, "loss operands have different shapes");
    }
    return {ag::sum(ag::square(ag::sub(target, prediction))), static_cast<double>(target.value().size())};
}

Var recon_loss(const Var& mel, const Var& mel_pred, const Var& log_duration_target, const Var& log_duration_pred,
               const Var& pitch, const Var& pitch_pred, double alpha)
{
    const auto m = squared_error(mel, mel_pred);
    const auto d = squared_error(log_duration_target, log_duration_pred);
    const auto p = squared_error(pitch, pitch_pred);
    Var loss = ag::scale(m.sum, 1.0 / m.count);
    loss = ag::add(loss, ag::scale(d.sum, alpha / d.count));
    return ag::add(loss, ag::scale(p.sum, alpha / p.count));
}

}  // namespace himuv
