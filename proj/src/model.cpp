#include "himuv/model.hpp"

#include "himuv/error.hpp"

namespace himuv {

Variant parse_variant(std::string_view name)
{
    if (name == "himuv") return Variant::himuv;
    if (name == "gvae") return Variant::gvae;
    if (name == "lvae") return Variant::lvae;
    if (name == "backbone") return Variant::backbone;
    if (name == "backbone_adv") return Variant::backbone_adv;
    throw Error(ErrorKind::usage, "unknown variant '" + std::string(name) + "'");
}

const char* to_string(Variant variant)
{
    switch (variant) {
    case Variant::himuv: return "himuv";
    case Variant::gvae: return "gvae";
    case Variant::lvae: return "lvae";
    case Variant::backbone: return "backbone";
    case Variant::backbone_adv: return "backbone_adv";
    }
    return "unknown";
}

VariantSpec variant_spec(Variant variant)
{
    switch (variant) {
    case Variant::himuv: return {true, true, true, true};
    case Variant::gvae: return {true, false, false, false};
    case Variant::lvae: return {false, true, false, false};
    case Variant::backbone: return {false, false, false, false};
    case Variant::backbone_adv: return {false, false, false, true};
    }
    return {};
}

Model::Model(const TrainingConfig& config, Variant variant, std::size_t vocab_size)
    : config_(config),
      variant_(variant),
      spec_(variant_spec(variant)),
      vocab_size_(vocab_size),
      generator_(config.seed),
      discriminator_params_(config.seed ^ 0x9e3779b97f4a7c15ULL)
{
    config_.validate();
    if (vocab_size == 0) {
        throw Error(ErrorKind::config, "empty phoneme vocabulary");
    }
    text_encoder_ = TextEncoder(generator_, config_, vocab_size);
    if (spec_.global || spec_.local) {
        mel_encoder_.emplace(generator_, config_);
    }
    if (spec_.global) {
        global_posterior_.emplace(generator_, config_);
    }
    if (spec_.local) {
        const Eigen::Index width = config_.d_model + (spec_.local_conditioned_on_global ? config_.latent_global : 0);
        hidden_encoder_.emplace(generator_, config_, width);
        local_posterior_.emplace(generator_, config_);
        posterior_mean_.emplace(generator_, config_);
    }
    const Eigen::Index cond = config_.d_model + prosody_width();
    duration_predictor_ = ProsodyPredictor(generator_, "duration_predictor", config_, cond);
    pitch_predictor_ = ProsodyPredictor(generator_, "pitch_predictor", config_, cond);
    pitch_embedding_ = PitchEmbedding(generator_, config_, cond);
    decoder_ = MelDecoder(generator_, config_, cond);
    if (spec_.adversarial && config_.adversarial) {
        discriminator_.emplace(discriminator_params_, config_);
    }
}

Eigen::Index Model::prosody_width() const
{
    return (spec_.global ? config_.latent_global : 0) + (spec_.local ? config_.latent_local : 0);
}

const Discriminator& Model::discriminator() const
{
    if (!discriminator_) {
        throw std::logic_error("this model has no discriminator");
    }
    return *discriminator_;
}

NoiseDraw Model::draw_noise(Eigen::Index phonemes, std::mt19937_64& rng) const
{
    std::normal_distribution<double> normal(0.0, 1.0);
    NoiseDraw n;
    if (spec_.global) {
        n.global.resize(1, config_.latent_global);
        for (Eigen::Index i = 0; i < n.global.size(); ++i) {
            n.global.data()[i] = normal(rng);
        }
    }
    if (spec_.local) {
        n.local.resize(phonemes, config_.latent_local);
        for (Eigen::Index i = 0; i < n.local.size(); ++i) {
            n.local.data()[i] = normal(rng);
        }
    }
    return n;
}

Var Model::encode_text(std::span<const std::int64_t> phonemes) const
{
    return text_encoder_(phonemes);
}

Var Model::local_hidden(const Var& text_hidden, const Var& z_global) const
{
    if (!hidden_encoder_) {
        throw std::logic_error("variant has no local branch");
    }
    if (spec_.local_conditioned_on_global) {
        const Var parts[] = {text_hidden, repeat_row(z_global, text_hidden.rows())};
        return (*hidden_encoder_)(ag::concat_cols(parts));
    }
    return (*hidden_encoder_)(text_hidden);
}

Var Model::predict_posterior_mean(const Var& local_hidden) const
{
    if (!posterior_mean_) {
        throw std::logic_error("variant has no posterior-mean predictor");
    }
    return (*posterior_mean_)(local_hidden);
}

Var Model::with_prosody(const Var& text_hidden, const Var& prosody) const
{
    if (prosody.cols() != prosody_width() || prosody.rows() != text_hidden.rows()) {
        throw Error(ErrorKind::consistency, "prosody embedding has the wrong shape");
    }
    if (prosody.cols() == 0) {
        return text_hidden;
    }
    const Var parts[] = {text_hidden, prosody};
    return ag::concat_cols(parts);
}

Var Model::predict_log_duration(const Var& hidden_with_prosody) const
{
    return duration_predictor_(hidden_with_prosody);
}

Var Model::predict_pitch(const Var& hidden_with_prosody) const
{
    return pitch_predictor_(hidden_with_prosody);
}

Var Model::decode(const Var& hidden_with_prosody, const Var& pitch, std::span<const std::int64_t> durations) const
{
    const Var conditioned = ag::add(hidden_with_prosody, pitch_embedding_(pitch));
    return decoder_(length_regulate(conditioned, durations));
}

ForwardResult Model::forward(std::span<const std::int64_t> phonemes, const Matrix& mel,
                             std::span<const std::int64_t> durations, std::span<const double> pitch_normalized,
                             const NoiseDraw& noise) const
{
    if (durations.size() != phonemes.size() || pitch_normalized.size() != phonemes.size()) {
        throw Error(ErrorKind::consistency, "prosody targets do not match the phoneme count");
    }
    ForwardResult r;
    r.text_hidden = encode_text(phonemes);
    Var z_global;
    Var z_local;
    if (mel_encoder_) {
        const Var mel_features = (*mel_encoder_)(ag::constant(mel));
        if (global_posterior_) {
            r.global = (*global_posterior_)(mel_features, noise.global);
            z_global = r.global->z;
        }
        if (local_posterior_) {
            const Var hidden = local_hidden(r.text_hidden, z_global);
            r.local = (*local_posterior_)(hidden, mel_features, noise.local);
            r.mu_hat = predict_posterior_mean(hidden);
            z_local = r.local->z;
        }
    }
    r.prosody = assemble_prosody(z_global, z_local, r.text_hidden.rows());
    const Var hz = with_prosody(r.text_hidden, r.prosody);
    r.log_duration_pred = predict_log_duration(hz);
    r.pitch_pred = predict_pitch(hz);
    r.mel_pred = decode(hz, ag::constant(column_vector(pitch_normalized)), durations);
    return r;
}

Model build_variant(Variant variant, const TrainingConfig& config, std::size_t vocab_size)
{
    return Model(config, variant, vocab_size);
}

}  // namespace himuv
