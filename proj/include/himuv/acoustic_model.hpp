#pragma once

// Deterministic backbone: phoneme embedding and text encoder, duration/pitch
// predictors, pitch embedding, length regulation and the mel decoder.

#include "himuv/config.hpp"
#include "himuv/nn.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace himuv {

class TextEncoder {
public:
    TextEncoder() = default;
    TextEncoder(ParameterStore& store, const TrainingConfig& config, std::size_t vocab_size);

    // N x d_model. Throws Error(input) for an empty sequence or out-of-vocabulary id.
    Var operator()(std::span<const std::int64_t> phonemes) const;

private:
    Var embedding_;
    std::vector<FeedForwardTransformerBlock> blocks_;
    std::size_t vocab_size_ = 0;
};

// Two-layer LSTM + projection to one value per phoneme (N x 1).
class ProsodyPredictor {
public:
    ProsodyPredictor() = default;
    ProsodyPredictor(ParameterStore& store, const std::string& name, const TrainingConfig& config,
                     Eigen::Index input_width);
    Var operator()(const Var& hidden_with_prosody) const;

private:
    Lstm lstm_;
    Linear proj_;
    Eigen::Index input_width_ = 0;
};

// Kernel-3 same-padded convolution lifting pitch (N x 1) to N x width.
class PitchEmbedding {
public:
    PitchEmbedding() = default;
    PitchEmbedding(ParameterStore& store, const TrainingConfig& config, Eigen::Index width);
    Var operator()(const Var& pitch) const;
    const Conv1d& conv() const { return conv_; }

private:
    Conv1d conv_;
};

// Row i repeated durations[i] times; zero durations drop the row.
// Throws std::invalid_argument on negative durations or length mismatch.
Var length_regulate(const Var& per_phoneme, std::span<const std::int64_t> durations);

// Input projection from the conditioning width to d_model, positional
// encoding, transformer blocks and a linear projection to 80 mel bins.
class MelDecoder {
public:
    MelDecoder() = default;
    MelDecoder(ParameterStore& store, const TrainingConfig& config, Eigen::Index input_width);
    Var operator()(const Var& frames) const;

private:
    Linear in_proj_;
    std::vector<FeedForwardTransformerBlock> blocks_;
    Linear out_proj_;
};

// log(1 + d), the regression domain of the duration predictor.
Matrix duration_to_log_domain(std::span<const std::int64_t> durations);
// round-half-up(exp(x) - 1), clamped at zero.
std::vector<std::int64_t> log_domain_to_duration(const Matrix& log_durations);

Matrix column_vector(std::span<const double> values);

// Squared-error sum with its element count, so batches can pool means.
struct SquaredError {
    Var sum;
    double count = 0;
};
SquaredError squared_error(const Var& target, const Var& prediction);

// f(X, X_hat) + alpha f(d, d_hat) + alpha f(p, p_hat), f = mean squared error.
// log_duration_target / log_duration_pred are both in log(1 + d) units.
Var recon_loss(const Var& mel, const Var& mel_pred, const Var& log_duration_target, const Var& log_duration_pred,
               const Var& pitch, const Var& pitch_pred, double alpha);

}  // namespace himuv
