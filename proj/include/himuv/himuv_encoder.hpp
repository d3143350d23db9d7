#pragma once

// Hierarchical two-scale prosody encoder.
//
// Global scale: mel -> mel encoder (H_g) -> 2-layer Bi-GRU -> time average ->
// linear -> (mu_g, sigma_g) -> z_g.
// Local scale: [H | z_g per row] -> hidden encoder (H_l) -> cross-attention
// (queries H_l, keys/values H_g) -> 2-layer Bi-GRU -> linear -> (mu_l, sigma_l)
// -> z_l. A separate Bi-GRU predicts mu_l from a detached H_l; that prediction
// is the local prior mean at inference.
//
// Standard deviations are softplus(raw) + 1e-4.

#include "himuv/config.hpp"
#include "himuv/nn.hpp"

#include <optional>
#include <vector>

namespace himuv {

inline constexpr double kSigmaFloor = 1e-4;

struct LatentGlobal {
    Var mu;     // 1 x latent_global
    Var sigma;  // 1 x latent_global
    Var z;      // mu + sigma * eps
    Matrix eps;
};

struct LatentLocal {
    Var mu;     // N x latent_local
    Var sigma;  // N x latent_local
    Var z;
    Matrix eps;
    Var hidden;  // H_l, N x d_enc
    std::vector<Matrix> attention;  // per head, N x M'
};

// Linear projection followed by residual gated convolutions: M x 80 -> M x d_enc.
class MelEncoder {
public:
    MelEncoder() = default;
    MelEncoder(ParameterStore& store, const TrainingConfig& config);
    Var operator()(const Var& mel) const;

private:
    Linear in_proj_;
    std::vector<GatedConvBlock> blocks_;
};

class GlobalPosterior {
public:
    GlobalPosterior() = default;
    GlobalPosterior(ParameterStore& store, const TrainingConfig& config);
    // eps: 1 x latent_global standard-normal noise.
    LatentGlobal operator()(const Var& mel_features, const Matrix& eps) const;

private:
    BiGru gru_;
    Linear proj_;
    Eigen::Index latent_ = 0;
};

// Two (conv1d -> layer norm -> ReLU) blocks mapping input width to d_enc.
class HiddenEncoder {
public:
    HiddenEncoder() = default;
    HiddenEncoder(ParameterStore& store, const TrainingConfig& config, Eigen::Index input_width);
    Var operator()(const Var& x) const;
    Eigen::Index input_width() const { return input_width_; }

private:
    Conv1d conv1_, conv2_;
    LayerNorm norm1_, norm2_;
    Eigen::Index input_width_ = 0;
};

class LocalPosterior {
public:
    LocalPosterior() = default;
    LocalPosterior(ParameterStore& store, const TrainingConfig& config);
    // hidden: H_l (N x d_enc); mel_features: H_g (M' x d_enc); eps N x latent_local.
    LatentLocal operator()(const Var& hidden, const Var& mel_features, const Matrix& eps) const;

private:
    MultiHeadAttention attention_;
    BiGru gru_;
    Linear proj_;
    Eigen::Index latent_ = 0;
};

class PosteriorMeanPredictor {
public:
    PosteriorMeanPredictor() = default;
    PosteriorMeanPredictor(ParameterStore& store, const TrainingConfig& config);
    // The input is detached here, so nothing upstream receives gradient.
    Var operator()(const Var& hidden) const;

private:
    BiGru gru_;
    Linear proj_;
};

// Splits a raw (rows x 2k) projection into mu and softplus(.) + floor sigma and
// forms z = mu + sigma * eps.
void reparameterize(const Var& raw, Eigen::Index latent, const Matrix& eps, Var& mu, Var& sigma, Var& z);

// [z_g replicated over rows | z_l]; either part may be undefined (single-scale variants).
Var assemble_prosody(const Var& z_global, const Var& z_local, Eigen::Index rows);

// Sum over all elements of 0.5 (mu^2 + sigma^2 - 1 - ln sigma^2).
// Throws std::domain_error if any sigma <= 0.
Var kl_standard_normal(const Var& mu, const Var& sigma);

// Sum over rows of the per-row mean squared error. mu_l is detached.
Var posterior_mean_loss(const Var& mu_l, const Var& mu_hat);

}  // namespace himuv
