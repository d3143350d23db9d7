#pragma once

// The full acoustic model and its comparison variants. Every variant shares
// the text encoder, predictors, pitch embedding and decoder; the variant only
// decides which prosody-encoder branches (and the discriminator) exist.

#include "himuv/acoustic_model.hpp"
#include "himuv/adversarial.hpp"
#include "himuv/config.hpp"
#include "himuv/himuv_encoder.hpp"
#include "himuv/nn.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>

namespace himuv {

enum class Variant { himuv, gvae, lvae, backbone, backbone_adv };

// Throws Error(usage) for unknown names.
Variant parse_variant(std::string_view name);
const char* to_string(Variant variant);

struct VariantSpec {
    bool global = false;
    bool local = false;
    bool local_conditioned_on_global = false;
    bool adversarial = false;
};

VariantSpec variant_spec(Variant variant);

struct NoiseDraw {
    Matrix global;  // 1 x latent_global, or empty
    Matrix local;   // N x latent_local, or empty
};

// Teacher-forced forward pass over one utterance.
struct ForwardResult {
    Var text_hidden;  // H
    std::optional<LatentGlobal> global;
    std::optional<LatentLocal> local;
    Var mu_hat;    // posterior-mean prediction (local variants)
    Var prosody;   // Z, N x prosody_width()
    Var log_duration_pred;
    Var pitch_pred;
    Var mel_pred;
};

class Model {
public:
    Model(const TrainingConfig& config, Variant variant, std::size_t vocab_size);
    Model(Model&&) = default;
    Model& operator=(Model&&) = default;
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    const TrainingConfig& config() const { return config_; }
    Variant variant() const { return variant_; }
    const VariantSpec& spec() const { return spec_; }
    std::size_t vocab_size() const { return vocab_size_; }
    bool uses_adversarial() const { return discriminator_.has_value(); }
    Eigen::Index prosody_width() const;

    ParameterStore& generator_params() { return generator_; }
    const ParameterStore& generator_params() const { return generator_; }
    ParameterStore& discriminator_params() { return discriminator_params_; }
    const ParameterStore& discriminator_params() const { return discriminator_params_; }
    const Discriminator& discriminator() const;

    NoiseDraw draw_noise(Eigen::Index phonemes, std::mt19937_64& rng) const;

    ForwardResult forward(std::span<const std::int64_t> phonemes, const Matrix& mel,
                          std::span<const std::int64_t> durations, std::span<const double> pitch_normalized,
                          const NoiseDraw& noise) const;

    // Building blocks shared with the inference path.
    Var encode_text(std::span<const std::int64_t> phonemes) const;
    // H_l from H and (for hierarchical variants) z_g.
    Var local_hidden(const Var& text_hidden, const Var& z_global) const;
    Var predict_posterior_mean(const Var& local_hidden) const;
    Var with_prosody(const Var& text_hidden, const Var& prosody) const;  // [H | Z]
    Var predict_log_duration(const Var& hidden_with_prosody) const;
    Var predict_pitch(const Var& hidden_with_prosody) const;
    Var decode(const Var& hidden_with_prosody, const Var& pitch, std::span<const std::int64_t> durations) const;

private:
    TrainingConfig config_;
    Variant variant_;
    VariantSpec spec_;
    std::size_t vocab_size_;
    ParameterStore generator_;
    ParameterStore discriminator_params_;

    TextEncoder text_encoder_;
    std::optional<MelEncoder> mel_encoder_;
    std::optional<GlobalPosterior> global_posterior_;
    std::optional<HiddenEncoder> hidden_encoder_;
    std::optional<LocalPosterior> local_posterior_;
    std::optional<PosteriorMeanPredictor> posterior_mean_;
    ProsodyPredictor duration_predictor_;
    ProsodyPredictor pitch_predictor_;
    PitchEmbedding pitch_embedding_;
    MelDecoder decoder_;
    std::optional<Discriminator> discriminator_;
};

// Builds the named comparison configuration over a shared code path.
Model build_variant(Variant variant, const TrainingConfig& config, std::size_t vocab_size);

}  // namespace himuv
