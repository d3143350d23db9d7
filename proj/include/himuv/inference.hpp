#pragma once

// Prior sampling with temperature, the sampling modes, and text-to-mel synthesis.
//
// Priors: z_g ~ N(0, tau_g^2 I); z_l,n ~ N(mu_hat_l,n, tau_l^2 I), where mu_hat_l
// comes from the posterior-mean predictor on H_l(H, z_g). z_g is drawn first.
//
// Modes freeze one scale at a value that does not depend on the seed:
//   full         both scales sampled
//   global_only  z_g sampled; Z_l = fixed_z_l, else mu_hat_l computed with z_g = 0
//   local_only   z_g = fixed_z_g, else 0; Z_l sampled around mu_hat_l(z_g)
//   none         both frozen (same as tau = 0 without fixed latents)

#include "himuv/audio.hpp"
#include "himuv/dataset.hpp"
#include "himuv/model.hpp"
#include "himuv/training.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace himuv {

enum class SamplingMode { full, global_only, local_only, none };

// Throws Error(usage) for unknown names.
SamplingMode parse_sampling_mode(std::string_view name);
const char* to_string(SamplingMode mode);

struct SamplingSpec {
    SamplingMode mode = SamplingMode::full;
    double tau = 1.0;
    std::optional<double> tau_global;  // overrides tau for z_g
    std::optional<double> tau_local;   // overrides tau for Z_l
    std::uint64_t seed = 0;
    std::optional<Matrix> fixed_z_g;  // 1 x latent_global
    std::optional<Matrix> fixed_z_l;  // N x latent_local

    // Effective temperatures after the mode is applied.
    double tau_g() const;
    double tau_l() const;
};

enum class LatentSource { absent, sampled, prior_mean, fixed };
const char* to_string(LatentSource source);

struct LatentAudit {
    Matrix z_g;       // 1 x latent_global, empty when the variant has no global branch
    Matrix z_l;       // N x latent_local, empty when the variant has no local branch
    Matrix mu_hat_l;  // prior mean used for the local scale
    LatentSource global_source = LatentSource::absent;
    LatentSource local_source = LatentSource::absent;
    double tau_g = 0.0;
    double tau_l = 0.0;
};

struct PriorSample {
    Var prosody;  // Z, N x prosody_width
    LatentAudit audit;
};

// Draws Z for the text representation H. The noise for z_g and then Z_l is
// always drawn from rng in that order, whatever the mode. Throws Error(input)
// for fixed latents of the wrong shape or for a scale the variant lacks.
PriorSample sample_prior(const Model& model, const Var& text_hidden, const SamplingSpec& spec, std::mt19937_64& rng);
// Seeds a fresh generator with spec.seed.
PriorSample sample_prior(const Model& model, const Var& text_hidden, const SamplingSpec& spec);

struct SynthesisResult {
    MelSpectrogram mel;
    std::vector<std::int64_t> durations;  // frames per phoneme
    std::vector<double> pitch_hz;         // denormalised; unvoiced-looking values are kept as predicted
    std::vector<double> pitch_normalized;
    LatentAudit audit;
    SamplingSpec spec;
};

// Throws Error(input) for empty input and Error(degenerate) when every
// duration rounds to zero. Read-only over the model; safe to call concurrently.
SynthesisResult synthesize(const Model& model, const PitchStats& stats, std::span<const std::int64_t> phonemes,
                           const SamplingSpec& spec);

// A loaded checkpoint ready for synthesis.
class Synthesizer {
public:
    explicit Synthesizer(const Checkpoint& checkpoint);
    explicit Synthesizer(const std::filesystem::path& checkpoint_path);

    SynthesisResult synthesize(const std::vector<std::string>& phonemes, const SamplingSpec& spec) const;
    const Model& model() const { return model_; }
    const PhonemeVocabulary& vocab() const { return vocab_; }
    const PitchStats& stats() const { return stats_; }

private:
    Model model_;
    PhonemeVocabulary vocab_;
    PitchStats stats_;
};

// Sidecar written next to every synthesised mel.
struct SynthesisSidecar {
    std::int64_t frame_count = 0;
    std::int64_t hop = 256;
    std::int64_t win = 1024;
    std::int64_t sample_rate = 22050;
    std::vector<std::int64_t> durations;
    std::vector<double> pitch_hz;
};

// Writes <stem>.mel.bin and <stem>.json, plus <stem>.wav when wav_iterations
// is set (Griffin-Lim iterations).
void write_synthesis(const SynthesisResult& result, const std::vector<std::string>& phonemes,
                     const std::filesystem::path& stem, std::optional<int> wav_iterations,
                     const TrainingConfig& config);
SynthesisSidecar read_sidecar(const std::filesystem::path& path);

}  // namespace himuv
