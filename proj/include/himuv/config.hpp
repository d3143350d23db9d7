#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace himuv {

inline constexpr int kMelBins = 80;

struct TrainingConfig {
    // optimization
    double lr = 0.002;
    std::int64_t batch_size = 32;
    std::int64_t total_steps = 200000;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.98;
    double adam_eps = 1e-9;
    double weight_decay = 0.0;
    std::int64_t warmup_steps = 4000;
    double grad_clip = 1.0;

    // loss weights
    double alpha = 0.01;
    double gamma = 0.01;
    double delta = 0.01;
    double beta_g_max = 1e-7;
    double beta_l_max = 1e-4;
    std::int64_t kl_ramp_start = 10000;
    std::int64_t kl_ramp_end = 60000;
    bool adversarial = true;

    // acoustic backbone
    std::int64_t d_model = 256;
    std::int64_t n_heads = 2;
    std::int64_t encoder_blocks = 4;
    std::int64_t decoder_blocks = 4;
    std::int64_t ffn_filter = 1024;
    std::int64_t ffn_kernel = 3;
    std::int64_t predictor_hidden = 256;
    std::int64_t predictor_layers = 2;
    std::int64_t pitch_kernel = 3;

    // prosody encoder
    std::int64_t d_enc = 128;
    std::int64_t gru_hidden = 128;
    std::int64_t attn_heads = 2;
    std::int64_t latent_global = 32;
    std::int64_t latent_local = 16;
    std::int64_t mel_encoder_blocks = 2;
    std::int64_t mel_encoder_kernel = 5;
    std::int64_t hidden_encoder_kernel = 3;

    // discriminator
    std::int64_t disc_layers = 4;
    std::int64_t disc_channels = 32;
    double disc_slope = 0.2;

    // audio front end
    std::int64_t sample_rate = 22050;
    std::int64_t hop = 256;
    std::int64_t win = 1024;
    double fmin = 0.0;
    double fmax = 8000.0;
    double log_floor = 1e-5;
    double pitch_fmin = 60.0;
    double pitch_fmax = 500.0;
    double voicing_threshold = 0.5;
    std::int64_t duration_tolerance = 2;

    // run control
    std::uint64_t seed = 1234;
    std::int64_t checkpoint_every = 1000;
    std::int64_t log_every = 1;

    // Throws Error(config) when an invariant is violated.
    void validate() const;

    bool operator==(const TrainingConfig&) const = default;
};

struct ConfigKey {
    std::string name;
    std::string help;
    std::function<void(TrainingConfig&, const std::string&)> set;
    std::function<std::string(const TrainingConfig&)> get;
};

// Every accepted key, in file order. The CLI help text is generated from this.
const std::vector<ConfigKey>& config_keys();

void set_config_value(TrainingConfig& config, const std::string& key, const std::string& value);

// Flat `key = value` text; '#' starts a comment. Unknown keys are errors.
TrainingConfig parse_config(const std::string& text, TrainingConfig base = {});
TrainingConfig load_config(const std::filesystem::path& path, TrainingConfig base = {});
std::string format_config(const TrainingConfig& config);
void save_config(const TrainingConfig& config, const std::filesystem::path& path);

// Small dimensions used by the toy corpus, smoke tests and the README walkthrough.
TrainingConfig toy_config();

}  // namespace himuv
