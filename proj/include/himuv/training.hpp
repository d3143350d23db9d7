#pragma once

#include "himuv/config.hpp"
#include "himuv/dataset.hpp"
#include "himuv/model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace himuv {

struct KlWeights {
    double beta_g = 0.0;
    double beta_l = 0.0;
};

// Zero before kl_ramp_start, linear up to (beta_g_max, beta_l_max) at
// kl_ramp_end, constant afterwards.
KlWeights kl_weight_schedule(std::int64_t step, const TrainingConfig& config);

// Linear warm-up to lr over warmup_steps, then lr * sqrt(warmup / step).
double learning_rate(std::int64_t step, const TrainingConfig& config);

// Terms of the generator objective. `kl` already carries its beta weights.
// Undefined terms count as zero.
struct GeneratorLossTerms {
    Var recon;
    Var kl;
    Var post;
    Var adv;
    Var fm;
};

// recon + kl + gamma * post + adv + delta * fm
Var total_generator_loss(const GeneratorLossTerms& terms, double gamma, double delta);

// One training example in model-ready form.
struct TrainingExample {
    const Utterance* utterance = nullptr;
    NoiseDraw noise;
};

// Every loss of one batch. Means are pooled over all valid elements of the
// batch (equivalent to padded, masked means); per-utterance sums (KL, L_post)
// and per-utterance patch means (adversarial terms) are averaged over utterances.
struct BatchLosses {
    Var total;
    Var recon;
    Var mel;
    Var duration;
    Var pitch;
    Var kl_global;  // unweighted
    Var kl_local;   // unweighted
    Var post;
    Var adv_g;
    Var fm;
    std::vector<ForwardResult> forwards;
};

BatchLosses generator_losses(const Model& model, const std::vector<TrainingExample>& batch, const KlWeights& beta);
// Requires forwards from generator_losses on the same batch; fakes are detached.
Var discriminator_loss(const Model& model, const std::vector<TrainingExample>& batch,
                       const std::vector<ForwardResult>& forwards);

// Global L2 norm of all gradients in the store.
double gradient_norm(const ParameterStore& store);
// Scales gradients so the global norm is at most max_norm. Returns the norm before clipping.
double clip_gradients(ParameterStore& store, double max_norm);

class Adam {
public:
    void step(ParameterStore& store, double lr, const TrainingConfig& config);

    std::int64_t steps = 0;
    std::map<std::string, Matrix> first;
    std::map<std::string, Matrix> second;
};

struct StepMetrics {
    std::int64_t step = 0;
    double l_recon = 0;
    double l_mel = 0;
    double l_kl_g = 0;
    double l_kl_l = 0;
    double l_post = 0;
    double l_adv_g = 0;
    double l_adv_d = 0;
    double l_fm = 0;
    double beta_g = 0;
    double beta_l = 0;
    double grad_norm = 0;
    double l_final = 0;
    double lr = 0;
};

inline constexpr const char* kMetricsHeader =
    "step,l_recon,l_kl_g,l_kl_l,l_post,l_adv_g,l_adv_d,l_fm,beta_g,beta_l,grad_norm";
std::string format_metrics_row(const StepMetrics& m);

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    std::int64_t step = 0;
    Variant variant = Variant::himuv;
    TrainingConfig config;
    PhonemeVocabulary vocab;
    PitchStats stats;
    std::map<std::string, Matrix> generator;
    std::map<std::string, Matrix> discriminator;
    Adam adam_generator;
    Adam adam_discriminator;
    std::string rng_state;
    std::vector<std::uint64_t> data_order;
    std::uint64_t data_cursor = 0;
};

// Single binary file: "HMVCKPT\0", u32 version, u64 JSON header length, JSON
// header, then named f64 tensors. Written atomically.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
// Throws Error(version) on a version mismatch and Error(parse) on corruption.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Rebuilds the model and copies every parameter from the checkpoint.
Model model_from_checkpoint(const Checkpoint& checkpoint);

class Trainer {
public:
    Trainer(const TrainingConfig& config, Variant variant, FeatureCache data);
    // Resumes model, optimiser, data order and random state.
    Trainer(const Checkpoint& checkpoint, FeatureCache data);

    StepMetrics step();
    std::int64_t current_step() const { return step_; }
    const Model& model() const { return model_; }
    Model& model() { return model_; }
    const FeatureCache& data() const { return data_; }
    const TrainingConfig& config() const { return model_.config(); }

    Checkpoint checkpoint() const;
    // Fixed-noise batch of the given utterances, for evaluation and tests.
    std::vector<TrainingExample> examples(const std::vector<std::size_t>& indices, std::mt19937_64& rng) const;

private:
    std::vector<std::size_t> next_batch();

    FeatureCache data_;
    Model model_;
    Adam adam_generator_;
    Adam adam_discriminator_;
    std::mt19937_64 rng_;
    std::int64_t step_ = 0;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

struct TrainOptions {
    std::filesystem::path out_dir;
    std::optional<std::filesystem::path> resume;
    std::function<void(const StepMetrics&)> on_step;
};

// Runs until config.total_steps, appending to out_dir/metrics.csv and writing
// out_dir/ckpt_<step>.bin plus out_dir/latest.bin. Returns the final checkpoint path.
std::filesystem::path train(const TrainingConfig& config, Variant variant, FeatureCache data,
                            const TrainOptions& options);

}  // namespace himuv
