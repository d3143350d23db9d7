#include "himuv/adversarial.hpp"
#include "himuv/error.hpp"
#include "himuv/inference.hpp"
#include "himuv/training.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

using namespace himuv;
namespace fs = std::filesystem;

namespace {

template <class F>
ErrorKind kind_of(F&& f)
{
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorKind::usage;
}

FeatureCache small_cache()
{
    return test::synthetic_cache(4, 5, 3, 21);
}

std::vector<std::string> read_lines(const fs::path& path)
{
    std::ifstream in(path);
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

bool all_zero_grads(const ParameterStore& store, const std::string& except_prefix = "\x01")
{
    for (const auto& [name, p] : store.all()) {
        if (name.rfind(except_prefix, 0) == 0) continue;
        if (!p.grad().isZero(0.0)) return false;
    }
    return true;
}

bool some_nonzero_grad(const ParameterStore& store, const std::string& prefix)
{
    for (const auto& [name, p] : store.all()) {
        if (name.rfind(prefix, 0) == 0 && !p.grad().isZero(0.0)) return true;
    }
    return false;
}

void expect_same_tensors(const std::map<std::string, Matrix>& a, const ParameterStore& b)
{
    ASSERT_EQ(a.size(), b.all().size());
    for (const auto& [name, p] : b.all()) {
        ASSERT_TRUE(a.count(name)) << name;
        EXPECT_EQ(a.at(name), p.value()) << name;
    }
}

}  // namespace

TEST(GradientClipping, RescalesToTheGlobalNorm)
{
    ParameterStore store;
    Var a = store.add("a", Matrix::Zero(1, 1));
    Var b = store.add("b", Matrix::Zero(1, 1));
    ag::add(ag::scale(a, 3.0), ag::scale(b, 4.0)).backward();
    EXPECT_DOUBLE_EQ(gradient_norm(store), 5.0);
    EXPECT_DOUBLE_EQ(clip_gradients(store, 1.0), 5.0);
    EXPECT_NEAR(a.grad()(0, 0), 0.6, 1e-15);
    EXPECT_NEAR(b.grad()(0, 0), 0.8, 1e-15);
    EXPECT_DOUBLE_EQ(clip_gradients(store, 10.0), 1.0);
    EXPECT_NEAR(b.grad()(0, 0), 0.8, 1e-15);
}

TEST(AdamOptimizer, MatchesHandRolledBiasCorrectedUpdate)
{
    TrainingConfig cfg;
    cfg.weight_decay = 0.1;
    ParameterStore store;
    Var w = store.add("w", Matrix::Constant(1, 1, 2.0));
    Adam adam;
    double x = 2.0, m = 0.0, v = 0.0;
    const double lr = 0.01;
    for (int t = 1; t <= 3; ++t) {
        store.zero_grad();
        ag::square(w).backward();  // grad 2w
        adam.step(store, lr, cfg);

        const double g = 2.0 * x;
        m = cfg.adam_beta1 * m + (1 - cfg.adam_beta1) * g;
        v = cfg.adam_beta2 * v + (1 - cfg.adam_beta2) * g * g;
        const double mh = m / (1 - std::pow(cfg.adam_beta1, t));
        const double vh = v / (1 - std::pow(cfg.adam_beta2, t));
        x -= lr * cfg.weight_decay * x;
        x -= lr * mh / (std::sqrt(vh) + cfg.adam_eps);
        EXPECT_NEAR(w.value()(0, 0), x, 1e-14) << "step " << t;
    }
}

TEST(Metrics, RowFormatAndHeader)
{
    EXPECT_STREQ(kMetricsHeader, "step,l_recon,l_kl_g,l_kl_l,l_post,l_adv_g,l_adv_d,l_fm,beta_g,beta_l,grad_norm");
    StepMetrics m;
    m.step = 7;
    m.l_recon = 0.1;
    m.grad_norm = 2.5;
    const std::string row = format_metrics_row(m);
    EXPECT_EQ(row.rfind("7,0.10000000000000001,", 0), 0u) << row;
    EXPECT_EQ(std::count(row.begin(), row.end(), ','), 10);
}

TEST(Routing, PosteriorMeanLossOnlyReachesThePredictor)
{
    const TrainingConfig cfg = test::tiny_config();
    Trainer trainer(cfg, Variant::himuv, small_cache());
    std::mt19937_64 rng(1);
    const auto batch = trainer.examples({0, 1}, rng);
    BatchLosses losses = generator_losses(trainer.model(), batch, {1e-3, 1e-2});
    ag::scale(losses.post, cfg.gamma).backward();
    ParameterStore& gen = trainer.model().generator_params();
    EXPECT_TRUE(some_nonzero_grad(gen, "himuv.posterior_mean."));
    EXPECT_TRUE(all_zero_grads(gen, "himuv.posterior_mean."));
    EXPECT_TRUE(all_zero_grads(trainer.model().discriminator_params()));
}

TEST(Routing, DiscriminatorLossLeavesTheGeneratorUntouched)
{
    Trainer trainer(test::tiny_config(), Variant::himuv, small_cache());
    std::mt19937_64 rng(2);
    const auto batch = trainer.examples({0, 1}, rng);
    const BatchLosses losses = generator_losses(trainer.model(), batch, {});
    trainer.model().generator_params().zero_grad();
    discriminator_loss(trainer.model(), batch, losses.forwards).backward();
    EXPECT_TRUE(all_zero_grads(trainer.model().generator_params()));
    EXPECT_TRUE(some_nonzero_grad(trainer.model().discriminator_params(), "discriminator."));
}

TEST(Routing, AdversarialGeneratorTermsReachTheDecoder)
{
    Trainer trainer(test::tiny_config(), Variant::himuv, small_cache());
    std::mt19937_64 rng(3);
    const auto batch = trainer.examples({2, 3}, rng);
    const BatchLosses losses = generator_losses(trainer.model(), batch, {});
    ag::add(losses.adv_g, losses.fm).backward();
    EXPECT_TRUE(some_nonzero_grad(trainer.model().generator_params(), "decoder."));
    EXPECT_FALSE(some_nonzero_grad(trainer.model().generator_params(), "himuv.posterior_mean."));
}

TEST(Routing, KlTermDoesNotReachTheDecoderOrPredictors)
{
    Trainer trainer(test::tiny_config(), Variant::himuv, small_cache());
    std::mt19937_64 rng(4);
    const auto batch = trainer.examples({0, 3}, rng);
    const BatchLosses losses = generator_losses(trainer.model(), batch, {});
    ag::add(losses.kl_global, losses.kl_local).backward();
    const ParameterStore& gen = trainer.model().generator_params();
    EXPECT_TRUE(some_nonzero_grad(gen, "himuv.global_"));
    EXPECT_TRUE(some_nonzero_grad(gen, "himuv.local_"));
    for (const char* untouched : {"decoder.", "duration_predictor.", "pitch_predictor.", "pitch_embedding",
                                  "himuv.posterior_mean."}) {
        EXPECT_FALSE(some_nonzero_grad(gen, untouched)) << untouched;
    }
}

TEST(DiscriminatorSanity, SeparableSetIsLearnedWithinFiveHundredSteps)
{
    const TrainingConfig cfg = test::tiny_config();
    ParameterStore store(4);
    const Discriminator disc(store, cfg);
    std::mt19937_64 rng(5);
    const Var real = ag::constant(test::random_matrix(16, kMelBins, rng, 0.3).array() + 1.0);
    const Var fake = ag::constant(test::random_matrix(16, kMelBins, rng, 0.3).array() - 1.0);
    Adam adam;
    double loss = 1e9;
    for (int step = 0; step < 500 && loss >= 0.1; ++step) {
        store.zero_grad();
        Var l = adv_loss_d(disc(real).score, disc(fake).score);
        loss = l.item();
        l.backward();
        adam.step(store, 0.002, cfg);
    }
    EXPECT_LT(loss, 0.1);
}

TEST(Trainer, BackboneLogsZeroLatentTerms)
{
    TrainingConfig cfg = test::tiny_config();
    Trainer trainer(cfg, Variant::backbone, small_cache());
    for (int i = 0; i < 3; ++i) {
        const StepMetrics m = trainer.step();
        EXPECT_EQ(m.l_kl_g, 0.0);
        EXPECT_EQ(m.l_kl_l, 0.0);
        EXPECT_EQ(m.l_post, 0.0);
        EXPECT_EQ(m.l_adv_g, 0.0);
        EXPECT_EQ(m.l_adv_d, 0.0);
        EXPECT_GT(m.l_recon, 0.0);
        EXPECT_EQ(m.step, i);
    }
    EXPECT_EQ(trainer.current_step(), 3);
}

TEST(Trainer, RecordsScheduleAndClipsGradients)
{
    TrainingConfig cfg = test::tiny_config();
    cfg.kl_ramp_start = 1;
    cfg.kl_ramp_end = 3;
    Trainer trainer(cfg, Variant::himuv, small_cache());
    const StepMetrics s0 = trainer.step();
    const StepMetrics s1 = trainer.step();
    const StepMetrics s2 = trainer.step();
    EXPECT_EQ(s0.beta_l, 0.0);
    EXPECT_EQ(s1.beta_l, 0.0);
    EXPECT_NEAR(s2.beta_l, cfg.beta_l_max / 2, 1e-18);
    EXPECT_GT(s2.l_kl_g, 0.0);
    EXPECT_GT(s2.l_adv_d, 0.0);
    EXPECT_GT(s0.grad_norm, 0.0);
}

TEST(Trainer, NonFiniteLossIsANumericError)
{
    Trainer trainer(test::tiny_config(), Variant::himuv, small_cache());
    trainer.model().generator_params().get("decoder.out_proj.b").mutable_value()(0, 0) =
        std::numeric_limits<double>::quiet_NaN();
    EXPECT_EQ(kind_of([&] { trainer.step(); }), ErrorKind::numeric);
}

TEST(Checkpoint, RoundTripIsBitExact)
{
    test::TempDir dir("ckpt");
    Trainer trainer(test::tiny_config(), Variant::himuv, small_cache());
    trainer.step();
    trainer.step();
    const Checkpoint saved = trainer.checkpoint();
    save_checkpoint(saved, dir.path() / "a.bin");
    const Checkpoint loaded = load_checkpoint(dir.path() / "a.bin");
    EXPECT_EQ(loaded.step, 2);
    EXPECT_EQ(loaded.variant, Variant::himuv);
    EXPECT_EQ(loaded.vocab, saved.vocab);
    EXPECT_EQ(loaded.stats.mean, saved.stats.mean);
    EXPECT_EQ(loaded.config.d_model, saved.config.d_model);
    EXPECT_EQ(loaded.rng_state, saved.rng_state);
    EXPECT_EQ(loaded.data_order, saved.data_order);
    EXPECT_EQ(loaded.data_cursor, saved.data_cursor);
    EXPECT_EQ(loaded.adam_generator.steps, 2);
    EXPECT_EQ(loaded.adam_generator.first, saved.adam_generator.first);
    EXPECT_EQ(loaded.adam_discriminator.second, saved.adam_discriminator.second);
    const Model model = model_from_checkpoint(loaded);
    expect_same_tensors(saved.generator, model.generator_params());
    expect_same_tensors(saved.discriminator, model.discriminator_params());
}

TEST(Checkpoint, ZeroTemperatureSynthesisIsBitIdenticalAfterReload)
{
    test::TempDir dir("ckpt_tau0");
    Trainer trainer(test::tiny_config(), Variant::himuv, small_cache());
    trainer.step();
    // An untrained predictor rounds every duration to zero; start from about 3 frames.
    trainer.model().generator_params().get("duration_predictor.proj.b").mutable_value()(0, 0) = std::log(4.0);
    save_checkpoint(trainer.checkpoint(), dir.path() / "a.bin");
    const Model reloaded = model_from_checkpoint(load_checkpoint(dir.path() / "a.bin"));
    SamplingSpec spec;
    spec.tau = 0.0;
    const std::vector<std::int64_t> ids = {0, 1, 2, 3};
    const SynthesisResult a = synthesize(trainer.model(), trainer.data().stats, ids, spec);
    const SynthesisResult b = synthesize(reloaded, trainer.data().stats, ids, spec);
    EXPECT_EQ(a.mel.frames, b.mel.frames);
    EXPECT_EQ(a.durations, b.durations);
}

TEST(Checkpoint, CorruptionAndVersionErrors)
{
    test::TempDir dir("ckpt_bad");
    Trainer trainer(test::tiny_config(), Variant::backbone, small_cache());
    const fs::path good = dir.path() / "good.bin";
    save_checkpoint(trainer.checkpoint(), good);
    std::string bytes;
    {
        std::ifstream in(good, std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    const auto write = [&](const std::string& name, const std::string& content) {
        std::ofstream(dir.path() / name, std::ios::binary) << content;
        return dir.path() / name;
    };
    std::string versioned = bytes;
    versioned[8] = 2;  // little-endian u32 right after the 8-byte magic
    EXPECT_EQ(kind_of([&] { load_checkpoint(write("v2.bin", versioned)); }), ErrorKind::version);
    std::string magic = bytes;
    magic[0] = 'X';
    EXPECT_EQ(kind_of([&] { load_checkpoint(write("magic.bin", magic)); }), ErrorKind::parse);
    EXPECT_EQ(kind_of([&] { load_checkpoint(write("short.bin", bytes.substr(0, bytes.size() - 9))); }),
              ErrorKind::parse);
    EXPECT_EQ(kind_of([&] { load_checkpoint(write("long.bin", bytes + "x")); }), ErrorKind::parse);
    EXPECT_EQ(kind_of([&] { load_checkpoint(dir.path() / "missing.bin"); }), ErrorKind::io);
}

TEST(Checkpoint, MissingTensorIsAConsistencyError)
{
    Trainer trainer(test::tiny_config(), Variant::backbone, small_cache());
    Checkpoint c = trainer.checkpoint();
    c.generator.erase(c.generator.begin());
    EXPECT_EQ(kind_of([&] { model_from_checkpoint(c); }), ErrorKind::consistency);
    Checkpoint wrong = trainer.checkpoint();
    wrong.generator.begin()->second = Matrix::Zero(1, 1);
    EXPECT_EQ(kind_of([&] { model_from_checkpoint(wrong); }), ErrorKind::consistency);
}

TEST(Resume, SplitRunMatchesUninterruptedRun)
{
    test::TempDir dir("resume");
    const TrainingConfig cfg = test::tiny_config();
    Trainer straight(cfg, Variant::himuv, small_cache());
    std::vector<StepMetrics> expected;
    for (int i = 0; i < 6; ++i) expected.push_back(straight.step());

    Trainer first(cfg, Variant::himuv, small_cache());
    for (int i = 0; i < 3; ++i) first.step();
    save_checkpoint(first.checkpoint(), dir.path() / "mid.bin");
    Trainer second(load_checkpoint(dir.path() / "mid.bin"), small_cache());
    for (int i = 3; i < 6; ++i) {
        const StepMetrics m = second.step();
        EXPECT_EQ(m.step, expected[static_cast<std::size_t>(i)].step);
        EXPECT_EQ(m.l_final, expected[static_cast<std::size_t>(i)].l_final) << "step " << i;
        EXPECT_EQ(m.grad_norm, expected[static_cast<std::size_t>(i)].grad_norm) << "step " << i;
    }
    expect_same_tensors(straight.checkpoint().generator, second.model().generator_params());
}

TEST(Resume, VocabularyMismatchIsRejected)
{
    Trainer trainer(test::tiny_config(), Variant::backbone, small_cache());
    EXPECT_EQ(kind_of([&] { Trainer(trainer.checkpoint(), test::synthetic_cache(4, 5, 3, 21, 7)); }),
              ErrorKind::consistency);
}

TEST(TrainLoop, WritesMetricsAndCheckpointsAndResumes)
{
    test::TempDir dir("loop");
    TrainingConfig cfg = test::tiny_config();
    cfg.total_steps = 4;
    cfg.kl_ramp_end = 4;
    cfg.checkpoint_every = 2;
    TrainOptions opts;
    opts.out_dir = dir.path();
    int callbacks = 0;
    opts.on_step = [&](const StepMetrics&) { ++callbacks; };
    const fs::path latest = train(cfg, Variant::gvae, small_cache(), opts);
    EXPECT_EQ(callbacks, 4);
    EXPECT_EQ(latest, dir.path() / "latest.bin");
    EXPECT_TRUE(fs::exists(dir.path() / "ckpt_0000002.bin"));
    EXPECT_TRUE(fs::exists(dir.path() / "ckpt_0000004.bin"));
    EXPECT_TRUE(fs::exists(dir.path() / "config.txt"));
    auto lines = read_lines(dir.path() / "metrics.csv");
    ASSERT_EQ(lines.size(), 5u);
    EXPECT_EQ(lines[0], kMetricsHeader);
    EXPECT_EQ(lines[4].rfind("3,", 0), 0u);

    // Resuming from step 2 rewrites rows 2 and 3 identically and adds 4 and 5.
    const auto before = lines;
    cfg.total_steps = 6;
    opts.resume = dir.path() / "ckpt_0000002.bin";
    train(cfg, Variant::gvae, small_cache(), opts);
    lines = read_lines(dir.path() / "metrics.csv");
    ASSERT_EQ(lines.size(), 7u);
    for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(lines[i], before[i]) << i;
    EXPECT_EQ(load_checkpoint(latest).step, 6);

    opts.resume = dir.path() / "ckpt_0000002.bin";
    EXPECT_EQ(kind_of([&] { train(cfg, Variant::himuv, small_cache(), opts); }), ErrorKind::consistency);
}
