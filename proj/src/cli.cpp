#include "himuv/cli.hpp"

#include "himuv/dataset.hpp"
#include "himuv/error.hpp"
#include "himuv/evaluation.hpp"
#include "himuv/inference.hpp"
#include "himuv/toy_corpus.hpp"
#include "himuv/training.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace himuv {

namespace fs = std::filesystem;

namespace {

struct ConfigOptions {
    std::string config_path;
    std::string preset = "default";
    std::vector<std::string> overrides;
};

void add_config_options(CLI::App& cmd, ConfigOptions& opts)
{
    cmd.add_option("--config", opts.config_path, "Config file (key = value per line)");
    cmd.add_option("--preset", opts.preset, "Base values before --config: default or toy")
        ->check(CLI::IsMember({"default", "toy"}));
    cmd.add_option("--set", opts.overrides, "Override one config key, key=value (repeatable)");
}

TrainingConfig resolve_config(const ConfigOptions& opts)
{
    TrainingConfig cfg = opts.preset == "toy" ? toy_config() : TrainingConfig{};
    if (!opts.config_path.empty()) {
        cfg = load_config(opts.config_path, cfg);
    }
    for (const auto& kv : opts.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorKind::usage, "--set expects key=value, got '" + kv + "'");
        }
        set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

bool config_given(const ConfigOptions& opts)
{
    return !opts.config_path.empty() || !opts.overrides.empty() || opts.preset != "default";
}

std::string config_key_listing()
{
    std::ostringstream out;
    const TrainingConfig defaults;
    out << "Config keys (for --config files and --set):\n";
    for (const auto& key : config_keys()) {
        out << "  " << key.name << " = " << key.get(defaults) << "  " << key.help << "\n";
    }
    return out.str();
}

std::vector<std::vector<std::string>> read_sentences(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::io, "cannot open text file " + path.string());
    }
    std::vector<std::vector<std::string>> sentences;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream words(line);
        std::vector<std::string> phonemes;
        std::string w;
        while (words >> w) {
            phonemes.push_back(w);
        }
        if (!phonemes.empty() && phonemes.front().front() != '#') {
            sentences.push_back(std::move(phonemes));
        }
    }
    if (sentences.empty()) {
        throw Error(ErrorKind::input, "text file " + path.string() + " contains no phoneme sequence");
    }
    return sentences;
}

std::string sample_dir_name(std::size_t sentence)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%03zu", sentence);
    return buf;
}

std::string sample_name(std::size_t k)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%03zu", k);
    return buf;
}

void set_log_level(const std::string& level)
{
    const auto parsed = spdlog::level::from_str(level);
    if (parsed == spdlog::level::off && level != "off") {
        throw Error(ErrorKind::usage, "unknown log level '" + level + "'");
    }
    spdlog::set_level(parsed);
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Hierarchical multi-scale variational TTS acoustic model", "himuv"};
    app.require_subcommand(1);
    app.fallthrough();
    app.footer(config_key_listing());
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

    ConfigOptions pre_cfg, train_cfg, syn_cfg, eval_cfg, toy_cfg;

    auto* pre = app.add_subcommand("preprocess", "Extract features for a manifest into a cache directory");
    std::string manifest, cache_out;
    pre->add_option("--manifest", manifest, "Manifest file (path|PH PH ...)")->required();
    pre->add_option("--out-dir", cache_out, "Feature cache directory")->required();
    add_config_options(*pre, pre_cfg);

    auto* train_cmd = app.add_subcommand("train", "Train a model variant on a feature cache");
    std::string variant_name = "himuv", cache_dir, train_out, resume;
    std::optional<std::int64_t> steps;
    train_cmd->add_option("--variant", variant_name, "himuv, gvae, lvae, backbone or backbone_adv")
        ->check(CLI::IsMember({"himuv", "gvae", "lvae", "backbone", "backbone_adv"}));
    train_cmd->add_option("--cache", cache_dir, "Feature cache directory")->required();
    train_cmd->add_option("--out-dir", train_out, "Run directory (metrics.csv, checkpoints)")->required();
    train_cmd->add_option("--resume", resume, "Checkpoint to resume from");
    train_cmd->add_option("--steps", steps, "Shorthand for --set total_steps=N");
    add_config_options(*train_cmd, train_cfg);

    auto* syn = app.add_subcommand("synthesize", "Sample mel spectrograms from a checkpoint");
    std::string checkpoint, text_file, syn_out, mode_name = "full", label = "samples";
    double tau = 1.0;
    std::optional<double> tau_g, tau_l;
    std::uint64_t seed = 0;
    std::size_t n_samples = 1;
    bool wav = false;
    int gl_iters = 32;
    syn->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    syn->add_option("--text-file", text_file, "One phoneme sequence per line")->required();
    syn->add_option("--out-dir", syn_out, "Output directory")->required();
    syn->add_option("--mode", mode_name, "full, global_only, local_only or none")
        ->check(CLI::IsMember({"full", "global_only", "local_only", "none"}));
    syn->add_option("--tau", tau, "Prior temperature")->check(CLI::NonNegativeNumber);
    syn->add_option("--tau-g", tau_g, "Global temperature override")->check(CLI::NonNegativeNumber);
    syn->add_option("--tau-l", tau_l, "Local temperature override")->check(CLI::NonNegativeNumber);
    syn->add_option("--seed", seed, "Seed of sample 0; sample k uses seed + k");
    syn->add_option("--n-samples", n_samples, "Samples per sentence")->check(CLI::PositiveNumber);
    syn->add_option("--label", label, "Model label used as the top-level output directory");
    syn->add_flag("--wav", wav, "Also write a Griffin-Lim WAV per sample");
    syn->add_option("--gl-iters", gl_iters, "Griffin-Lim iterations")->check(CLI::NonNegativeNumber);
    add_config_options(*syn, syn_cfg);

    auto* eval = app.add_subcommand("evaluate", "Diversity statistics and histograms over sample directories");
    std::string samples_dir, eval_out, transcripts;
    EvaluationOptions eval_opts;
    eval->add_option("--samples-dir", samples_dir, "Directory laid out as <label>/<sentence>/<sample>")->required();
    eval->add_option("--out-dir", eval_out, "Output directory (defaults to the samples directory)");
    eval->add_option("--bins", eval_opts.bins, "Histogram bins")->check(CLI::PositiveNumber);
    eval->add_option("--gl-iters", eval_opts.griffin_lim_iterations, "Griffin-Lim iterations for mel inputs")
        ->check(CLI::NonNegativeNumber);
    eval->add_option("--transcripts", transcripts, "Externally produced transcripts, copied for bookkeeping");
    add_config_options(*eval, eval_cfg);

    auto* inspect = app.add_subcommand("inspect-checkpoint", "Print checkpoint metadata and parameter names");
    std::string inspect_path;
    ConfigOptions inspect_cfg;
    inspect->add_option("--checkpoint", inspect_path, "Checkpoint file")->required();
    add_config_options(*inspect, inspect_cfg);

    auto* toy = app.add_subcommand("make-toy-corpus", "Write a small synthetic corpus with alignments");
    std::string toy_out;
    ToyCorpusOptions toy_opts;
    toy->add_option("--out-dir", toy_out, "Corpus directory")->required();
    toy->add_option("--utterances", toy_opts.utterances, "Number of utterances")->check(CLI::PositiveNumber);
    toy->add_option("--seed", toy_opts.seed, "Corpus seed");
    add_config_options(*toy, toy_cfg);

    try {
        try {
            std::vector<std::string> reversed(args.rbegin(), args.rend());
            app.parse(reversed);
        } catch (const CLI::CallForHelp& e) {
            return app.exit(e, out, err);
        } catch (const CLI::CallForAllHelp& e) {
            return app.exit(e, out, err);
        } catch (const CLI::ParseError& e) {
            throw Error(ErrorKind::usage, e.what());
        }
        set_log_level(log_level);

        if (*pre) {
            const TrainingConfig cfg = resolve_config(pre_cfg);
            const CorpusManifest m = load_manifest(manifest, cfg.sample_rate);
            const PreprocessReport report = preprocess_corpus(m, cache_out, cfg);
            save_config(cfg, fs::path(cache_out) / "config.txt");
            out << "extracted " << report.extracted << " reused " << report.reused << " failed "
                << report.failures.size() << "\n";
            for (const auto& f : report.failures) {
                out << "failed " << f << "\n";
            }
        } else if (*train_cmd) {
            TrainingConfig cfg = resolve_config(train_cfg);
            if (steps) {
                set_config_value(cfg, "total_steps", std::to_string(*steps));
                cfg.validate();
            }
            TrainOptions opts;
            opts.out_dir = train_out;
            if (!resume.empty()) {
                opts.resume = fs::path(resume);
            }
            const fs::path latest = train(cfg, parse_variant(variant_name), load_feature_cache(cache_dir), opts);
            out << "checkpoint " << latest.string() << "\n";
        } else if (*syn) {
            const Checkpoint ckpt = load_checkpoint(checkpoint);
            if (config_given(syn_cfg)) {
                spdlog::warn("synthesize uses the checkpoint's config; --config/--preset/--set are ignored");
            }
            const Synthesizer synth(ckpt);
            const auto sentences = read_sentences(text_file);
            SamplingSpec spec;
            spec.mode = parse_sampling_mode(mode_name);
            spec.tau = tau;
            spec.tau_global = tau_g;
            spec.tau_local = tau_l;
            const fs::path root = fs::path(syn_out) / label;
            for (std::size_t s = 0; s < sentences.size(); ++s) {
                for (std::size_t k = 0; k < n_samples; ++k) {
                    spec.seed = seed + k;
                    const SynthesisResult r = synth.synthesize(sentences[s], spec);
                    write_synthesis(r, sentences[s], root / sample_dir_name(s) / sample_name(k),
                                    wav ? std::optional<int>(gl_iters) : std::nullopt, ckpt.config);
                }
            }
            save_config(ckpt.config, fs::path(syn_out) / "config.txt");
            out << "wrote " << sentences.size() * n_samples << " samples under " << root.string() << "\n";
        } else if (*eval) {
            const TrainingConfig cfg = resolve_config(eval_cfg);
            const fs::path dest = eval_out.empty() ? fs::path(samples_dir) : fs::path(eval_out);
            const auto results = evaluate_directory(samples_dir, dest, eval_opts, cfg);
            if (!transcripts.empty()) {
                fs::create_directories(dest);
                fs::copy_file(transcripts, dest / "transcripts.txt", fs::copy_options::overwrite_existing);
            }
            save_config(cfg, dest / "config.txt");
            for (const auto& [name, s] : results) {
                out << name << " sigma_l=" << s.sigma_l << " sigma_e=" << s.sigma_e << " sigma_p=" << s.sigma_p
                    << " sigma_sigma_p=" << s.sigma_sigma_p << " n=" << s.n_samples << "\n";
            }
        } else if (*inspect) {
            const Checkpoint c = load_checkpoint(inspect_path);
            out << "version " << c.version << "\n";
            out << "variant " << to_string(c.variant) << "\n";
            out << "step " << c.step << "\n";
            out << "vocab " << c.vocab.size() << "\n";
            for (const auto& [name, m] : c.generator) {
                out << "gen/" << name << " " << m.rows() << "x" << m.cols() << "\n";
            }
            for (const auto& [name, m] : c.discriminator) {
                out << "disc/" << name << " " << m.rows() << "x" << m.cols() << "\n";
            }
            out << "config\n" << format_config(c.config);
        } else if (*toy) {
            const TrainingConfig cfg = resolve_config(toy_cfg);
            const fs::path m = write_toy_corpus(toy_out, toy_opts, cfg);
            out << "manifest " << m.string() << "\n";
        }
        return 0;
    } catch (const Error& e) {
        err << "error kind=" << to_string(e.kind()) << " code=" << e.exit_code() << " message=" << std::quoted(e.what())
            << "\n";
        return e.exit_code();
    } catch (const fs::filesystem_error& e) {
        err << "error kind=io code=" << static_cast<int>(ErrorKind::io) << " message=" << std::quoted(e.what())
            << "\n";
        return static_cast<int>(ErrorKind::io);
    } catch (const std::exception& e) {
        err << "error kind=internal code=1 message=" << std::quoted(e.what()) << "\n";
        return 1;
    }
}

int cli_main(int argc, char** argv)
{
    std::vector<std::string> args(argv + 1, argv + argc);
    return cli_main(args, std::cout, std::cerr);
}

}  // namespace himuv
