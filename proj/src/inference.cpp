#include "himuv/inference.hpp"

#include "himuv/arrays.hpp"
#include "himuv/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>

namespace himuv {

namespace fs = std::filesystem;
using nlohmann::json;

SamplingMode parse_sampling_mode(std::string_view name)
{
    if (name == "full") return SamplingMode::full;
    if (name == "global_only") return SamplingMode::global_only;
    if (name == "local_only") return SamplingMode::local_only;
    if (name == "none") return SamplingMode::none;
    throw Error(ErrorKind::usage, "unknown sampling mode '" + std::string(name) + "'");
}

const char* to_string(SamplingMode mode)
{
    switch (mode) {
    case SamplingMode::full: return "full";
    case SamplingMode::global_only: return "global_only";
    case SamplingMode::local_only: return "local_only";
    case SamplingMode::none: return "none";
    }
    return "unknown";
}

const char* to_string(LatentSource source)
{
    switch (source) {
    case LatentSource::absent: return "absent";
    case LatentSource::sampled: return "sampled";
    case LatentSource::prior_mean: return "prior_mean";
    case LatentSource::fixed: return "fixed";
    }
    return "unknown";
}

double SamplingSpec::tau_g() const
{
    if (mode == SamplingMode::full || mode == SamplingMode::global_only) {
        return tau_global.value_or(tau);
    }
    return 0.0;
}

double SamplingSpec::tau_l() const
{
    if (mode == SamplingMode::full || mode == SamplingMode::local_only) {
        return tau_local.value_or(tau);
    }
    return 0.0;
}

namespace {

Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = normal(rng);
    }
    return m;
}

void check_shape(const std::optional<Matrix>& m, Eigen::Index rows, Eigen::Index cols, bool present, const char* name)
{
    if (!m) {
        return;
    }
    if (!present) {
        throw Error(ErrorKind::input, std::string(name) + " was given but this variant has no such latent");
    }
    if (m->rows() != rows || m->cols() != cols) {
        throw Error(ErrorKind::input, std::string(name) + " must be " + std::to_string(rows) + "x" +
                                          std::to_string(cols) + ", got " + std::to_string(m->rows()) + "x" +
                                          std::to_string(m->cols()));
    }
}

}  // namespace

PriorSample sample_prior(const Model& model, const Var& text_hidden, const SamplingSpec& spec, std::mt19937_64& rng)
{
    const double tau_g = spec.tau_g();
    const double tau_l = spec.tau_l();
    if (!(spec.tau >= 0) || !(tau_g >= 0) || !(tau_l >= 0)) {
        throw Error(ErrorKind::input, "temperatures must be non-negative");
    }
    const VariantSpec& v = model.spec();
    const TrainingConfig& cfg = model.config();
    const Eigen::Index n = text_hidden.rows();
    check_shape(spec.fixed_z_g, 1, cfg.latent_global, v.global, "fixed_z_g");
    check_shape(spec.fixed_z_l, n, cfg.latent_local, v.local, "fixed_z_l");

    const Matrix eps_g = v.global ? standard_normal(1, cfg.latent_global, rng) : Matrix();
    const Matrix eps_l = v.local ? standard_normal(n, cfg.latent_local, rng) : Matrix();

    PriorSample out;
    out.audit.tau_g = tau_g;
    out.audit.tau_l = tau_l;
    Var z_g;
    if (v.global) {
        if (spec.fixed_z_g) {
            out.audit.z_g = *spec.fixed_z_g;
            out.audit.global_source = LatentSource::fixed;
        } else {
            out.audit.z_g = tau_g * eps_g;
            out.audit.global_source = tau_g > 0 ? LatentSource::sampled : LatentSource::prior_mean;
        }
        z_g = ag::constant(out.audit.z_g);
    }
    Var z_l;
    if (v.local) {
        if (spec.mode == SamplingMode::global_only && !spec.fixed_z_l) {
            // The frozen local scale must not follow the sampled z_g, so its
            // prior mean is taken at the global prior mean (or the fixed z_g).
            Var frozen_g;
            if (v.global) {
                frozen_g = ag::constant(spec.fixed_z_g ? *spec.fixed_z_g : Matrix::Zero(1, cfg.latent_global));
            }
            out.audit.mu_hat_l = model.predict_posterior_mean(model.local_hidden(text_hidden, frozen_g)).value();
        } else {
            out.audit.mu_hat_l = model.predict_posterior_mean(model.local_hidden(text_hidden, z_g)).value();
        }
        if (spec.fixed_z_l) {
            out.audit.z_l = *spec.fixed_z_l;
            out.audit.local_source = LatentSource::fixed;
        } else {
            out.audit.z_l = out.audit.mu_hat_l + tau_l * eps_l;
            out.audit.local_source = tau_l > 0 ? LatentSource::sampled : LatentSource::prior_mean;
        }
        z_l = ag::constant(out.audit.z_l);
    }
    out.prosody = assemble_prosody(z_g, z_l, n);
    return out;
}

PriorSample sample_prior(const Model& model, const Var& text_hidden, const SamplingSpec& spec)
{
    std::mt19937_64 rng(spec.seed);
    return sample_prior(model, text_hidden, spec, rng);
}

SynthesisResult synthesize(const Model& model, const PitchStats& stats, std::span<const std::int64_t> phonemes,
                           const SamplingSpec& spec)
{
    ag::NoGradGuard guard;
    const TrainingConfig& cfg = model.config();
    const Var text_hidden = model.encode_text(phonemes);
    PriorSample prior = sample_prior(model, text_hidden, spec);
    const Var hz = model.with_prosody(text_hidden, prior.prosody);

    SynthesisResult r;
    r.spec = spec;
    r.audit = std::move(prior.audit);
    r.durations = log_domain_to_duration(model.predict_log_duration(hz).value());
    if (std::all_of(r.durations.begin(), r.durations.end(), [](std::int64_t d) { return d == 0; })) {
        throw Error(ErrorKind::degenerate, "every predicted duration rounds to zero frames");
    }
    const Var pitch = model.predict_pitch(hz);
    for (Eigen::Index i = 0; i < pitch.rows(); ++i) {
        const double p = pitch.value()(i, 0);
        r.pitch_normalized.push_back(p);
        r.pitch_hz.push_back(stats.denormalize_value(p));
    }
    r.mel.frames = model.decode(hz, pitch, r.durations).value();
    r.mel.hop = cfg.hop;
    r.mel.win = cfg.win;
    r.mel.sample_rate = cfg.sample_rate;
    return r;
}

Synthesizer::Synthesizer(const Checkpoint& checkpoint)
    : model_(model_from_checkpoint(checkpoint)), vocab_(checkpoint.vocab), stats_(checkpoint.stats)
{
}

Synthesizer::Synthesizer(const fs::path& checkpoint_path) : Synthesizer(load_checkpoint(checkpoint_path)) {}

SynthesisResult Synthesizer::synthesize(const std::vector<std::string>& phonemes, const SamplingSpec& spec) const
{
    const std::vector<std::int64_t> ids = vocab_.encode(phonemes);
    return himuv::synthesize(model_, stats_, ids, spec);
}

namespace {

json matrix_json(const Matrix& m)
{
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        std::vector<double> row(m.cols());
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            row[static_cast<std::size_t>(c)] = m(r, c);
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace

void write_synthesis(const SynthesisResult& result, const std::vector<std::string>& phonemes, const fs::path& stem,
                     std::optional<int> wav_iterations, const TrainingConfig& config)
{
    if (stem.has_parent_path()) {
        fs::create_directories(stem.parent_path());
    }
    write_array(fs::path(stem.string() + ".mel.bin"), result.mel.frames);
    json j;
    j["frame_count"] = result.mel.frame_count();
    j["hop"] = result.mel.hop;
    j["win"] = result.mel.win;
    j["sample_rate"] = result.mel.sample_rate;
    j["phonemes"] = phonemes;
    j["durations"] = result.durations;
    j["pitch_hz"] = result.pitch_hz;
    j["pitch_normalized"] = result.pitch_normalized;
    j["mode"] = to_string(result.spec.mode);
    j["tau"] = result.spec.tau;
    j["seed"] = result.spec.seed;
    j["z"] = {
        {"tau_g", result.audit.tau_g},
        {"tau_l", result.audit.tau_l},
        {"global_source", to_string(result.audit.global_source)},
        {"local_source", to_string(result.audit.local_source)},
        {"z_g", matrix_json(result.audit.z_g)},
        {"z_l", matrix_json(result.audit.z_l)},
        {"mu_hat_l", matrix_json(result.audit.mu_hat_l)},
    };
    write_file_atomic(fs::path(stem.string() + ".json"), j.dump(2) + "\n");
    if (wav_iterations) {
        const std::vector<double> audio = invert_mel(result.mel, *wav_iterations, config);
        write_wav(fs::path(stem.string() + ".wav"), audio, result.mel.sample_rate);
    }
}

SynthesisSidecar read_sidecar(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::io, "cannot open " + path.string());
    }
    try {
        const json j = json::parse(in);
        SynthesisSidecar s;
        s.frame_count = j.at("frame_count").get<std::int64_t>();
        s.hop = j.at("hop").get<std::int64_t>();
        s.win = j.value("win", std::int64_t{1024});
        s.sample_rate = j.at("sample_rate").get<std::int64_t>();
        s.durations = j.at("durations").get<std::vector<std::int64_t>>();
        s.pitch_hz = j.at("pitch_hz").get<std::vector<double>>();
        if (s.durations.size() != s.pitch_hz.size()) {
            throw Error(ErrorKind::consistency, path.string() + ": durations and pitch_hz differ in length");
        }
        return s;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::parse, path.string() + ": " + e.what());
    }
}

}  // namespace himuv
