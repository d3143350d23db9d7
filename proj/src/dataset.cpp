#include "himuv/dataset.hpp"

#include "himuv/arrays.hpp"
#include "himuv/error.hpp"
#include "himuv/pitch.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace himuv {

namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::io, "cannot read " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> split_ws(const std::string& s)
{
    std::istringstream in(s);
    std::vector<std::string> out;
    std::string tok;
    while (in >> tok) {
        out.push_back(tok);
    }
    return out;
}

std::string join(const std::vector<std::string>& parts)
{
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        out += (i ? " " : "") + parts[i];
    }
    return out;
}

std::string utterance_id(const std::string& audio_path)
{
    return fs::path(audio_path).stem().string();
}

fs::path sibling(const fs::path& audio, const char* ext)
{
    fs::path p = audio;
    p.replace_extension(ext);
    return p;
}

}  // namespace

CorpusManifest parse_manifest(const std::string& text, fs::path root, std::int64_t sample_rate)
{
    CorpusManifest m;
    m.root = std::move(root);
    m.sample_rate = sample_rate;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }
        const auto bar = line.find('|');
        if (bar == std::string::npos) {
            throw Error(ErrorKind::parse, "manifest line " + std::to_string(line_no) + ": expected 'path|phonemes'");
        }
        ManifestEntry e;
        e.audio_path = line.substr(0, bar);
        e.phonemes = split_ws(line.substr(bar + 1));
        if (e.audio_path.empty() || e.phonemes.empty()) {
            throw Error(ErrorKind::parse, "manifest line " + std::to_string(line_no) + ": empty path or phoneme string");
        }
        m.entries.push_back(std::move(e));
    }
    return m;
}

CorpusManifest load_manifest(const fs::path& path, std::int64_t sample_rate)
{
    return parse_manifest(read_text(path), path.parent_path(), sample_rate);
}

std::vector<std::int64_t> parse_alignment(const std::string& text, std::optional<std::size_t> expected_count)
{
    std::istringstream in(text);
    std::vector<std::int64_t> out;
    std::string tok;
    while (in >> tok) {
        std::size_t used = 0;
        long long v = 0;
        try {
            v = std::stoll(tok, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != tok.size()) {
            throw Error(ErrorKind::parse, "malformed duration '" + tok + "'");
        }
        if (v < 0) {
            throw Error(ErrorKind::consistency, "negative duration " + tok);
        }
        out.push_back(v);
    }
    if (expected_count && out.size() != *expected_count) {
        throw Error(ErrorKind::consistency, "alignment has " + std::to_string(out.size()) + " entries but " +
                                                std::to_string(*expected_count) + " phonemes");
    }
    return out;
}

std::vector<std::int64_t> load_alignment(const fs::path& path, std::optional<std::size_t> expected_count)
{
    try {
        return parse_alignment(read_text(path), expected_count);
    } catch (const Error& e) {
        throw Error(e.kind(), path.string() + ": " + e.what());
    }
}

std::vector<double> load_frame_pitch(const fs::path& path)
{
    std::istringstream in(read_text(path));
    std::vector<double> out;
    std::string tok;
    while (in >> tok) {
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(tok, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != tok.size() || !std::isfinite(v) || v < 0) {
            throw Error(ErrorKind::parse, path.string() + ": bad pitch value '" + tok + "'");
        }
        out.push_back(v);
    }
    return out;
}

PhonemeVocabulary::PhonemeVocabulary(std::vector<std::string> symbols) : symbols_(std::move(symbols))
{
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
        if (!index_.emplace(symbols_[i], static_cast<std::int64_t>(i)).second) {
            throw Error(ErrorKind::parse, "duplicate phoneme symbol " + symbols_[i]);
        }
    }
}

std::int64_t PhonemeVocabulary::id(const std::string& symbol) const
{
    const auto it = index_.find(symbol);
    if (it == index_.end()) {
        throw Error(ErrorKind::input, "phoneme '" + symbol + "' is not in the vocabulary");
    }
    return it->second;
}

const std::string& PhonemeVocabulary::symbol(std::int64_t id) const
{
    if (id < 0 || static_cast<std::size_t>(id) >= symbols_.size()) {
        throw Error(ErrorKind::input, "phoneme id " + std::to_string(id) + " outside the vocabulary");
    }
    return symbols_[static_cast<std::size_t>(id)];
}

std::vector<std::int64_t> PhonemeVocabulary::encode(const std::vector<std::string>& phonemes) const
{
    std::vector<std::int64_t> ids;
    ids.reserve(phonemes.size());
    for (const auto& p : phonemes) {
        ids.push_back(id(p));
    }
    return ids;
}

double PitchStats::normalize_value(double hz) const
{
    if (hz <= 0) {
        return 0.0;
    }
    return normalize ? (hz - mean) / sd : hz;
}

double PitchStats::denormalize_value(double value) const
{
    return normalize ? value * sd + mean : value;
}

PitchStats compute_pitch_stats(const std::vector<std::vector<double>>& phoneme_pitch)
{
    PitchStats s;
    double sum = 0;
    std::int64_t n = 0;
    for (const auto& u : phoneme_pitch) {
        for (double p : u) {
            if (p > 0) {
                sum += p;
                ++n;
            }
        }
    }
    s.voiced_phonemes = n;
    if (n == 0) {
        s.mean = 0;
        s.sd = 0;
        s.normalize = false;
        return s;
    }
    s.mean = sum / static_cast<double>(n);
    double sq = 0;
    for (const auto& u : phoneme_pitch) {
        for (double p : u) {
            if (p > 0) {
                sq += (p - s.mean) * (p - s.mean);
            }
        }
    }
    s.sd = std::sqrt(sq / static_cast<double>(n));
    s.normalize = s.sd > 0;
    return s;
}

Matrix repair_mel_length(const Matrix& mel, std::span<const std::int64_t> durations, std::int64_t tolerance)
{
    std::int64_t total = 0;
    for (auto d : durations) {
        total += d;
    }
    const std::int64_t frames = mel.rows();
    const std::int64_t gap = total - frames;
    if (gap == 0) {
        return mel;
    }
    if (std::abs(gap) > tolerance || total < 1) {
        throw Error(ErrorKind::consistency, "durations sum to " + std::to_string(total) + " frames but the mel has " +
                                                std::to_string(frames));
    }
    if (gap < 0) {
        return mel.topRows(total);
    }
    Matrix out(total, mel.cols());
    out.topRows(frames) = mel;
    for (std::int64_t r = frames; r < total; ++r) {
        out.row(r) = mel.row(frames - 1);
    }
    return out;
}

std::vector<double> repair_track_length(std::vector<double> track, std::size_t frames)
{
    track.resize(frames, 0.0);
    return track;
}

namespace {

nlohmann::json stats_json(const PitchStats& stats, const TrainingConfig& config, std::size_t utterances)
{
    nlohmann::json j;
    j["pitch_mean"] = stats.mean;
    j["pitch_sd"] = stats.sd;
    j["normalize_pitch"] = stats.normalize;
    j["voiced_phonemes"] = stats.voiced_phonemes;
    j["utterances"] = utterances;
    j["mel"] = {{"sample_rate", config.sample_rate}, {"hop", config.hop},       {"win", config.win},
                {"n_mels", kMelBins},                {"fmin", config.fmin},     {"fmax", config.fmax},
                {"log_floor", config.log_floor},     {"log_base", "e"}};
    return j;
}

// Extracts and writes one utterance; returns phoneme pitch.
std::vector<double> extract_utterance(const ManifestEntry& entry, const fs::path& root, const fs::path& out_dir,
                                      const std::string& id, const TrainingConfig& config)
{
    const fs::path audio = root / entry.audio_path;
    const Waveform wave = read_wav(audio);
    if (wave.sample_rate != config.sample_rate) {
        throw Error(ErrorKind::input, "sample rate " + std::to_string(wave.sample_rate) + " Hz, expected " +
                                          std::to_string(config.sample_rate));
    }
    const auto durations = load_alignment(sibling(audio, ".dur"), entry.phonemes.size());
    const MelSpectrogram mel = extract_mel(wave.samples, config);
    const Matrix repaired = repair_mel_length(mel.frames, durations, config.duration_tolerance);

    std::vector<double> track;
    const fs::path f0_file = sibling(audio, ".f0");
    if (fs::exists(f0_file)) {
        track = load_frame_pitch(f0_file);
        const auto gap = static_cast<std::int64_t>(track.size()) - mel.frames.rows();
        if (std::abs(gap) > config.duration_tolerance) {
            throw Error(ErrorKind::consistency, "frame pitch file has " + std::to_string(track.size()) +
                                                    " frames, mel has " + std::to_string(mel.frames.rows()));
        }
    } else {
        track = track_pitch(wave.samples, config);
    }
    track = repair_track_length(std::move(track), static_cast<std::size_t>(repaired.rows()));
    const std::vector<double> pitch = phoneme_pitch(track, durations);

    Matrix pitch_m(static_cast<Eigen::Index>(pitch.size()), 1);
    for (std::size_t i = 0; i < pitch.size(); ++i) {
        pitch_m(static_cast<Eigen::Index>(i), 0) = pitch[i];
    }
    // The mel file is written last and marks the utterance complete.
    write_int_array(out_dir / (id + ".dur.bin"), durations);
    write_array(out_dir / (id + ".pitch.bin"), pitch_m);
    write_array(out_dir / (id + ".mel.bin"), repaired);
    return pitch;
}

std::vector<double> column(const Matrix& m)
{
    return std::vector<double>(m.data(), m.data() + m.size());
}

}  // namespace

PreprocessReport preprocess_corpus(const CorpusManifest& manifest, const fs::path& out_dir,
                                   const TrainingConfig& config)
{
    fs::create_directories(out_dir);
    std::set<std::string> symbols;
    std::set<std::string> ids;
    for (const auto& e : manifest.entries) {
        symbols.insert(e.phonemes.begin(), e.phonemes.end());
        if (!ids.insert(utterance_id(e.audio_path)).second) {
            throw Error(ErrorKind::consistency, "duplicate utterance id " + utterance_id(e.audio_path));
        }
    }
    PreprocessReport report;
    std::vector<std::vector<double>> pitches;
    std::string index;
    for (const auto& entry : manifest.entries) {
        const std::string id = utterance_id(entry.audio_path);
        const bool cached = fs::exists(out_dir / (id + ".mel.bin")) && fs::exists(out_dir / (id + ".dur.bin")) &&
                            fs::exists(out_dir / (id + ".pitch.bin"));
        try {
            if (cached) {
                pitches.push_back(column(read_array(out_dir / (id + ".pitch.bin"))));
                ++report.reused;
            } else {
                pitches.push_back(extract_utterance(entry, manifest.root, out_dir, id, config));
                ++report.extracted;
            }
            index += id + "|" + join(entry.phonemes) + "\n";
        } catch (const Error& e) {
            report.failures.push_back(id + ": " + e.what());
            spdlog::warn("utterance {} skipped: {}", id, e.what());
        }
    }
    if (pitches.empty()) {
        throw Error(ErrorKind::input, "no utterance could be preprocessed");
    }
    report.stats = compute_pitch_stats(pitches);
    if (!report.stats.normalize) {
        spdlog::warn("corpus pitch SD is 0; pitch normalisation disabled");
    }
    std::string vocab;
    for (const auto& s : symbols) {
        vocab += s + "\n";
    }
    write_file_atomic(out_dir / "vocab.txt", vocab);
    write_file_atomic(out_dir / "utterances.txt", index);
    write_file_atomic(out_dir / "stats.json", stats_json(report.stats, config, pitches.size()).dump(2) + "\n");
    return report;
}

PitchStats read_pitch_stats(const fs::path& stats_json_path)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text(stats_json_path));
        PitchStats s;
        s.mean = j.at("pitch_mean").get<double>();
        s.sd = j.at("pitch_sd").get<double>();
        s.normalize = j.at("normalize_pitch").get<bool>();
        s.voiced_phonemes = j.at("voiced_phonemes").get<std::int64_t>();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::parse, stats_json_path.string() + ": " + e.what());
    }
}

FeatureCache load_feature_cache(const fs::path& dir)
{
    FeatureCache cache;
    cache.vocab = PhonemeVocabulary(split_ws(read_text(dir / "vocab.txt")));
    cache.stats = read_pitch_stats(dir / "stats.json");
    std::istringstream index(read_text(dir / "utterances.txt"));
    std::string line;
    while (std::getline(index, line)) {
        if (line.empty()) {
            continue;
        }
        const auto bar = line.find('|');
        if (bar == std::string::npos) {
            throw Error(ErrorKind::parse, "bad utterances.txt line: " + line);
        }
        Utterance u;
        u.id = line.substr(0, bar);
        u.phonemes = split_ws(line.substr(bar + 1));
        u.phoneme_ids = cache.vocab.encode(u.phonemes);
        u.mel = read_array(dir / (u.id + ".mel.bin"));
        u.targets.durations = read_int_array(dir / (u.id + ".dur.bin"));
        u.targets.pitch = column(read_array(dir / (u.id + ".pitch.bin")));
        std::int64_t total = 0;
        for (auto d : u.targets.durations) {
            total += d;
        }
        if (total != u.mel.rows() || u.targets.durations.size() != u.phonemes.size() ||
            u.targets.pitch.size() != u.phonemes.size() || u.mel.cols() != kMelBins) {
            throw Error(ErrorKind::consistency, "cached utterance " + u.id + " is inconsistent (sum(d)=" +
                                                    std::to_string(total) + ", M=" + std::to_string(u.mel.rows()) + ")");
        }
        for (double p : u.targets.pitch) {
            u.pitch_normalized.push_back(cache.stats.normalize_value(p));
        }
        cache.utterances.push_back(std::move(u));
    }
    return cache;
}

}  // namespace himuv
