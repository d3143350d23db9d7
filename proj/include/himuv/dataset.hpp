#pragma once

// Corpus ingestion: manifest and alignment parsing, feature extraction and the
// on-disk feature cache.
//
// Cache layout (one directory per corpus):
//   vocab.txt            one phoneme symbol per line; line number = id
//   utterances.txt       `id|PH1 PH2 ...` for every cached utterance
//   stats.json           pitch normalisation statistics + mel config echo
//   <id>.mel.bin         M x 80 log-mel (arrays.hpp format)
//   <id>.dur.bin         N frame counts
//   <id>.pitch.bin       N phoneme-averaged pitch values in Hz

#include "himuv/audio.hpp"
#include "himuv/config.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace himuv {

struct ManifestEntry {
    std::string audio_path;  // relative to the manifest directory
    std::vector<std::string> phonemes;
};

struct CorpusManifest {
    std::filesystem::path root;
    std::vector<ManifestEntry> entries;
    std::int64_t sample_rate = 22050;
};

// `relative/audio/path.wav|PH1 PH2 ...` per line; blank lines ignored.
CorpusManifest parse_manifest(const std::string& text, std::filesystem::path root, std::int64_t sample_rate);
CorpusManifest load_manifest(const std::filesystem::path& path, std::int64_t sample_rate);

// One line of space-separated non-negative frame counts.
std::vector<std::int64_t> parse_alignment(const std::string& text, std::optional<std::size_t> expected_count = {});
std::vector<std::int64_t> load_alignment(const std::filesystem::path& path,
                                         std::optional<std::size_t> expected_count = {});

// One float per line, Hz, 0 = unvoiced.
std::vector<double> load_frame_pitch(const std::filesystem::path& path);

struct ProsodyTargets {
    std::vector<std::int64_t> durations;  // frames per phoneme
    std::vector<double> pitch;            // Hz, phoneme-averaged, 0 = unvoiced
};

class PhonemeVocabulary {
public:
    PhonemeVocabulary() = default;
    explicit PhonemeVocabulary(std::vector<std::string> symbols);

    // Throws Error(input) for unknown symbols.
    std::int64_t id(const std::string& symbol) const;
    const std::string& symbol(std::int64_t id) const;
    std::size_t size() const { return symbols_.size(); }
    const std::vector<std::string>& symbols() const { return symbols_; }
    std::vector<std::int64_t> encode(const std::vector<std::string>& phonemes) const;

    bool operator==(const PhonemeVocabulary& other) const { return symbols_ == other.symbols_; }

private:
    std::vector<std::string> symbols_;
    std::map<std::string, std::int64_t> index_;
};

struct PitchStats {
    double mean = 0.0;
    double sd = 1.0;
    bool normalize = true;
    std::int64_t voiced_phonemes = 0;

    // Unvoiced (0 Hz) phonemes map to 0 in normalised units.
    double normalize_value(double hz) const;
    double denormalize_value(double value) const;
};

// Mean and population SD over voiced (> 0) phoneme pitch values. A zero SD (or
// no voiced phoneme at all) disables normalisation.
PitchStats compute_pitch_stats(const std::vector<std::vector<double>>& phoneme_pitch);

// Reconciles |sum(d) - M| <= tolerance by clipping or repeating the last frame.
// Throws Error(consistency) for larger gaps.
Matrix repair_mel_length(const Matrix& mel, std::span<const std::int64_t> durations, std::int64_t tolerance);
std::vector<double> repair_track_length(std::vector<double> track, std::size_t frames);

struct Utterance {
    std::string id;
    std::vector<std::string> phonemes;
    std::vector<std::int64_t> phoneme_ids;
    Matrix mel;  // M x 80
    ProsodyTargets targets;
    std::vector<double> pitch_normalized;
};

struct FeatureCache {
    std::vector<Utterance> utterances;
    PhonemeVocabulary vocab;
    PitchStats stats;
};

struct PreprocessReport {
    std::size_t extracted = 0;
    std::size_t reused = 0;
    std::vector<std::string> failures;  // "id: reason"
    PitchStats stats;
};

// Extracts features for every manifest entry into out_dir. Existing per-utterance
// files are reused, so an interrupted run can be resumed. Failures are collected
// per utterance id; throws Error(input) only if nothing could be cached.
PreprocessReport preprocess_corpus(const CorpusManifest& manifest, const std::filesystem::path& out_dir,
                                   const TrainingConfig& config);

// Loads the whole cache; throws Error(consistency) if any sum(d) != M.
FeatureCache load_feature_cache(const std::filesystem::path& dir);

PitchStats read_pitch_stats(const std::filesystem::path& stats_json);

}  // namespace himuv
