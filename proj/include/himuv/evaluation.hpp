#pragma once

// Sample-diversity statistics and prosody histograms.
//
// Per utterance: length (s), average energy (dB), average pitch and pitch SD
// over voiced frames (Hz). Per sentence: sample SD (ddof = 1) of each feature
// over its samples. Reported values are unweighted means over sentences.

#include "himuv/audio.hpp"
#include "himuv/config.hpp"
#include "himuv/inference.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace himuv {

struct UtteranceFeatures {
    double length_s = 0.0;
    double avg_energy_db = 0.0;
    std::optional<double> avg_pitch_hz;  // unset when no frame is voiced
    std::optional<double> pitch_sd_hz;   // unset with fewer than two voiced frames
};

// Mean over hop-sized blocks of 20 log10(RMS + 1e-9).
double average_energy_db(std::span<const double> samples, std::int64_t hop);

// Mean and sample SD of the voiced (> 0) frames.
void summarize_pitch(std::span<const double> frame_pitch, UtteranceFeatures& out);

UtteranceFeatures features_from_audio(std::span<const double> samples, const TrainingConfig& config);

// Features of a synthesised mel: length from M * hop, energy from a Griffin-Lim
// waveform and pitch from the predicted phoneme pitch expanded by the durations.
UtteranceFeatures features_from_mel(const MelSpectrogram& mel, const SynthesisSidecar& sidecar,
                                    int griffin_lim_iterations, const TrainingConfig& config);

// Welford running mean / sample variance.
class RunningStats {
public:
    void add(double x);
    std::size_t count() const { return n_; }
    double mean() const { return mean_; }
    // Sample SD (ddof = 1); requires count() >= 2.
    double sd() const;

private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

struct SentenceSamples {
    std::string sentence;
    std::vector<UtteranceFeatures> samples;
};

struct SentenceStats {
    std::string sentence;
    std::size_t n_samples = 0;
    double sigma_l = 0.0;
    double sigma_e = 0.0;
    std::optional<double> sigma_p;
    std::optional<double> sigma_sigma_p;
};

struct DiversityStats {
    double sigma_l = 0.0;
    double sigma_e = 0.0;
    double sigma_p = 0.0;
    double sigma_sigma_p = 0.0;
    std::size_t n_samples = 0;
    std::vector<SentenceStats> per_sentence;
    std::vector<std::string> excluded_sentences;  // fewer than two samples
    std::size_t unvoiced_samples = 0;             // samples without a pitch feature
};

// Throws Error(degenerate) when no sentence has two usable samples.
DiversityStats diversity_stats(const std::vector<SentenceSamples>& sentences);

struct Histogram {
    std::vector<double> edges;  // bins + 1, ascending
    std::vector<std::int64_t> counts;
};

// Equal-width edges spanning every value; a single distinct value v gets [v - 0.5, v + 0.5].
// Throws Error(input) when there are no values.
std::vector<double> histogram_edges(std::span<const double> values, int bins);
// The last bin is closed on the right; values outside the edges are dropped.
Histogram make_histogram(std::span<const double> values, const std::vector<double>& edges);

struct LabeledFeatures {
    std::string label;
    std::vector<UtteranceFeatures> samples;
};

// One CSV (bin_lo,bin_hi,count) and one PNG bar chart per model label for
// length, average pitch and pitch SD. Edges are shared across labels per
// feature. Returns the CSV paths. Throws Error(input) on empty input.
std::vector<std::filesystem::path> export_histograms(const std::vector<LabeledFeatures>& models,
                                                     const std::filesystem::path& out_dir, int bins);

// Writes an RGB bar chart of the histogram.
void write_histogram_png(const Histogram& histogram, const std::filesystem::path& path);

struct EvaluationOptions {
    int bins = 20;
    int griffin_lim_iterations = 32;
};

// Scans <samples_dir>/<label>/<sentence>/<sample>.{wav | mel.bin + json}, then
// writes stats.json and the histograms into out_dir.
std::vector<std::pair<std::string, DiversityStats>> evaluate_directory(const std::filesystem::path& samples_dir,
                                                                       const std::filesystem::path& out_dir,
                                                                       const EvaluationOptions& options,
                                                                       const TrainingConfig& config);

}  // namespace himuv
