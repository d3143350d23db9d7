#include "himuv/evaluation.hpp"

#include "himuv/arrays.hpp"
#include "himuv/error.hpp"
#include "himuv/pitch.hpp"

#include <json.hpp>
#include <png.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <sstream>

namespace himuv {

namespace fs = std::filesystem;
using nlohmann::json;

double average_energy_db(std::span<const double> samples, std::int64_t hop)
{
    if (samples.empty() || hop <= 0) {
        throw Error(ErrorKind::input, "average_energy_db: empty signal");
    }
    const std::size_t block = static_cast<std::size_t>(hop);
    double total = 0.0;
    std::size_t frames = 0;
    for (std::size_t start = 0; start < samples.size(); start += block) {
        const std::size_t end = std::min(samples.size(), start + block);
        double sq = 0.0;
        for (std::size_t i = start; i < end; ++i) {
            sq += samples[i] * samples[i];
        }
        const double rms = std::sqrt(sq / static_cast<double>(end - start));
        total += 20.0 * std::log10(rms + 1e-9);
        ++frames;
    }
    return total / static_cast<double>(frames);
}

void summarize_pitch(std::span<const double> frame_pitch, UtteranceFeatures& out)
{
    RunningStats s;
    for (const double f : frame_pitch) {
        if (f > 0) {
            s.add(f);
        }
    }
    out.avg_pitch_hz.reset();
    out.pitch_sd_hz.reset();
    if (s.count() >= 1) {
        out.avg_pitch_hz = s.mean();
    }
    if (s.count() >= 2) {
        out.pitch_sd_hz = s.sd();
    }
}

UtteranceFeatures features_from_audio(std::span<const double> samples, const TrainingConfig& config)
{
    UtteranceFeatures f;
    f.length_s = static_cast<double>(samples.size()) / static_cast<double>(config.sample_rate);
    f.avg_energy_db = average_energy_db(samples, config.hop);
    summarize_pitch(track_pitch(samples, config), f);
    return f;
}

UtteranceFeatures features_from_mel(const MelSpectrogram& mel, const SynthesisSidecar& sidecar,
                                    int griffin_lim_iterations, const TrainingConfig& config)
{
    if (mel.frame_count() != sidecar.frame_count) {
        throw Error(ErrorKind::consistency, "mel frame count differs from its sidecar");
    }
    UtteranceFeatures f;
    f.length_s = static_cast<double>(mel.frame_count() * mel.hop) / static_cast<double>(mel.sample_rate);
    const std::vector<double> audio = invert_mel(mel, griffin_lim_iterations, config);
    f.avg_energy_db = average_energy_db(audio, mel.hop);
    std::vector<double> track;
    for (std::size_t i = 0; i < sidecar.durations.size(); ++i) {
        track.insert(track.end(), static_cast<std::size_t>(std::max<std::int64_t>(0, sidecar.durations[i])),
                     sidecar.pitch_hz[i]);
    }
    summarize_pitch(track, f);
    return f;
}

void RunningStats::add(double x)
{
    ++n_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (x - mean_);
}

double RunningStats::sd() const
{
    if (n_ < 2) {
        throw std::logic_error("sample SD needs at least two values");
    }
    return std::sqrt(std::max(0.0, m2_ / static_cast<double>(n_ - 1)));
}

DiversityStats diversity_stats(const std::vector<SentenceSamples>& sentences)
{
    DiversityStats out;
    RunningStats mean_l, mean_e, mean_p, mean_sp;
    for (const auto& sentence : sentences) {
        if (sentence.samples.size() < 2) {
            spdlog::warn("sentence {} has {} sample(s); excluded from diversity statistics", sentence.sentence,
                         sentence.samples.size());
            out.excluded_sentences.push_back(sentence.sentence);
            continue;
        }
        RunningStats l, e, p, sp;
        for (const auto& s : sentence.samples) {
            l.add(s.length_s);
            e.add(s.avg_energy_db);
            if (s.avg_pitch_hz) {
                p.add(*s.avg_pitch_hz);
            } else {
                ++out.unvoiced_samples;
            }
            if (s.pitch_sd_hz) {
                sp.add(*s.pitch_sd_hz);
            }
        }
        SentenceStats st;
        st.sentence = sentence.sentence;
        st.n_samples = sentence.samples.size();
        st.sigma_l = l.sd();
        st.sigma_e = e.sd();
        mean_l.add(st.sigma_l);
        mean_e.add(st.sigma_e);
        if (p.count() >= 2) {
            st.sigma_p = p.sd();
            mean_p.add(*st.sigma_p);
        }
        if (sp.count() >= 2) {
            st.sigma_sigma_p = sp.sd();
            mean_sp.add(*st.sigma_sigma_p);
        }
        out.n_samples += st.n_samples;
        out.per_sentence.push_back(std::move(st));
    }
    if (out.per_sentence.empty()) {
        throw Error(ErrorKind::degenerate, "no sentence has at least two samples");
    }
    out.sigma_l = mean_l.mean();
    out.sigma_e = mean_e.mean();
    out.sigma_p = mean_p.mean();
    out.sigma_sigma_p = mean_sp.mean();
    return out;
}

std::vector<double> histogram_edges(std::span<const double> values, int bins)
{
    if (values.empty()) {
        throw Error(ErrorKind::input, "histogram of no values");
    }
    if (bins < 1) {
        throw Error(ErrorKind::input, "histogram needs at least one bin");
    }
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    double lo = *lo_it;
    double hi = *hi_it;
    if (hi == lo) {
        lo -= 0.5;
        hi += 0.5;
    }
    std::vector<double> edges(static_cast<std::size_t>(bins) + 1);
    for (int i = 0; i <= bins; ++i) {
        edges[static_cast<std::size_t>(i)] = lo + (hi - lo) * static_cast<double>(i) / bins;
    }
    edges.back() = hi;
    return edges;
}

Histogram make_histogram(std::span<const double> values, const std::vector<double>& edges)
{
    if (edges.size() < 2) {
        throw Error(ErrorKind::input, "histogram needs at least two edges");
    }
    Histogram h;
    h.edges = edges;
    h.counts.assign(edges.size() - 1, 0);
    for (const double v : values) {
        if (v < edges.front() || v > edges.back()) {
            continue;
        }
        auto it = std::upper_bound(edges.begin(), edges.end(), v);
        std::size_t bin = static_cast<std::size_t>(std::distance(edges.begin(), it));
        bin = bin == 0 ? 0 : bin - 1;
        bin = std::min(bin, h.counts.size() - 1);
        ++h.counts[bin];
    }
    return h;
}

void write_histogram_png(const Histogram& histogram, const fs::path& path)
{
    constexpr int kWidth = 400;
    constexpr int kHeight = 240;
    constexpr int kMargin = 10;
    std::vector<unsigned char> pixels(static_cast<std::size_t>(kWidth * kHeight * 3), 255);
    const std::int64_t peak = std::max<std::int64_t>(
        1, histogram.counts.empty() ? 1 : *std::max_element(histogram.counts.begin(), histogram.counts.end()));
    const int bins = static_cast<int>(histogram.counts.size());
    const int plot_w = kWidth - 2 * kMargin;
    const int plot_h = kHeight - 2 * kMargin;
    for (int b = 0; b < bins; ++b) {
        const int x0 = kMargin + plot_w * b / bins;
        const int x1 = kMargin + plot_w * (b + 1) / bins - 1;
        const int bar = static_cast<int>(std::lround(static_cast<double>(plot_h) *
                                                     static_cast<double>(histogram.counts[static_cast<std::size_t>(b)]) /
                                                     static_cast<double>(peak)));
        for (int y = kHeight - kMargin - bar; y < kHeight - kMargin; ++y) {
            for (int x = x0; x < x1; ++x) {
                unsigned char* px = &pixels[static_cast<std::size_t>((y * kWidth + x) * 3)];
                px[0] = 40;
                px[1] = 90;
                px[2] = 160;
            }
        }
    }
    for (int x = kMargin; x < kWidth - kMargin; ++x) {
        unsigned char* px = &pixels[static_cast<std::size_t>(((kHeight - kMargin) * kWidth + x) * 3)];
        px[0] = px[1] = px[2] = 0;
    }

    std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "wb"), &std::fclose);
    if (!file) {
        throw Error(ErrorKind::io, "cannot write " + path.string());
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorKind::io, "libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorKind::io, "libpng failed writing " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, kWidth, kHeight, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < kHeight; ++y) {
        png_write_row(png, &pixels[static_cast<std::size_t>(y * kWidth * 3)]);
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

namespace {

struct FeatureAccessor {
    const char* name;
    std::optional<double> (*get)(const UtteranceFeatures&);
};

const FeatureAccessor kHistogramFeatures[] = {
    {"length", [](const UtteranceFeatures& f) -> std::optional<double> { return f.length_s; }},
    {"avg_pitch", [](const UtteranceFeatures& f) { return f.avg_pitch_hz; }},
    {"pitch_sd", [](const UtteranceFeatures& f) { return f.pitch_sd_hz; }},
};

std::vector<double> collect(const std::vector<UtteranceFeatures>& samples, const FeatureAccessor& feature)
{
    std::vector<double> out;
    for (const auto& s : samples) {
        if (const auto v = feature.get(s)) {
            out.push_back(*v);
        }
    }
    return out;
}

}  // namespace

std::vector<fs::path> export_histograms(const std::vector<LabeledFeatures>& models, const fs::path& out_dir, int bins)
{
    if (models.empty()) {
        throw Error(ErrorKind::input, "no samples to histogram");
    }
    fs::create_directories(out_dir);
    std::vector<fs::path> written;
    for (const auto& feature : kHistogramFeatures) {
        std::vector<double> all;
        for (const auto& m : models) {
            const auto v = collect(m.samples, feature);
            all.insert(all.end(), v.begin(), v.end());
        }
        if (all.empty()) {
            spdlog::warn("no {} values in any model; histogram skipped", feature.name);
            continue;
        }
        const std::vector<double> edges = histogram_edges(all, bins);
        for (const auto& m : models) {
            const Histogram h = make_histogram(collect(m.samples, feature), edges);
            const fs::path base = out_dir / (m.label + "_" + feature.name);
            std::ostringstream csv;
            csv.precision(17);
            csv << "bin_lo,bin_hi,count\n";
            for (std::size_t b = 0; b < h.counts.size(); ++b) {
                csv << h.edges[b] << ',' << h.edges[b + 1] << ',' << h.counts[b] << '\n';
            }
            const fs::path csv_path = fs::path(base.string() + ".csv");
            write_file_atomic(csv_path, csv.str());
            write_histogram_png(h, fs::path(base.string() + ".png"));
            written.push_back(csv_path);
        }
    }
    return written;
}

namespace {

std::vector<fs::path> sorted_entries(const fs::path& dir, bool directories)
{
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_directory() == directories) {
            out.push_back(e.path());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

bool ends_with(const std::string& s, const std::string& suffix)
{
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

json optional_json(const std::optional<double>& v)
{
    return v ? json(*v) : json(nullptr);
}

json table_reference()
{
    auto row = [](double l, double e, double p, double sp) {
        return json{{"sigma_l", l}, {"sigma_e", e}, {"sigma_p", p}, {"sigma_sigma_p", sp}};
    };
    return {
        {"GVAE", row(0.31, 0.75, 10.54, 8.78)},
        {"LVAE", row(0.13, 0.84, 21.48, 9.41)},
        {"HiMuV-TTS", row(0.50, 1.02, 12.01, 10.44)},
        {"HiMuV-TTS-G", row(0.33, 0.86, 11.82, 10.39)},
        {"HiMuV-TTS-L", row(0.36, 0.71, 2.46, 5.37)},
    };
}

}  // namespace

std::vector<std::pair<std::string, DiversityStats>> evaluate_directory(const fs::path& samples_dir,
                                                                       const fs::path& out_dir,
                                                                       const EvaluationOptions& options,
                                                                       const TrainingConfig& config)
{
    if (!fs::is_directory(samples_dir)) {
        throw Error(ErrorKind::io, "samples directory " + samples_dir.string() + " does not exist");
    }
    std::vector<std::pair<std::string, DiversityStats>> results;
    std::vector<LabeledFeatures> labeled;
    for (const auto& label_dir : sorted_entries(samples_dir, true)) {
        LabeledFeatures lf;
        lf.label = label_dir.filename().string();
        std::vector<SentenceSamples> sentences;
        for (const auto& sentence_dir : sorted_entries(label_dir, true)) {
            SentenceSamples ss;
            ss.sentence = sentence_dir.filename().string();
            for (const auto& file : sorted_entries(sentence_dir, false)) {
                const std::string name = file.filename().string();
                if (ends_with(name, ".wav")) {
                    // A mel with a WAV next to it is measured from the WAV.
                    const Waveform w = read_wav(file);
                    ss.samples.push_back(features_from_audio(w.samples, config));
                } else if (ends_with(name, ".mel.bin")) {
                    const std::string stem = file.string().substr(0, file.string().size() - 8);
                    if (fs::exists(stem + ".wav")) {
                        continue;
                    }
                    const SynthesisSidecar sidecar = read_sidecar(stem + ".json");
                    MelSpectrogram mel;
                    mel.frames = read_array(file);
                    mel.hop = sidecar.hop;
                    mel.win = sidecar.win;
                    mel.sample_rate = sidecar.sample_rate;
                    ss.samples.push_back(features_from_mel(mel, sidecar, options.griffin_lim_iterations, config));
                }
            }
            lf.samples.insert(lf.samples.end(), ss.samples.begin(), ss.samples.end());
            if (!ss.samples.empty()) {
                sentences.push_back(std::move(ss));
            }
        }
        if (sentences.empty()) {
            spdlog::warn("label {} has no samples", lf.label);
            continue;
        }
        results.emplace_back(lf.label, diversity_stats(sentences));
        labeled.push_back(std::move(lf));
    }
    if (results.empty()) {
        throw Error(ErrorKind::input, "no samples found under " + samples_dir.string());
    }
    fs::create_directories(out_dir);
    export_histograms(labeled, out_dir, options.bins);

    json stats;
    stats["sd_convention"] = "sample standard deviation (ddof=1) per sentence, unweighted mean over sentences";
    stats["energy_definition"] = "mean over hop-sized blocks of 20*log10(rms + 1e-9), dB";
    json models = json::object();
    for (const auto& [label, s] : results) {
        json per = json::array();
        for (const auto& st : s.per_sentence) {
            per.push_back({{"sentence", st.sentence},
                           {"n_samples", st.n_samples},
                           {"sigma_l", st.sigma_l},
                           {"sigma_e", st.sigma_e},
                           {"sigma_p", optional_json(st.sigma_p)},
                           {"sigma_sigma_p", optional_json(st.sigma_sigma_p)}});
        }
        models[label] = {{"sigma_l", s.sigma_l},
                         {"sigma_e", s.sigma_e},
                         {"sigma_p", s.sigma_p},
                         {"sigma_sigma_p", s.sigma_sigma_p},
                         {"n_samples", s.n_samples},
                         {"unvoiced_samples", s.unvoiced_samples},
                         {"excluded_sentences", s.excluded_sentences},
                         {"per_sentence", per}};
    }
    stats["models"] = models;
    stats["reference_table"] = table_reference();
    write_file_atomic(out_dir / "stats.json", stats.dump(2) + "\n");
    return results;
}

}  // namespace himuv
