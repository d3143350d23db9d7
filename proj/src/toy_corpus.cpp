#include "himuv/toy_corpus.hpp"

#include "himuv/arrays.hpp"
#include "himuv/audio.hpp"
#include "himuv/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace himuv {

namespace fs = std::filesystem;

namespace {

enum class Kind { silence, voiced, noise };

struct PhonemeSound {
    const char* symbol;
    Kind kind;
    double base_frames;
    double gain;
    double formants[3];  // Hz, voiced; noise uses formants[0..1] as a band
};

const PhonemeSound kInventory[] = {
    {"SIL", Kind::silence, 6, 0.0, {0, 0, 0}},
    {"AA", Kind::voiced, 10, 1.0, {730, 1090, 2440}},
    {"IY", Kind::voiced, 9, 0.9, {270, 2290, 3010}},
    {"UW", Kind::voiced, 9, 0.85, {300, 870, 2240}},
    {"EH", Kind::voiced, 8, 0.95, {530, 1840, 2480}},
    {"OW", Kind::voiced, 10, 0.95, {570, 840, 2410}},
    {"M", Kind::voiced, 6, 0.5, {250, 1000, 2200}},
    {"N", Kind::voiced, 6, 0.5, {250, 1500, 2500}},
    {"L", Kind::voiced, 6, 0.6, {360, 1300, 2700}},
    {"S", Kind::noise, 8, 0.25, {4500, 8000, 0}},
    {"SH", Kind::noise, 8, 0.3, {2000, 5000, 0}},
    {"F", Kind::noise, 7, 0.12, {1000, 7000, 0}},
};

constexpr std::size_t kSilence = 0;

double formant_envelope(const PhonemeSound& p, double f)
{
    double e = 0.02;
    for (const double formant : p.formants) {
        const double bw = 80.0 + 0.05 * formant;
        e += std::exp(-0.5 * (f - formant) * (f - formant) / (bw * bw));
    }
    return e;
}

// Cheap band-pass: difference of two one-pole low-passes.
class BandNoise {
public:
    BandNoise(double lo, double hi, double sr)
        : a_lo_(std::exp(-2.0 * std::numbers::pi * lo / sr)), a_hi_(std::exp(-2.0 * std::numbers::pi * hi / sr))
    {
    }
    double operator()(double white)
    {
        lp_lo_ = (1 - a_lo_) * white + a_lo_ * lp_lo_;
        lp_hi_ = (1 - a_hi_) * white + a_hi_ * lp_hi_;
        return lp_hi_ - lp_lo_;
    }

private:
    double a_lo_, a_hi_;
    double lp_lo_ = 0, lp_hi_ = 0;
};

}  // namespace

fs::path write_toy_corpus(const fs::path& dir, const ToyCorpusOptions& options, const TrainingConfig& config,
                          std::vector<ToyUtterance>* written)
{
    if (options.utterances == 0 || options.min_phonemes == 0 || options.max_phonemes < options.min_phonemes) {
        throw Error(ErrorKind::usage, "invalid toy corpus options");
    }
    const double sr = static_cast<double>(config.sample_rate);
    const std::int64_t hop = config.hop;
    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick(1, std::size(kInventory) - 1);
    std::uniform_int_distribution<std::size_t> count(options.min_phonemes, options.max_phonemes);

    fs::create_directories(dir / "wav");
    std::ostringstream manifest;
    for (std::size_t u = 0; u < options.utterances; ++u) {
        ToyUtterance utt;
        char id[32];
        std::snprintf(id, sizeof id, "toy%03zu", u);
        utt.id = id;

        std::vector<std::size_t> sounds{kSilence};
        const std::size_t interior = count(rng);
        for (std::size_t i = 0; i < interior; ++i) {
            sounds.push_back(pick(rng));
        }
        sounds.push_back(kSilence);

        const double rate = 0.8 + 0.45 * unit(rng);
        const double base_f0 = 100.0 + 80.0 * unit(rng);
        const double contour = 0.1 + 0.1 * unit(rng);
        const double phase0 = 2.0 * std::numbers::pi * unit(rng);
        std::vector<double> phoneme_f0;
        for (std::size_t i = 0; i < sounds.size(); ++i) {
            const PhonemeSound& p = kInventory[sounds[i]];
            const double jitter = 0.8 + 0.4 * unit(rng);
            utt.phonemes.push_back(p.symbol);
            utt.durations.push_back(std::max<std::int64_t>(2, std::lround(p.base_frames * rate * jitter)));
            const double pos = static_cast<double>(i) / static_cast<double>(sounds.size());
            phoneme_f0.push_back(base_f0 * (1.0 + contour * std::sin(phase0 + 2.0 * std::numbers::pi * pos)) *
                                 (1.0 - 0.15 * pos));
            utt.pitch_hz.push_back(p.kind == Kind::voiced ? phoneme_f0.back() : 0.0);
        }

        std::vector<std::size_t> frame_phoneme;
        for (std::size_t i = 0; i < sounds.size(); ++i) {
            frame_phoneme.insert(frame_phoneme.end(), static_cast<std::size_t>(utt.durations[i]), i);
        }
        const std::size_t frames = frame_phoneme.size();
        // 1 + floor(L / hop) centred frames == frames
        const std::size_t length = (frames - 1) * static_cast<std::size_t>(hop) + static_cast<std::size_t>(hop) / 2;

        std::vector<double> audio(length, 0.0);
        double phase = 0.0;
        double f0 = phoneme_f0.front();
        double voiced_gain = 0.0;
        double noise_gain = 0.0;
        std::vector<BandNoise> bands;
        for (const auto& p : kInventory) {
            bands.emplace_back(p.kind == Kind::noise ? p.formants[0] : 1000.0,
                               p.kind == Kind::noise ? p.formants[1] : 2000.0, sr);
        }
        const double smooth = std::exp(-1.0 / (0.004 * sr));
        for (std::size_t t = 0; t < length; ++t) {
            const std::size_t frame = std::min(frames - 1, (t + static_cast<std::size_t>(hop) / 2) /
                                                               static_cast<std::size_t>(hop));
            const std::size_t ph = frame_phoneme[frame];
            const PhonemeSound& p = kInventory[sounds[ph]];
            f0 = smooth * f0 + (1 - smooth) * phoneme_f0[ph];
            voiced_gain = smooth * voiced_gain + (1 - smooth) * (p.kind == Kind::voiced ? p.gain : 0.0);
            noise_gain = smooth * noise_gain + (1 - smooth) * (p.kind == Kind::noise ? p.gain : 0.0);
            phase += 2.0 * std::numbers::pi * f0 / sr;
            double s = 0.0;
            if (voiced_gain > 1e-4) {
                double h = 0.0;
                for (int k = 1; k * f0 < 7000.0; ++k) {
                    h += formant_envelope(p.kind == Kind::voiced ? p : kInventory[1], k * f0) * std::sin(k * phase);
                }
                s += 0.1 * voiced_gain * h;
            }
            const double white = normal(rng);
            s += noise_gain * 4.0 * bands[sounds[ph]](white);
            s += 0.002 * white;
            audio[t] = s;
        }
        const double peak = std::max(1e-9, *std::max_element(audio.begin(), audio.end(), [](double a, double b) {
            return std::abs(a) < std::abs(b);
        }));
        const double norm = 0.5 / std::abs(peak);
        for (auto& v : audio) {
            v *= norm;
        }

        const fs::path wav = dir / "wav" / (utt.id + ".wav");
        write_wav(wav, audio, config.sample_rate);
        std::ostringstream dur;
        for (std::size_t i = 0; i < utt.durations.size(); ++i) {
            dur << (i ? " " : "") << utt.durations[i];
        }
        dur << '\n';
        write_file_atomic(dir / "wav" / (utt.id + ".dur"), dur.str());
        manifest << "wav/" << utt.id << ".wav|";
        for (std::size_t i = 0; i < utt.phonemes.size(); ++i) {
            manifest << (i ? " " : "") << utt.phonemes[i];
        }
        manifest << '\n';
        if (written) {
            written->push_back(std::move(utt));
        }
    }
    const fs::path manifest_path = dir / "manifest.txt";
    write_file_atomic(manifest_path, manifest.str());
    return manifest_path;
}

}  // namespace himuv
