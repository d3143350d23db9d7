#include "himuv/pitch.hpp"

#include "himuv/audio.hpp"
#include "himuv/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace himuv {

namespace {

double correlation(const double* x, std::size_t n, std::size_t lag)
{
    double xy = 0, xx = 0, yy = 0;
    for (std::size_t i = 0; i + lag < n; ++i) {
        xy += x[i] * x[i + lag];
        xx += x[i] * x[i];
        yy += x[i + lag] * x[i + lag];
    }
    const double denom = std::sqrt(xx * yy);
    return denom > 0 ? xy / denom : 0.0;
}

}  // namespace

std::vector<double> track_pitch(std::span<const double> samples, const TrainingConfig& config)
{
    const auto win = static_cast<std::size_t>(config.win);
    const auto hop = static_cast<std::size_t>(config.hop);
    const std::size_t frames = stft_frame_count(samples.size(), config.hop);
    const std::size_t pad = win / 2;
    std::vector<double> padded(samples.size() + 2 * pad, 0.0);
    std::copy(samples.begin(), samples.end(), padded.begin() + static_cast<long>(pad));

    const auto lag_min = static_cast<std::size_t>(std::floor(config.sample_rate / config.pitch_fmax));
    const auto lag_max = std::min(static_cast<std::size_t>(std::ceil(config.sample_rate / config.pitch_fmin)), win / 2);
    std::vector<double> f0(frames, 0.0);
    std::vector<double> frame(win);
    std::vector<double> r(lag_max + 2, 0.0);
    for (std::size_t t = 0; t < frames; ++t) {
        std::copy_n(padded.begin() + static_cast<long>(t * hop), win, frame.begin());
        const double mean = std::accumulate(frame.begin(), frame.end(), 0.0) / static_cast<double>(win);
        double energy = 0;
        for (double& v : frame) {
            v -= mean;
            energy += v * v;
        }
        if (std::sqrt(energy / static_cast<double>(win)) < 1e-4) {
            continue;
        }
        double best = -1.0;
        for (std::size_t lag = lag_min - 1; lag <= lag_max + 1; ++lag) {
            r[lag] = correlation(frame.data(), win, lag);
            if (lag >= lag_min && lag <= lag_max) {
                best = std::max(best, r[lag]);
            }
        }
        if (best < config.voicing_threshold) {
            continue;
        }
        // Earliest local peak close to the best one; suppresses octave-down errors.
        std::size_t pick = 0;
        for (std::size_t lag = lag_min; lag <= lag_max; ++lag) {
            if (r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1] && r[lag] >= 0.9 * best) {
                pick = lag;
                break;
            }
        }
        if (pick == 0) {
            continue;
        }
        const double a = r[pick - 1], b = r[pick], c = r[pick + 1];
        const double curvature = a - 2 * b + c;
        const double offset = curvature < 0 ? 0.5 * (a - c) / curvature : 0.0;
        f0[t] = config.sample_rate / (static_cast<double>(pick) + offset);
    }
    return f0;
}

std::vector<double> phoneme_pitch(std::span<const double> frame_pitch, std::span<const std::int64_t> durations)
{
    std::int64_t total = 0;
    for (auto d : durations) {
        if (d < 0) {
            throw Error(ErrorKind::consistency, "negative duration in alignment");
        }
        total += d;
    }
    if (total != static_cast<std::int64_t>(frame_pitch.size())) {
        throw Error(ErrorKind::consistency, "alignment covers " + std::to_string(total) +
                                                " frames but the pitch track has " +
                                                std::to_string(frame_pitch.size()));
    }
    std::vector<double> out(durations.size(), 0.0);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < durations.size(); ++i) {
        double acc = 0;
        int voiced = 0;
        for (std::int64_t k = 0; k < durations[i]; ++k, ++pos) {
            if (frame_pitch[pos] > 0) {
                acc += frame_pitch[pos];
                ++voiced;
            }
        }
        out[i] = voiced > 0 ? acc / voiced : 0.0;
    }
    return out;
}

}  // namespace himuv
