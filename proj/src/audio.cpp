#include "himuv/audio.hpp"

#include "himuv/error.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>

namespace himuv {

namespace {

template <typename T>
T read_le(const std::vector<char>& buf, std::size_t pos)
{
    T v{};
    std::memcpy(&v, buf.data() + pos, sizeof(T));
    return v;
}

template <typename T>
void write_le(std::ofstream& out, T v)
{
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

// RAII wrapper for a real-input FFT of fixed size.
class RealFft {
public:
    explicit RealFft(int n)
        : n_(n),
          in_(fftw_alloc_real(static_cast<std::size_t>(n))),
          out_(fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1))),
          forward_(fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE)),
          backward_(fftw_plan_dft_c2r_1d(n, out_, in_, FFTW_ESTIMATE))
    {
    }
    ~RealFft()
    {
        fftw_destroy_plan(forward_);
        fftw_destroy_plan(backward_);
        fftw_free(in_);
        fftw_free(out_);
    }
    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;

    std::vector<std::complex<double>> forward(std::span<const double> frame)
    {
        std::copy(frame.begin(), frame.end(), in_);
        fftw_execute(forward_);
        std::vector<std::complex<double>> bins(static_cast<std::size_t>(n_ / 2 + 1));
        for (std::size_t k = 0; k < bins.size(); ++k) {
            bins[k] = {out_[k][0], out_[k][1]};
        }
        return bins;
    }

    // Unnormalised inverse; caller divides by n.
    std::vector<double> backward(const std::vector<std::complex<double>>& bins)
    {
        for (std::size_t k = 0; k < bins.size(); ++k) {
            out_[k][0] = bins[k].real();
            out_[k][1] = bins[k].imag();
        }
        fftw_execute(backward_);
        return std::vector<double>(in_, in_ + n_);
    }

private:
    int n_;
    double* in_;
    fftw_complex* out_;
    fftw_plan forward_;
    fftw_plan backward_;
};

std::vector<double> hann(std::int64_t n)
{
    std::vector<double> w(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
    }
    return w;
}

std::vector<double> reflect_pad(std::span<const double> x, std::size_t pad)
{
    const std::size_t n = x.size();
    std::vector<double> out(n + 2 * pad);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const long j = static_cast<long>(i) - static_cast<long>(pad);
        long k = j;
        if (k < 0) {
            k = -k;
        } else if (k >= static_cast<long>(n)) {
            k = 2 * static_cast<long>(n) - 2 - k;
        }
        out[i] = x[static_cast<std::size_t>(std::clamp<long>(k, 0, static_cast<long>(n) - 1))];
    }
    return out;
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::io, "cannot open audio file " + path.string());
    }
    std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
        throw Error(ErrorKind::parse, "not a RIFF/WAVE file: " + path.string());
    }
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    std::size_t pos = 12;
    const char* data = nullptr;
    std::uint32_t data_size = 0;
    while (pos + 8 <= buf.size()) {
        const std::uint32_t size = read_le<std::uint32_t>(buf, pos + 4);
        if (std::memcmp(buf.data() + pos, "fmt ", 4) == 0 && pos + 8 + 16 <= buf.size()) {
            format = read_le<std::uint16_t>(buf, pos + 8);
            channels = read_le<std::uint16_t>(buf, pos + 10);
            rate = read_le<std::uint32_t>(buf, pos + 12);
            bits = read_le<std::uint16_t>(buf, pos + 22);
        } else if (std::memcmp(buf.data() + pos, "data", 4) == 0) {
            data = buf.data() + pos + 8;
            data_size = static_cast<std::uint32_t>(std::min<std::size_t>(size, buf.size() - pos - 8));
            break;
        }
        pos += 8 + size + (size & 1u);
    }
    if (data == nullptr || channels == 0) {
        throw Error(ErrorKind::parse, "WAV file missing fmt or data chunk: " + path.string());
    }
    if (channels != 1) {
        throw Error(ErrorKind::input, "audio must be mono: " + path.string());
    }
    Waveform w;
    w.sample_rate = rate;
    if (format == 1 && bits == 16) {
        const std::size_t n = data_size / 2;
        w.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::int16_t s;
            std::memcpy(&s, data + 2 * i, 2);
            w.samples[i] = s / 32768.0;
        }
    } else if (format == 3 && bits == 32) {
        const std::size_t n = data_size / 4;
        w.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            float s;
            std::memcpy(&s, data + 4 * i, 4);
            w.samples[i] = s;
        }
    } else {
        throw Error(ErrorKind::input, "unsupported WAV encoding (need 16-bit PCM or 32-bit float): " + path.string());
    }
    return w;
}

void write_wav(const std::filesystem::path& path, std::span<const double> samples, std::int64_t sample_rate)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorKind::io, "cannot write audio file " + path.string());
    }
    const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
    out.write("RIFF", 4);
    write_le<std::uint32_t>(out, 36 + data_bytes);
    out.write("WAVEfmt ", 8);
    write_le<std::uint32_t>(out, 16);
    write_le<std::uint16_t>(out, 1);
    write_le<std::uint16_t>(out, 1);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(sample_rate));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(sample_rate * 2));
    write_le<std::uint16_t>(out, 2);
    write_le<std::uint16_t>(out, 16);
    out.write("data", 4);
    write_le<std::uint32_t>(out, data_bytes);
    for (double s : samples) {
        const double c = std::clamp(s, -1.0, 1.0);
        write_le<std::int16_t>(out, static_cast<std::int16_t>(std::lround(c * 32767.0)));
    }
}

std::size_t stft_frame_count(std::size_t samples, std::int64_t hop)
{
    return 1 + samples / static_cast<std::size_t>(hop);
}

double hz_to_mel(double hz)
{
    constexpr double f_sp = 200.0 / 3.0;
    constexpr double min_log_hz = 1000.0;
    const double min_log_mel = min_log_hz / f_sp;
    const double logstep = std::log(6.4) / 27.0;
    return hz < min_log_hz ? hz / f_sp : min_log_mel + std::log(hz / min_log_hz) / logstep;
}

double mel_to_hz(double mel)
{
    constexpr double f_sp = 200.0 / 3.0;
    constexpr double min_log_hz = 1000.0;
    const double min_log_mel = min_log_hz / f_sp;
    const double logstep = std::log(6.4) / 27.0;
    return mel < min_log_mel ? mel * f_sp : min_log_hz * std::exp(logstep * (mel - min_log_mel));
}

Matrix mel_filterbank(const TrainingConfig& config)
{
    const Eigen::Index bins = config.win / 2 + 1;
    const double lo = hz_to_mel(config.fmin);
    const double hi = hz_to_mel(config.fmax);
    std::vector<double> edges(kMelBins + 2);
    for (int i = 0; i < kMelBins + 2; ++i) {
        edges[static_cast<std::size_t>(i)] = mel_to_hz(lo + (hi - lo) * i / (kMelBins + 1));
    }
    Matrix fb = Matrix::Zero(kMelBins, bins);
    for (int m = 0; m < kMelBins; ++m) {
        const double left = edges[static_cast<std::size_t>(m)];
        const double centre = edges[static_cast<std::size_t>(m + 1)];
        const double right = edges[static_cast<std::size_t>(m + 2)];
        const double norm = 2.0 / (right - left);
        for (Eigen::Index k = 0; k < bins; ++k) {
            const double f = static_cast<double>(k) * config.sample_rate / config.win;
            const double up = (f - left) / (centre - left);
            const double down = (right - f) / (right - centre);
            fb(m, k) = std::max(0.0, std::min(up, down)) * norm;
        }
    }
    return fb;
}

std::vector<std::vector<std::complex<double>>> stft(std::span<const double> samples, const TrainingConfig& config)
{
    const auto win = static_cast<std::size_t>(config.win);
    const auto hop = static_cast<std::size_t>(config.hop);
    const std::vector<double> padded = reflect_pad(samples, win / 2);
    const std::vector<double> window = hann(config.win);
    const std::size_t frames = stft_frame_count(samples.size(), config.hop);
    RealFft fft(static_cast<int>(win));
    std::vector<std::vector<std::complex<double>>> out;
    out.reserve(frames);
    std::vector<double> frame(win);
    for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t i = 0; i < win; ++i) {
            frame[i] = padded[t * hop + i] * window[i];
        }
        out.push_back(fft.forward(frame));
    }
    return out;
}

std::vector<double> istft(const std::vector<std::vector<std::complex<double>>>& spectrum,
                          const TrainingConfig& config, std::size_t length)
{
    const auto win = static_cast<std::size_t>(config.win);
    const auto hop = static_cast<std::size_t>(config.hop);
    const std::vector<double> window = hann(config.win);
    const std::size_t total = win + hop * (spectrum.empty() ? 0 : spectrum.size() - 1);
    std::vector<double> acc(std::max(total, length + win), 0.0);
    std::vector<double> norm(acc.size(), 0.0);
    RealFft fft(static_cast<int>(win));
    for (std::size_t t = 0; t < spectrum.size(); ++t) {
        const std::vector<double> frame = fft.backward(spectrum[t]);
        for (std::size_t i = 0; i < win; ++i) {
            acc[t * hop + i] += frame[i] / static_cast<double>(win) * window[i];
            norm[t * hop + i] += window[i] * window[i];
        }
    }
    std::vector<double> out(length, 0.0);
    for (std::size_t i = 0; i < length; ++i) {
        const std::size_t j = i + win / 2;
        out[i] = norm[j] > 1e-8 ? acc[j] / norm[j] : 0.0;
    }
    return out;
}

MelSpectrogram extract_mel(std::span<const double> samples, const TrainingConfig& config)
{
    if (samples.size() < static_cast<std::size_t>(config.win)) {
        throw Error(ErrorKind::input, "waveform shorter than one analysis window (" +
                                          std::to_string(samples.size()) + " < " + std::to_string(config.win) +
                                          " samples)");
    }
    const Matrix fb = mel_filterbank(config);
    const auto spectrum = stft(samples, config);
    const Eigen::Index bins = fb.cols();
    MelSpectrogram mel;
    mel.hop = config.hop;
    mel.win = config.win;
    mel.sample_rate = config.sample_rate;
    mel.frames.resize(static_cast<Eigen::Index>(spectrum.size()), kMelBins);
    Eigen::VectorXd mag(bins);
    for (std::size_t t = 0; t < spectrum.size(); ++t) {
        for (Eigen::Index k = 0; k < bins; ++k) {
            mag(k) = std::abs(spectrum[t][static_cast<std::size_t>(k)]);
        }
        const Eigen::VectorXd m = fb * mag;
        for (int b = 0; b < kMelBins; ++b) {
            mel.frames(static_cast<Eigen::Index>(t), b) = std::log(std::max(m(b), config.log_floor));
        }
    }
    return mel;
}

std::vector<double> invert_mel(const MelSpectrogram& mel, int iterations, const TrainingConfig& config)
{
    const Matrix fb = mel_filterbank(config);
    const Matrix pinv = fb.completeOrthogonalDecomposition().pseudoInverse();
    const Eigen::Index frames = mel.frames.rows();
    const std::size_t length = static_cast<std::size_t>(frames * config.hop);
    Matrix magnitude = (pinv * mel.frames.array().exp().matrix().transpose()).transpose();
    magnitude = magnitude.cwiseMax(0.0);

    std::vector<std::vector<std::complex<double>>> spec(static_cast<std::size_t>(frames));
    for (Eigen::Index t = 0; t < frames; ++t) {
        auto& row = spec[static_cast<std::size_t>(t)];
        row.resize(static_cast<std::size_t>(magnitude.cols()));
        for (Eigen::Index k = 0; k < magnitude.cols(); ++k) {
            row[static_cast<std::size_t>(k)] = {magnitude(t, k), 0.0};
        }
    }
    std::vector<double> wave = istft(spec, config, length);
    for (int it = 0; it < iterations; ++it) {
        const auto est = stft(wave, config);
        for (std::size_t t = 0; t < spec.size() && t < est.size(); ++t) {
            for (std::size_t k = 0; k < spec[t].size(); ++k) {
                const double a = std::abs(est[t][k]);
                const std::complex<double> phase = a > 1e-12 ? est[t][k] / a : std::complex<double>(1.0, 0.0);
                spec[t][k] = magnitude(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) * phase;
            }
        }
        wave = istft(spec, config, length);
    }
    return wave;
}

}  // namespace himuv
