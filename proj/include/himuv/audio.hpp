#pragma once

#include "himuv/autograd.hpp"
#include "himuv/config.hpp"

#include <complex>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace himuv {

struct Waveform {
    std::vector<double> samples;  // in [-1, 1]
    std::int64_t sample_rate = 22050;
};

// Mono 16-bit PCM or 32-bit float WAV.
Waveform read_wav(const std::filesystem::path& path);
// 16-bit PCM, samples clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, std::span<const double> samples, std::int64_t sample_rate);

struct MelSpectrogram {
    Matrix frames;  // M x 80 natural-log amplitude
    std::int64_t hop = 256;
    std::int64_t win = 1024;
    std::int64_t sample_rate = 22050;

    Eigen::Index frame_count() const { return frames.rows(); }
};

// Frames produced by a centred STFT (reflect padding of win/2 on each side).
std::size_t stft_frame_count(std::size_t samples, std::int64_t hop);

// Slaney-style mel scale (linear below 1 kHz, logarithmic above).
double hz_to_mel(double hz);
double mel_to_hz(double mel);
// kMelBins x (win/2 + 1), area-normalised triangles.
Matrix mel_filterbank(const TrainingConfig& config);

// Centred STFT with a periodic Hann window; one row per frame.
std::vector<std::vector<std::complex<double>>> stft(std::span<const double> samples,
                                                    const TrainingConfig& config);
// Inverse of stft() by windowed overlap-add; returns `length` samples.
std::vector<double> istft(const std::vector<std::vector<std::complex<double>>>& spectrum,
                          const TrainingConfig& config, std::size_t length);

// Throws Error(input) when the waveform is shorter than one window.
MelSpectrogram extract_mel(std::span<const double> samples, const TrainingConfig& config);

// Griffin-Lim phase retrieval from a log-mel spectrogram. Debug quality only.
// Output length is frame_count * hop.
std::vector<double> invert_mel(const MelSpectrogram& mel, int iterations, const TrainingConfig& config);

}  // namespace himuv
