#pragma once

#include "himuv/config.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace himuv {

// Frame-level f0 in Hz (0 = unvoiced) on the same centred framing as the mel
// spectrogram, so the result has stft_frame_count(samples.size(), hop) entries.
// Normalised autocorrelation over lags for [pitch_fmin, pitch_fmax]; a frame is
// voiced when its peak correlation reaches voicing_threshold.
std::vector<double> track_pitch(std::span<const double> samples, const TrainingConfig& config);

// Mean of the voiced (non-zero) frame values inside each phoneme's span; 0 when a
// span has no voiced frame. Throws Error(consistency) if sum(durations) differs
// from the number of frames.
std::vector<double> phoneme_pitch(std::span<const double> frame_pitch, std::span<const std::int64_t> durations);

}  // namespace himuv
