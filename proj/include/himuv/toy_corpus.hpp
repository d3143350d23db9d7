#pragma once

// Small synthetic speech-like corpus for smoke tests and demos. Vowels and
// voiced consonants are harmonic tones under formant envelopes, fricatives are
// shaped noise, and SIL is near-silence. Each utterance has its own speaking
// rate and pitch contour. Audio length is chosen so the alignment sums exactly
// to the mel frame count.

#include "himuv/config.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace himuv {

struct ToyCorpusOptions {
    std::size_t utterances = 8;
    std::size_t min_phonemes = 6;
    std::size_t max_phonemes = 10;
    std::uint64_t seed = 7;
};

struct ToyUtterance {
    std::string id;
    std::vector<std::string> phonemes;
    std::vector<std::int64_t> durations;
    std::vector<double> pitch_hz;  // per phoneme, 0 for unvoiced
};

// Writes wav/<id>.wav, wav/<id>.dur and manifest.txt under dir.
// Returns the manifest path.
std::filesystem::path write_toy_corpus(const std::filesystem::path& dir, const ToyCorpusOptions& options,
                                       const TrainingConfig& config, std::vector<ToyUtterance>* written = nullptr);

}  // namespace himuv
