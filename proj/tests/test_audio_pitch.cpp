#include "himuv/audio.hpp"
#include "himuv/error.hpp"
#include "himuv/pitch.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>

using namespace himuv;

namespace {

std::vector<double> sine(double hz, std::size_t samples, double amplitude = 0.5, double sr = 22050.0)
{
    std::vector<double> out(samples);
    for (std::size_t i = 0; i < samples; ++i) {
        out[i] = amplitude * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / sr);
    }
    return out;
}

// Slaney mel scale written out independently of the library.
double oracle_mel(double hz)
{
    return hz < 1000.0 ? 3.0 * hz / 200.0 : 15.0 + 27.0 * std::log(hz / 1000.0) / std::log(6.4);
}

double oracle_hz(double mel)
{
    return mel < 15.0 ? 200.0 * mel / 3.0 : 1000.0 * std::exp(mel * std::log(6.4) / 27.0 - 15.0 * std::log(6.4) / 27.0);
}

double rms(const std::vector<double>& x)
{
    double s = 0;
    for (const double v : x) s += v * v;
    return std::sqrt(s / static_cast<double>(x.size()));
}

}  // namespace

TEST(Audio, OneSecondGivesEightySevenFramesOfEightyBins)
{
    const TrainingConfig cfg;
    const MelSpectrogram mel = extract_mel(sine(220.0, 22050), cfg);
    EXPECT_EQ(mel.frame_count(), 87);
    EXPECT_EQ(mel.frames.cols(), 80);
    EXPECT_EQ(stft_frame_count(22050, 256), 87u);
}

TEST(Audio, PureToneLandsInTheBinWhoseCentreIsNearest)
{
    const TrainingConfig cfg;
    const double lo = oracle_mel(cfg.fmin);
    const double hi = oracle_mel(cfg.fmax);
    int expected = -1;
    double best = 1e9;
    for (int m = 0; m < kMelBins; ++m) {
        const double centre = oracle_hz(lo + (hi - lo) * (m + 1) / (kMelBins + 1));
        if (std::abs(centre - 440.0) < best) {
            best = std::abs(centre - 440.0);
            expected = m;
        }
    }
    // Edge frames see the reflect padding, which is not a pure tone.
    const MelSpectrogram mel = extract_mel(sine(440.0, 22050), cfg);
    for (Eigen::Index f = 2; f + 2 < mel.frame_count(); ++f) {
        Eigen::Index arg = 0;
        mel.frames.row(f).maxCoeff(&arg);
        EXPECT_EQ(arg, expected) << "frame " << f;
    }
}

TEST(Audio, MelScaleRoundTrips)
{
    for (const double hz : {0.0, 100.0, 999.0, 1000.0, 4000.0, 8000.0}) {
        EXPECT_NEAR(hz_to_mel(hz), oracle_mel(hz), 1e-9);
        EXPECT_NEAR(mel_to_hz(hz_to_mel(hz)), hz, 1e-9);
    }
}

TEST(Audio, ShortWaveformIsRejected)
{
    EXPECT_THROW(extract_mel(sine(220.0, 500), TrainingConfig{}), Error);
}

TEST(Audio, StftInverseReconstructsSignal)
{
    const TrainingConfig cfg;
    const auto x = sine(330.0, 8192);
    const auto y = istft(stft(x, cfg), cfg, x.size());
    ASSERT_EQ(y.size(), x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        EXPECT_NEAR(x[i], y[i], 1e-9) << i;
    }
}

TEST(Audio, WavRoundTripIsWithinOneQuantisationStep)
{
    test::TempDir dir("wav");
    const auto x = sine(440.0, 1000);
    write_wav(dir.path() / "a.wav", x, 22050);
    const Waveform w = read_wav(dir.path() / "a.wav");
    ASSERT_EQ(w.samples.size(), x.size());
    EXPECT_EQ(w.sample_rate, 22050);
    for (std::size_t i = 0; i < x.size(); ++i) {
        EXPECT_NEAR(w.samples[i], x[i], 1.0 / 32767.0);
    }
}

TEST(Audio, MalformedWavIsAParseError)
{
    test::TempDir dir("badwav");
    std::ofstream(dir.path() / "bad.wav") << "definitely not audio";
    try {
        read_wav(dir.path() / "bad.wav");
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::parse);
    }
}

TEST(Audio, InvertingFloorMelGivesNearSilence)
{
    const TrainingConfig cfg;
    MelSpectrogram mel;
    mel.frames = Matrix::Constant(40, kMelBins, std::log(cfg.log_floor));
    const auto y = invert_mel(mel, 16, cfg);
    EXPECT_EQ(y.size(), 40u * 256u);
    EXPECT_LT(rms(y), 1e-3);
}

TEST(Audio, ZeroIterationInversionKeepsLength)
{
    const TrainingConfig cfg;
    const MelSpectrogram mel = extract_mel(sine(300.0, 22050), cfg);
    const auto y = invert_mel(mel, 0, cfg);
    EXPECT_EQ(y.size(), static_cast<std::size_t>(mel.frame_count() * cfg.hop));
    EXPECT_GT(rms(y), 1e-3);
}

TEST(Pitch, TracksPureToneWithinOnePercent)
{
    const TrainingConfig cfg;
    for (const double hz : {90.0, 200.0, 410.0}) {
        const auto track = track_pitch(sine(hz, 22050), cfg);
        ASSERT_EQ(track.size(), 87u);
        for (std::size_t f = 3; f + 3 < track.size(); ++f) {
            EXPECT_NEAR(track[f], hz, 0.01 * hz) << "frame " << f;
        }
    }
}

TEST(Pitch, SilenceAndNoiseAreUnvoiced)
{
    const TrainingConfig cfg;
    const auto silent = track_pitch(std::vector<double>(22050, 0.0), cfg);
    for (const double f : silent) EXPECT_EQ(f, 0.0);

    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 0.3);
    std::vector<double> noise(22050);
    for (auto& v : noise) v = n(rng);
    const auto track = track_pitch(noise, cfg);
    std::size_t voiced = 0;
    for (const double f : track) voiced += f > 0;
    EXPECT_LT(voiced, track.size() / 10);
}

TEST(Pitch, PhonemeAverageOfSpans)
{
    const std::vector<double> frames = {100, 110, 120, 130};
    const std::vector<std::int64_t> d = {2, 2};
    EXPECT_EQ(phoneme_pitch(frames, d), (std::vector<double>{105, 125}));
}

TEST(Pitch, UnvoicedFramesAreExcludedFromTheMean)
{
    const std::vector<double> frames = {0, 100, 0, 200};
    const std::vector<std::int64_t> d = {2, 2};
    EXPECT_EQ(phoneme_pitch(frames, d), (std::vector<double>{100, 200}));
    const std::vector<double> silent = {0, 0, 5};
    const std::vector<std::int64_t> d2 = {2, 0, 1};
    EXPECT_EQ(phoneme_pitch(silent, d2), (std::vector<double>{0, 0, 5}));
}

TEST(Pitch, LengthMismatchIsAConsistencyError)
{
    const std::vector<double> frames = {100, 110, 120};
    const std::vector<std::int64_t> d = {2, 2};
    try {
        phoneme_pitch(frames, d);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::consistency);
    }
}
