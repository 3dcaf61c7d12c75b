#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "sinc/augment.hpp"
#include "sinc/rng.hpp"
#include "sinc/spectral.hpp"

using namespace sinc;
using augment::AugmentConfig;
using augment::Mode;

namespace {

Clip tone_clip(double f_hz, std::size_t frames, double fps = 30.0) {
    Clip c(frames, 4, 4, 3, fps);
    for (std::size_t t = 0; t < frames; ++t) {
        const double s = 0.5 + 0.1 * std::sin(2.0 * std::numbers::pi * f_hz * static_cast<double>(t) / fps);
        for (std::size_t y = 0; y < 4; ++y)
            for (std::size_t x = 0; x < 4; ++x)
                for (std::size_t ch = 0; ch < 3; ++ch)
                    c.at(t, y, x, ch) = static_cast<float>(s + 0.01 * static_cast<double>(x + 4 * y + ch));
    }
    return c;
}

spectral::PowerSpectrum trace_spectrum(const Clip& c, std::size_t ch = 1) {
    return spectral::power_spectrum({c.spatial_mean(ch), c.fps}, 0.01);
}

double peak_hz(const spectral::PowerSpectrum& s) {
    return s.freqs[spectral::peak_bin(s.power, {0, s.size() - 1})];
}

}  // namespace

TEST(Augment, AllDisabledIsACrop) {
    const Clip src = tone_clip(1.0, 300);
    Rng rng(1);
    const auto out = augment::apply(src, rng, AugmentConfig::none(), Mode::unsupervised, 120);
    EXPECT_EQ(out.factor, 1.0);
    EXPECT_FALSE(out.flipped);
    EXPECT_FALSE(out.reversed);
    const Clip ref = augment::crop(src, static_cast<std::size_t>(out.start), 120);
    EXPECT_EQ(out.clip.data, ref.data);
}

TEST(Augment, ResampleMovesThePeakByTheFactor) {
    const Clip src = tone_clip(1.0, 400);
    const Clip out = augment::resample(src, 3.0, 1.25, 300);
    const auto before = trace_spectrum(augment::crop(src, 0, 300));
    const auto after = trace_spectrum(out);
    EXPECT_NEAR(peak_hz(before), 1.0, before.bin_hz);
    EXPECT_NEAR(peak_hz(after), 1.25, after.bin_hz);
    for (double c : {0.66, 0.8, 1.4}) {
        const auto s = trace_spectrum(augment::resample(src, 0.0, c, 270));
        EXPECT_NEAR(peak_hz(s), c, s.bin_hz + 1e-12) << "c=" << c;
    }
}

TEST(Augment, TimeReversalKeepsThePowerSpectrum) {
    const Clip src = tone_clip(1.3, 300);
    AugmentConfig cfg = AugmentConfig::none();
    cfg.time_reverse = true;
    cfg.time_reverse_prob = 1.0;
    Rng a(3), b(3);
    const auto rev = augment::apply(src, a, cfg, Mode::unsupervised, 120);
    const auto fwd = augment::apply(src, b, AugmentConfig::none(), Mode::unsupervised, 120);
    ASSERT_TRUE(rev.reversed);
    ASSERT_EQ(rev.start, fwd.start);
    const auto p = trace_spectrum(rev.clip), q = trace_spectrum(fwd.clip);
    for (std::size_t k = 0; k < p.size(); ++k) EXPECT_NEAR(p.power[k], q.power[k], 1e-9 * (1.0 + q.power[k]));
}

TEST(Augment, SupervisedModeNeverReverses) {
    const Clip src = tone_clip(1.3, 300);
    AugmentConfig cfg;
    cfg.time_reverse_prob = 1.0;
    Rng rng(5);
    std::vector<double> truth(300);
    for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = static_cast<double>(i);
    for (int i = 0; i < 20; ++i) {
        const auto out = augment::apply(src, rng, cfg, Mode::supervised, 120, truth);
        EXPECT_FALSE(out.reversed);
        ASSERT_EQ(out.truth.size(), 120u);
        EXPECT_LT(out.truth.front(), out.truth.back());
        EXPECT_NEAR(out.truth[1] - out.truth[0], out.factor, 1e-9);
    }
}

TEST(Augment, FlipAndOffsetKeepSpectrumShape) {
    const Clip src = tone_clip(1.1, 300);
    AugmentConfig cfg = AugmentConfig::none();
    cfg.flip = true;
    cfg.flip_prob = 1.0;
    cfg.illumination = true;
    Rng a(9), b(9);
    const auto aug = augment::apply(src, a, cfg, Mode::unsupervised, 120);
    const auto ref = augment::apply(src, b, AugmentConfig::none(), Mode::unsupervised, 120);
    ASSERT_TRUE(aug.flipped);
    const auto p = trace_spectrum(aug.clip), q = trace_spectrum(ref.clip);
    // float storage of the offset frames limits agreement
    for (std::size_t k = 0; k < p.size(); ++k) EXPECT_NEAR(p.power[k], q.power[k], 1e-5 * (1.0 + q.power[k]));
    EXPECT_NEAR(aug.clip.at(0, 0, 0, 0) - aug.clip.at(0, 0, 3, 0), ref.clip.at(0, 0, 3, 0) - ref.clip.at(0, 0, 0, 0), 1e-6);
}

TEST(Augment, SeededDeterminism) {
    const Clip src = tone_clip(1.0, 300);
    Rng a(42), b(42);
    const auto x = augment::apply(src, a, {}, Mode::unsupervised, 120);
    const auto y = augment::apply(src, b, {}, Mode::unsupervised, 120);
    EXPECT_EQ(x.clip.data, y.clip.data);
    EXPECT_EQ(x.factor, y.factor);
}

TEST(Augment, Errors) {
    Rng rng(0);
    // 120 frames at c = 1.4 need 168 input frames
    EXPECT_EQ(augment::frames_needed(120, 1.4), 168u);
    EXPECT_THROW(augment::apply(tone_clip(1.0, 167), rng, {}, Mode::unsupervised, 120), Error);
    EXPECT_NO_THROW(augment::apply(tone_clip(1.0, 168), rng, {}, Mode::unsupervised, 120));
    AugmentConfig bad;
    bad.flip_prob = 1.5;
    EXPECT_THROW(augment::validate(bad), Error);
    bad = {};
    bad.resample_min = 2.0;
    EXPECT_THROW(augment::validate(bad), Error);
}
