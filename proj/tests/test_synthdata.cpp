#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "sinc/eval.hpp"
#include "sinc/synthdata.hpp"

using namespace sinc;
using synth::GenConfig;

namespace {

GenConfig quiet() {
    GenConfig c;
    c.n_clips = 1;
    c.pulse_amp = 0.0;
    c.drift_amp = c.flicker_amp = c.noise_sigma = 0.0;
    return c;
}

// In-band peak of the green spatial-mean trace, in bpm.
double green_peak_bpm(const Clip& c) {
    const auto s = spectral::power_spectrum({c.spatial_mean(1), c.fps});
    const auto in = spectral::band_mask(s, {});
    return 60.0 * s.freqs[spectral::peak_bin(s.power, in)];
}

// Regularized upper incomplete gamma Q(a, x) for the chi-square tail.
double gamma_q(double a, double x) {
    if (x < a + 1.0) {
        double sum = 1.0 / a, term = sum;
        for (int n = 1; n < 500; ++n) {
            term *= x / (a + n);
            sum += term;
        }
        return 1.0 - sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
    }
    double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
    for (int i = 1; i < 500; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        c = b + an / c;
        d = 1.0 / d;
        h *= d * c;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

TEST(Generate, NoSignalNoDistractorsIsStatic) {
    const auto ds = synth::generate(quiet());
    const Clip& c = ds.clips[0];
    const std::size_t fs = c.frame_size();
    for (std::size_t t = 1; t < c.frames; ++t)
        for (std::size_t k = 0; k < fs; ++k) ASSERT_EQ(c.data[t * fs + k], c.data[k]);
}

TEST(Generate, ShapesAndLabels) {
    GenConfig cfg;
    cfg.n_clips = 5;
    const auto ds = synth::generate(cfg);
    ASSERT_EQ(ds.size(), 5u);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        EXPECT_EQ(ds.clips[i].frames, cfg.frames);
        EXPECT_EQ(ds.clips[i].height, 8u);
        EXPECT_EQ(ds.clips[i].width, 8u);
        EXPECT_EQ(ds.clips[i].channels, 3u);
        EXPECT_EQ(ds.truth[i].waveform.size(), cfg.frames);
        EXPECT_GE(ds.truth[i].rate_bpm, 45.0);
        EXPECT_LE(ds.truth[i].rate_bpm, 165.0);
        for (float v : ds.clips[i].data) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
    }
    // clip length covers the largest resample factor
    EXPECT_GE(cfg.frames, 168u);
}

TEST(Generate, PeakAt72BpmWithDefaults) {
    GenConfig cfg;
    cfg.n_clips = 3;
    cfg.fixed_rate_bpm = 72.0;
    const auto ds = synth::generate(cfg);
    for (const auto& c : ds.clips) EXPECT_NEAR(green_peak_bpm(c), 72.0, 0.34);
}

TEST(Generate, EmbeddedSignalRecoverableWithoutDistractors) {
    GenConfig cfg;
    cfg.n_clips = 200;
    cfg.drift_amp = cfg.flicker_amp = cfg.noise_sigma = 0.0;
    const auto ds = synth::generate(cfg);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (std::abs(green_peak_bpm(ds.clips[i]) - ds.truth[i].rate_bpm) <= 60.0 / 180.0 + 1e-9) ++hits;
    }
    EXPECT_GE(static_cast<double>(hits) / 200.0, 0.99) << hits << "/200";
}

TEST(Generate, EmbeddedSignalRecoverableWithDefaults) {
    GenConfig cfg;
    cfg.n_clips = 200;
    const auto ds = synth::generate(cfg);
    // one natural bin of a 10 s clip
    const double tol = 60.0 * cfg.fps / static_cast<double>(cfg.frames);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (std::abs(green_peak_bpm(ds.clips[i]) - ds.truth[i].rate_bpm) <= tol) ++hits;
    }
    EXPECT_GE(static_cast<double>(hits) / 200.0, 0.95) << hits << "/200";
}

TEST(Generate, HeavyNoiseDropsTraceSnrBelowZero) {
    GenConfig cfg;
    cfg.n_clips = 10;
    cfg.noise_sigma = 10.0 * cfg.pulse_amp * 8.0;  // 10x the pulse after 8x8 averaging
    cfg.drift_amp = cfg.flicker_amp = 0.0;
    const auto ds = synth::generate(cfg);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto snr = eval::snr_db({ds.clips[i].spatial_mean(1), 30.0}, ds.truth[i].rate_bpm);
        ASSERT_TRUE(snr.has_value());
        EXPECT_LT(*snr, 0.0);
    }
}

TEST(Generate, RatesAreUniform) {
    GenConfig cfg;
    cfg.n_clips = 2000;
    cfg.frames = 2;
    cfg.height = cfg.width = 1;
    const auto ds = synth::generate(cfg);
    const std::size_t bins = 12;
    std::vector<double> counts(bins, 0.0);
    for (const auto& gt : ds.truth) {
        const auto b = std::min<std::size_t>(bins - 1, static_cast<std::size_t>((gt.rate_bpm - 45.0) / 10.0));
        counts[b] += 1.0;
    }
    const double expect = 2000.0 / bins;
    double chi2 = 0.0;
    for (double c : counts) chi2 += (c - expect) * (c - expect) / expect;
    const double p = gamma_q(0.5 * (bins - 1), 0.5 * chi2);
    EXPECT_GT(p, 0.01) << "chi2 " << chi2;
}

TEST(Generate, ClipsAreIndependentOfCount) {
    GenConfig a;
    a.n_clips = 3;
    GenConfig b = a;
    b.n_clips = 7;
    const auto x = synth::generate(a), y = synth::generate(b);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(x.clips[i].data, y.clips[i].data);
        EXPECT_EQ(x.truth[i].rate_bpm, y.truth[i].rate_bpm);
    }
}

TEST(Generate, InvalidConfigs) {
    auto bad = [](auto mutate) {
        GenConfig c;
        mutate(c);
        try {
            synth::generate(c);
            return false;
        } catch (const Error& e) {
            return e.kind() == ErrorKind::invalid_config;
        }
    };
    EXPECT_TRUE(bad([](GenConfig& c) { c.drift_hz = 0.8; }));
    EXPECT_TRUE(bad([](GenConfig& c) { c.flicker_hz = 2.0; }));
    EXPECT_TRUE(bad([](GenConfig& c) { c.flicker_hz = 16.0; }));
    EXPECT_TRUE(bad([](GenConfig& c) { c.rate_min_bpm = 30.0; }));
    EXPECT_TRUE(bad([](GenConfig& c) { c.pulse_amp = -1.0; }));
    EXPECT_TRUE(bad([](GenConfig& c) { c.n_clips = 0; }));
}

TEST(Split, SizesDeterminismAndPartition) {
    const auto s = synth::split(200, {0.6, 0.2, 0.2}, 3);
    EXPECT_EQ(s.train.size(), 120u);
    EXPECT_EQ(s.val.size(), 40u);
    EXPECT_EQ(s.test.size(), 40u);
    const auto t = synth::split(200, {0.6, 0.2, 0.2}, 3);
    EXPECT_EQ(s.train, t.train);
    EXPECT_EQ(s.val, t.val);
    EXPECT_EQ(s.test, t.test);
    std::set<std::size_t> all(s.train.begin(), s.train.end());
    all.insert(s.val.begin(), s.val.end());
    all.insert(s.test.begin(), s.test.end());
    EXPECT_EQ(all.size(), 200u);
    EXPECT_NE(synth::split(200, {0.6, 0.2, 0.2}, 4).train, s.train);
}

TEST(Split, EmptyPartitionIsConfigError) {
    try {
        synth::split(200, {1.0, 0.0, 0.0}, 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::invalid_config);
    }
    EXPECT_THROW(synth::split(200, {0.5, 0.2, 0.2}, 0), Error);
}
