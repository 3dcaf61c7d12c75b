#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "sinc/eval.hpp"

using namespace sinc;
using spectral::SignalWindow;

namespace {

SignalWindow tones(std::vector<std::pair<double, double>> bpm_amp, double seconds, double fs = 30.0) {
    const auto n = static_cast<std::size_t>(std::llround(seconds * fs));
    std::vector<double> x(n, 0.0);
    for (std::size_t t = 0; t < n; ++t)
        for (auto [bpm, a] : bpm_amp)
            x[t] += a * std::sin(2.0 * std::numbers::pi * bpm / 60.0 * static_cast<double>(t) / fs + 0.3);
    return {x, fs};
}

}  // namespace

TEST(PulseRates, GridAlignedToneIsExact) {
    const auto s = eval::estimate_pulse_rates(tones({{72.0, 1.0}}, 30.0));
    ASSERT_EQ(s.size(), 21u);
    for (std::size_t i = 0; i < s.size(); ++i) {
        EXPECT_NEAR(s.rates_bpm[i], 72.0, 1e-9);
        EXPECT_DOUBLE_EQ(s.window_starts_s[i], static_cast<double>(i));
    }
}

TEST(PulseRates, StrongerToneWins) {
    for (double r : eval::estimate_pulse_rates(tones({{72.0, 1.0}, {100.0, 0.5}}, 30.0)).rates_bpm)
        EXPECT_NEAR(r, 72.0, 1e-9);
}

TEST(PulseRates, OutOfBandPeakIgnored) {
    for (double r : eval::estimate_pulse_rates(tones({{30.0, 2.0}, {80.0, 1.0}}, 20.0)).rates_bpm)
        EXPECT_NEAR(r, 80.0, 0.34);
}

TEST(PulseRates, OffGridToneWithinOneBin) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(45.0, 170.0);
    for (int k = 0; k < 30; ++k) {
        const double bpm = u(rng);
        const auto s = eval::estimate_pulse_rates(tones({{bpm, 1.0}}, 10.0));
        ASSERT_EQ(s.size(), 1u);
        EXPECT_NEAR(s.rates_bpm[0], bpm, 0.34) << bpm;
    }
}

TEST(PulseRates, WindowLongerThanSignal) {
    try {
        eval::estimate_pulse_rates(tones({{72.0, 1.0}}, 9.0));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::invalid_input);
    }
}

TEST(Metrics, HandExamples) {
    auto m = eval::compute_metrics(std::vector<double>{70, 72}, std::vector<double>{72, 72});
    EXPECT_DOUBLE_EQ(m.mae_bpm, 1.0);
    EXPECT_NEAR(m.rmse_bpm, std::sqrt(2.0), 1e-12);
    EXPECT_FALSE(m.pearson_r.has_value());

    const std::vector<double> g{60, 75, 90, 120};
    m = eval::compute_metrics(g, g);
    EXPECT_EQ(m.mae_bpm, 0.0);
    EXPECT_EQ(m.rmse_bpm, 0.0);
    EXPECT_NEAR(*m.pearson_r, 1.0, 1e-15);

    m = eval::compute_metrics(std::vector<double>{60, 70, 80}, std::vector<double>{62, 69, 81});
    EXPECT_NEAR(m.mae_bpm, 4.0 / 3.0, 1e-12);
    // deviations (-10,0,10) and (-8.667,-1.667,10.333)
    const double sab = 10.0 * (8.0 + 2.0 / 3.0) + 10.0 * (10.0 + 1.0 / 3.0);
    const double sbb = std::pow(26.0 / 3.0, 2) + std::pow(5.0 / 3.0, 2) + std::pow(31.0 / 3.0, 2);
    EXPECT_NEAR(*m.pearson_r, sab / std::sqrt(200.0 * sbb), 1e-12);
    EXPECT_NEAR(*m.pearson_r, 0.98865, 1e-5);
}

TEST(Metrics, LengthMismatch) {
    try {
        eval::compute_metrics(std::vector<double>{1, 2}, std::vector<double>{1});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::invalid_input);
    }
}

TEST(Metrics, MaeNeverExceedsRmse) {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(40.0, 180.0);
    std::uniform_int_distribution<int> len(1, 50);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> a(static_cast<std::size_t>(len(rng))), b(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] = u(rng);
            b[i] = u(rng);
        }
        const auto m = eval::compute_metrics(a, b);
        ASSERT_GE(m.mae_bpm, 0.0);
        ASSERT_LE(m.mae_bpm, m.rmse_bpm * (1.0 + 1e-12));
        if (m.pearson_r) {
            ASSERT_TRUE(*m.pearson_r >= -1.0 && *m.pearson_r <= 1.0);
        }
    }
}

TEST(Metrics, PearsonScaleAndShiftInvariant) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    std::vector<double> a(40), b(40), a2(40), b2(40);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = g(rng);
        b[i] = a[i] + g(rng);
        a2[i] = 3.5 * a[i] + 17.0;
        b2[i] = 0.01 * b[i] - 4.0;
    }
    EXPECT_NEAR(*eval::pearson(a, b), *eval::pearson(a2, b2), 1e-12);
    for (auto& v : b2) v = -v;
    EXPECT_NEAR(*eval::pearson(a, b), -*eval::pearson(a2, b2), 1e-12);
}

TEST(Snr, PureToneHitsCeiling) {
    EXPECT_EQ(*eval::snr_db(tones({{72.0, 1.0}}, 10.0), 72.0), 60.0);
    // on a padded grid the window's sidelobes leak past +-6 bpm
    eval::SnrOptions o;
    o.resolution_hz = spectral::kDefaultResolutionHz;
    EXPECT_LT(*eval::snr_db(tones({{72.0, 1.0}}, 10.0), 72.0, o), 20.0);
}

TEST(Snr, EqualTonesGiveZeroDb) {
    const auto s = eval::snr_db(tones({{72.0, 1.0}, {102.0, 1.0}}, 30.0), 72.0);
    ASSERT_TRUE(s.has_value());
    EXPECT_NEAR(*s, 0.0, 0.1);
}

TEST(Snr, SecondHarmonicCountsAsSignalWhenFlagged) {
    const auto sig = tones({{60.0, 1.0}, {120.0, 1.0}}, 30.0);
    EXPECT_NEAR(*eval::snr_db(sig, 60.0), 0.0, 0.1);
    eval::SnrOptions o;
    o.include_second_harmonic = true;
    EXPECT_EQ(*eval::snr_db(sig, 60.0, o), 60.0);
}

TEST(Snr, WhiteNoiseIsNegativeOnAverage) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> rate(45.0, 165.0);
    double mean = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> x(300);
        for (double& v : x) v = g(rng);
        mean += *eval::snr_db({x, 30.0}, rate(rng), {6.0, false, {}, 0.05});
    }
    mean /= 1000.0;
    EXPECT_LT(mean, 0.0);
}

TEST(Snr, MoreNoiseOutsideTheWindowLowersSnr) {
    double prev = 1e9;
    for (double a : {0.1, 0.2, 0.4, 0.8}) {
        const double s = *eval::snr_db(tones({{72.0, 1.0}, {120.0, a}}, 20.0), 72.0);
        EXPECT_LT(s, prev);
        prev = s;
    }
}

TEST(Snr, EmptyBandIsNull) {
    EXPECT_FALSE(eval::snr_db({std::vector<double>(300, 1.0), 30.0}, 72.0).has_value());
    EXPECT_THROW(eval::snr_db(tones({{72.0, 1.0}}, 10.0), 200.0), Error);
}

TEST(Collapse, Examples) {
    const auto a = tones({{72.0, 1.0}}, 4.0);
    const std::vector<SignalWindow> same{a, a, a};
    EXPECT_EQ(eval::collapse_diagnostic(same), 0.0);
    const std::vector<SignalWindow> spread{tones({{50.0, 1.0}}, 12.0), tones({{90.0, 1.0}}, 12.0),
                                           tones({{130.0, 1.0}}, 12.0)};
    EXPECT_NEAR(eval::collapse_diagnostic(spread), std::sqrt(3200.0 / 3.0), 1e-6);
    EXPECT_NEAR(eval::rate_dispersion(std::vector<double>{50, 90, 130}), 32.66, 5e-3);
    EXPECT_THROW(eval::collapse_diagnostic(std::span<const SignalWindow>(same).first(1)), Error);
}

TEST(Collapse, NeverNegative) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    for (int k = 0; k < 20; ++k) {
        std::vector<SignalWindow> b;
        for (int i = 0; i < 4; ++i) {
            std::vector<double> x(120);
            for (double& v : x) v = g(rng);
            b.push_back({x, 30.0});
        }
        EXPECT_GE(eval::collapse_diagnostic(b), 0.0);
    }
}

TEST(Report, CsvHeaderAndRows) {
    eval::MetricsReport rep;
    rep.windows.push_back({0, 0.0, 70.0, 72.0, 3.5});
    rep.windows.push_back({1, 1.0, 80.0, 79.0, std::nullopt});
    std::ostringstream os;
    eval::write_csv(os, rep);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "# sinc-metrics v1");
    std::getline(is, line);
    EXPECT_EQ(line, "clip,window_start_s,pred_bpm,gt_bpm,abs_err_bpm,snr_db");
    std::getline(is, line);
    EXPECT_EQ(line, "0,0,70,72,2,3.5");
    std::getline(is, line);
    EXPECT_EQ(line, "1,1,80,79,1,");
}
