#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sinc/clip.hpp"
#include "sinc/error.hpp"
#include "sinc/rng.hpp"
#include "sinc/spectral.hpp"

namespace sinc::synth {

/// Relative pulse gain per colour channel (R, G, B).
inline constexpr std::array<double, 3> kPulseChannelGain{0.3, 1.0, 0.5};

struct GenConfig {
    std::size_t n_clips = 200;
    std::size_t frames = 300;
    std::size_t height = 8;
    std::size_t width = 8;
    double fps = 30.0;
    double pulse_amp = 0.01;
    double harmonic_ratio = 0.25;
    double rate_min_bpm = 45.0;
    double rate_max_bpm = 165.0;
    /// Forces every clip to this rate when set.
    std::optional<double> fixed_rate_bpm;
    double drift_hz = 0.2;
    double drift_amp = 0.02;
    double flicker_hz = 4.0;
    double flicker_amp = 0.02;
    double noise_sigma = 0.05;
    spectral::BandLimits band{};
    std::uint64_t seed = 0;
};

inline void validate(const GenConfig& c) {
    require(c.n_clips >= 1, ErrorKind::invalid_config, "n_clips must be positive");
    require(c.frames >= 2 && c.height >= 1 && c.width >= 1, ErrorKind::invalid_config, "clip dimensions must be positive");
    require(c.fps > 0.0, ErrorKind::invalid_config, "fps must be positive");
    require(c.pulse_amp >= 0.0, ErrorKind::invalid_config, "pulse amplitude must be non-negative");
    require(c.harmonic_ratio >= 0.0, ErrorKind::invalid_config, "harmonic_ratio must be non-negative");
    require(c.rate_min_bpm >= 45.0 && c.rate_max_bpm <= 165.0 && c.rate_min_bpm <= c.rate_max_bpm,
            ErrorKind::invalid_config, "pulse rates must lie within [45, 165] bpm");
    if (c.fixed_rate_bpm) {
        require(*c.fixed_rate_bpm >= 45.0 && *c.fixed_rate_bpm <= 165.0, ErrorKind::invalid_config,
                "fixed rate must lie within [45, 165] bpm");
    }
    require(c.drift_amp >= 0.0 && c.flicker_amp >= 0.0 && c.noise_sigma >= 0.0, ErrorKind::invalid_config,
            "distractor amplitudes must be non-negative");
    require(c.drift_hz > 0.0 && c.drift_hz < c.band.lo, ErrorKind::invalid_config,
            "drift frequency must lie below the band");
    require(c.flicker_hz > c.band.hi && c.flicker_hz < c.fps / 2.0, ErrorKind::invalid_config,
            "flicker frequency must lie above the band and below Nyquist");
}

struct Distractors {
    double drift_hz = 0.0;
    double drift_amp = 0.0;
    double drift_phase = 0.0;
    double flicker_hz = 0.0;
    double flicker_amp = 0.0;
    double flicker_phase = 0.0;
    double noise_sigma = 0.0;
};

/// Hidden labels; only evaluation code reads these.
struct GroundTruth {
    std::vector<double> waveform;
    double rate_bpm = 0.0;
    double harmonic_phase = 0.0;
    Distractors distractors;
};

struct Dataset {
    GenConfig config;
    std::vector<Clip> clips;
    std::vector<GroundTruth> truth;

    std::size_t size() const noexcept { return clips.size(); }
};

/// One clip from its own RNG substream, so clips can be made independently.
inline std::pair<Clip, GroundTruth> generate_clip(const GenConfig& cfg, std::size_t index) {
    Rng rng = substream(cfg.seed, index);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double two_pi = 2.0 * std::numbers::pi;

    GroundTruth gt;
    gt.rate_bpm = cfg.fixed_rate_bpm ? *cfg.fixed_rate_bpm
                                     : cfg.rate_min_bpm + (cfg.rate_max_bpm - cfg.rate_min_bpm) * unit(rng);
    gt.harmonic_phase = two_pi * unit(rng);
    gt.distractors = {cfg.drift_hz, cfg.drift_amp, two_pi * unit(rng), cfg.flicker_hz,
                      cfg.flicker_amp, two_pi * unit(rng), cfg.noise_sigma};

    const std::size_t H = cfg.height, W = cfg.width, C = 3;
    std::vector<double> mask(H * W);
    for (double& m : mask) m = 0.6 + 0.8 * unit(rng);
    std::vector<double> base(H * W * C);
    const double tone = 0.4 + 0.2 * unit(rng);
    for (double& b : base) b = tone + 0.1 * (unit(rng) - 0.5);

    const double f = gt.rate_bpm / 60.0;
    Clip clip(cfg.frames, H, W, C, cfg.fps);
    gt.waveform.resize(cfg.frames);
    const Distractors& d = gt.distractors;
    for (std::size_t t = 0; t < cfg.frames; ++t) {
        const double ts = static_cast<double>(t) / cfg.fps;
        const double p = std::sin(two_pi * f * ts) + cfg.harmonic_ratio * std::sin(2.0 * two_pi * f * ts + gt.harmonic_phase);
        gt.waveform[t] = p;
        const double light = d.drift_amp * std::sin(two_pi * d.drift_hz * ts + d.drift_phase) +
                             d.flicker_amp * std::sin(two_pi * d.flicker_hz * ts + d.flicker_phase);
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                for (std::size_t c = 0; c < C; ++c) {
                    double v = base[(y * W + x) * C + c] + cfg.pulse_amp * mask[y * W + x] * kPulseChannelGain[c] * p +
                               light;
                    if (d.noise_sigma > 0.0) v += d.noise_sigma * gauss(rng);
                    clip.at(t, y, x, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
                }
    }
    return {std::move(clip), std::move(gt)};
}

inline Dataset generate(const GenConfig& cfg) {
    validate(cfg);
    Dataset ds;
    ds.config = cfg;
    ds.clips.reserve(cfg.n_clips);
    ds.truth.reserve(cfg.n_clips);
    for (std::size_t i = 0; i < cfg.n_clips; ++i) {
        auto [clip, gt] = generate_clip(cfg, i);
        ds.clips.push_back(std::move(clip));
        ds.truth.push_back(std::move(gt));
    }
    return ds;
}

/// Index partition of a dataset.
struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

/// Seeded shuffle, then contiguous train/val/test blocks. Partition sizes
/// are rounded for train and val; test takes the remainder.
inline Split split(std::size_t n, std::array<double, 3> fractions, std::uint64_t seed) {
    for (double f : fractions) require(f >= 0.0 && std::isfinite(f), ErrorKind::invalid_config, "split fractions must be >= 0");
    require(std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) < 1e-9, ErrorKind::invalid_config,
            "split fractions must sum to 1");
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng = substream(seed, 0x5911);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n)));
    const auto n_val = static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n)));
    require(n_train >= 1 && n_val >= 1 && n_train + n_val < n, ErrorKind::invalid_config,
            "split leaves an empty partition");
    Split s;
    s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train),
                 idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
    return s;
}

inline std::vector<Clip> select_clips(const Dataset& ds, const std::vector<std::size_t>& idx) {
    std::vector<Clip> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(ds.clips.at(i));
    return out;
}

inline std::vector<GroundTruth> select_truth(const Dataset& ds, const std::vector<std::size_t>& idx) {
    std::vector<GroundTruth> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(ds.truth.at(i));
    return out;
}

}  // namespace sinc::synth
