#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "sinc/clip.hpp"
#include "sinc/error.hpp"
#include "sinc/rng.hpp"

namespace sinc::augment {

enum class Mode { unsupervised, supervised };

/// Amplitudes are fractions of the [0, 1] pixel range.
struct AugmentConfig {
    bool flip = true;
    double flip_prob = 0.5;
    bool illumination = true;
    double illum_offset_sigma = 0.1;
    bool pixel_noise = true;
    double pixel_noise_sigma = 0.008;
    bool resample = true;
    double resample_min = 0.66;
    double resample_max = 1.4;
    bool time_reverse = true;
    double time_reverse_prob = 0.5;

    static AugmentConfig none() {
        AugmentConfig c;
        c.flip = c.illumination = c.pixel_noise = c.resample = c.time_reverse = false;
        return c;
    }
};

inline void validate(const AugmentConfig& c) {
    require(c.flip_prob >= 0.0 && c.flip_prob <= 1.0 && c.time_reverse_prob >= 0.0 && c.time_reverse_prob <= 1.0,
            ErrorKind::invalid_config, "augmentation probabilities must lie in [0, 1]");
    require(c.resample_min > 0.0 && c.resample_min <= c.resample_max, ErrorKind::invalid_config,
            "resample range must satisfy 0 < min <= max");
    require(c.illum_offset_sigma >= 0.0 && c.pixel_noise_sigma >= 0.0, ErrorKind::invalid_config,
            "noise levels must be non-negative");
}

/// Input frames consumed to produce `out_frames` at speed-up factor `c`.
inline std::size_t frames_needed(std::size_t out_frames, double c) {
    return static_cast<std::size_t>(std::ceil(static_cast<double>(out_frames - 1) * c - 1e-9)) + 1;
}

struct Augmented {
    Clip clip;
    std::vector<double> truth;  // transformed alongside the clip when given
    double factor = 1.0;
    double start = 0.0;
    bool flipped = false;
    bool reversed = false;
};

/// Frames [start, start + n).
inline Clip crop(const Clip& clip, std::size_t start, std::size_t n) {
    require(start + n <= clip.frames && n >= 1, ErrorKind::invalid_input, "crop outside the clip");
    Clip out(n, clip.height, clip.width, clip.channels, clip.fps);
    const std::size_t fs = clip.frame_size();
    std::copy(clip.data.begin() + static_cast<std::ptrdiff_t>(start * fs),
              clip.data.begin() + static_cast<std::ptrdiff_t>((start + n) * fs), out.data.begin());
    return out;
}

/// Linear interpolation of frames at start + i * c, which multiplies every
/// temporal frequency by c.
inline Clip resample(const Clip& clip, double start, double c, std::size_t n) {
    const double last = start + c * static_cast<double>(n - 1);
    require(start >= 0.0 && last <= static_cast<double>(clip.frames - 1) + 1e-9, ErrorKind::invalid_input,
            "not enough frames to resample");
    Clip out(n, clip.height, clip.width, clip.channels, clip.fps);
    const std::size_t fs = clip.frame_size();
    for (std::size_t i = 0; i < n; ++i) {
        const double pos = std::min(start + c * static_cast<double>(i), static_cast<double>(clip.frames - 1));
        auto lo = static_cast<std::size_t>(std::floor(pos));
        if (lo + 1 >= clip.frames) lo = clip.frames >= 2 ? clip.frames - 2 : 0;
        const double a = clip.frames >= 2 ? pos - static_cast<double>(lo) : 0.0;
        const std::size_t hi = clip.frames >= 2 ? lo + 1 : lo;
        for (std::size_t k = 0; k < fs; ++k) {
            const double v0 = clip.data[lo * fs + k], v1 = clip.data[hi * fs + k];
            out.data[i * fs + k] = static_cast<float>(v0 + a * (v1 - v0));
        }
    }
    return out;
}

inline std::vector<double> resample_trace(std::span<const double> x, double start, double c, std::size_t n) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double pos = std::min(start + c * static_cast<double>(i), static_cast<double>(x.size() - 1));
        auto lo = static_cast<std::size_t>(std::floor(pos));
        if (lo + 1 >= x.size()) lo = x.size() - 2;
        const double a = pos - static_cast<double>(lo);
        out[i] = x[lo] + a * (x[lo + 1] - x[lo]);
    }
    return out;
}

/// Draw one augmented training view of `out_frames` frames. Supervised mode
/// never reverses time. `truth`, when non-empty, is resampled, cropped and
/// reversed with the clip.
inline Augmented apply(const Clip& clip, Rng& rng, const AugmentConfig& cfg, Mode mode, std::size_t out_frames,
                       std::span<const double> truth = {}) {
    validate(cfg);
    validate(clip);
    require(out_frames >= 2, ErrorKind::invalid_input, "need at least 2 output frames");
    require(truth.empty() || truth.size() == clip.frames, ErrorKind::invalid_input, "truth length differs from clip");
    const double c_max = cfg.resample ? cfg.resample_max : 1.0;
    require(clip.frames >= frames_needed(out_frames, c_max), ErrorKind::invalid_input,
            "clip has too few frames for the largest resample factor");

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Augmented out;
    if (cfg.resample) {
        out.factor = cfg.resample_min + (cfg.resample_max - cfg.resample_min) * unit(rng);
        const double span = out.factor * static_cast<double>(out_frames - 1);
        out.start = (static_cast<double>(clip.frames - 1) - span) * unit(rng);
        out.clip = resample(clip, out.start, out.factor, out_frames);
        if (!truth.empty()) out.truth = resample_trace(truth, out.start, out.factor, out_frames);
    } else {
        std::uniform_int_distribution<std::size_t> pick(0, clip.frames - out_frames);
        const std::size_t s = pick(rng);
        out.start = static_cast<double>(s);
        out.clip = crop(clip, s, out_frames);
        if (!truth.empty()) out.truth.assign(truth.begin() + static_cast<std::ptrdiff_t>(s),
                                             truth.begin() + static_cast<std::ptrdiff_t>(s + out_frames));
    }

    Clip& v = out.clip;
    if (cfg.flip && unit(rng) < cfg.flip_prob) {
        out.flipped = true;
        for (std::size_t t = 0; t < v.frames; ++t)
            for (std::size_t y = 0; y < v.height; ++y)
                for (std::size_t x = 0; x < v.width / 2; ++x)
                    for (std::size_t c = 0; c < v.channels; ++c) std::swap(v.at(t, y, x, c), v.at(t, y, v.width - 1 - x, c));
    }
    if (mode == Mode::unsupervised && cfg.time_reverse && unit(rng) < cfg.time_reverse_prob) {
        out.reversed = true;
        const std::size_t fs = v.frame_size();
        for (std::size_t t = 0; t < v.frames / 2; ++t)
            std::swap_ranges(v.data.begin() + static_cast<std::ptrdiff_t>(t * fs),
                             v.data.begin() + static_cast<std::ptrdiff_t>((t + 1) * fs),
                             v.data.begin() + static_cast<std::ptrdiff_t>((v.frames - 1 - t) * fs));
        std::reverse(out.truth.begin(), out.truth.end());
    }
    if (cfg.illumination) {
        std::normal_distribution<double> g(0.0, cfg.illum_offset_sigma);
        const auto off = static_cast<float>(g(rng));
        for (float& p : v.data) p += off;
    }
    if (cfg.pixel_noise && cfg.pixel_noise_sigma > 0.0) {
        std::normal_distribution<double> g(0.0, cfg.pixel_noise_sigma);
        for (float& p : v.data) p += static_cast<float>(g(rng));
    }
    return out;
}

}  // namespace sinc::augment
