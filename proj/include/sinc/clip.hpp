#pragma once

#include <cstddef>
#include <vector>

#include "sinc/error.hpp"

namespace sinc {

/// A video tensor of frames x height x width x channels, stored t-major
/// (channel fastest), with values nominally in [0, 1].
struct Clip {
    std::size_t frames = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 3;
    double fps = 30.0;
    std::vector<float> data;

    Clip() = default;
    Clip(std::size_t t, std::size_t h, std::size_t w, std::size_t c, double rate)
        : frames(t), height(h), width(w), channels(c), fps(rate), data(t * h * w * c, 0.0f) {}

    std::size_t index(std::size_t t, std::size_t y, std::size_t x, std::size_t c) const noexcept {
        return ((t * height + y) * width + x) * channels + c;
    }
    float& at(std::size_t t, std::size_t y, std::size_t x, std::size_t c) { return data[index(t, y, x, c)]; }
    float at(std::size_t t, std::size_t y, std::size_t x, std::size_t c) const { return data[index(t, y, x, c)]; }

    std::size_t frame_size() const noexcept { return height * width * channels; }

    /// Per-frame spatial mean of one channel.
    std::vector<double> spatial_mean(std::size_t c) const {
        std::vector<double> out(frames, 0.0);
        const double inv = 1.0 / static_cast<double>(height * width);
        for (std::size_t t = 0; t < frames; ++t) {
            double s = 0.0;
            for (std::size_t y = 0; y < height; ++y)
                for (std::size_t x = 0; x < width; ++x) s += at(t, y, x, c);
            out[t] = s * inv;
        }
        return out;
    }
};

inline void validate(const Clip& clip) {
    require(clip.frames >= 1 && clip.height >= 1 && clip.width >= 1 && clip.channels >= 1, ErrorKind::invalid_input,
            "clip has an empty dimension");
    require(clip.data.size() == clip.frames * clip.frame_size(), ErrorKind::invalid_input,
            "clip data does not match its dimensions");
    require(clip.fps > 0.0, ErrorKind::invalid_input, "clip fps must be positive");
}

}  // namespace sinc
