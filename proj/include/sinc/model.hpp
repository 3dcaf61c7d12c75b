#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sinc/clip.hpp"
#include "sinc/diffcore.hpp"
#include "sinc/error.hpp"

namespace sinc::model {

enum class Variant : std::uint32_t {
    spatial_mean_tcnn = 0,  // spatial mean per channel, then a temporal CNN
    small_3d_cnn = 1,       // 3x3xK conv3d blocks on the frames, then a temporal head
};

inline const char* to_string(Variant v) {
    return v == Variant::small_3d_cnn ? "small-3d-cnn" : "spatial-mean-tcnn";
}

inline Variant variant_from_string(const std::string& s) {
    if (s == "spatial-mean-tcnn") return Variant::spatial_mean_tcnn;
    if (s == "small-3d-cnn") return Variant::small_3d_cnn;
    fail(ErrorKind::invalid_config, "unknown model variant '" + s + "'");
}

struct ModelConfig {
    Variant variant = Variant::spatial_mean_tcnn;
    std::size_t channels = 16;
    std::size_t layers = 3;
    std::size_t temporal_kernel = 5;
    std::size_t input_channels = 3;
};

inline void validate(const ModelConfig& cfg) {
    require(cfg.layers >= 1, ErrorKind::invalid_config, "model needs at least one layer");
    require(cfg.temporal_kernel % 2 == 1, ErrorKind::invalid_config, "temporal kernel width must be odd");
    require(cfg.channels >= 1 && cfg.input_channels >= 1, ErrorKind::invalid_config, "channel counts must be positive");
    require(cfg.variant != Variant::small_3d_cnn || cfg.layers >= 2, ErrorKind::invalid_config,
            "small-3d-cnn needs at least two layers (conv3d blocks plus the temporal head)");
}

/// Canonical text form, hashed into the parameter file header.
inline std::string describe(const ModelConfig& cfg) {
    return std::string("variant=") + to_string(cfg.variant) + ";channels=" + std::to_string(cfg.channels) +
           ";layers=" + std::to_string(cfg.layers) + ";kernel=" + std::to_string(cfg.temporal_kernel) +
           ";in=" + std::to_string(cfg.input_channels);
}

/// Trainable tensors in declared order: (weight, bias) per layer.
struct ModelParams {
    ModelConfig config;
    std::uint64_t seed = 0;
    std::vector<ad::Tensor> tensors;

    void zero_grad() {
        for (auto& t : tensors) t.zero_grad();
    }
    std::size_t count() const {
        std::size_t n = 0;
        for (const auto& t : tensors) n += t.size();
        return n;
    }
};

/// Shapes of every tensor for a config, in declared order.
inline std::vector<ad::Shape> param_shapes(const ModelConfig& cfg) {
    validate(cfg);
    std::vector<ad::Shape> shapes;
    const std::size_t k = cfg.temporal_kernel;
    if (cfg.variant == Variant::spatial_mean_tcnn) {
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            const std::size_t cin = l == 0 ? cfg.input_channels : cfg.channels;
            const std::size_t cout = l + 1 == cfg.layers ? 1 : cfg.channels;
            shapes.push_back({cout, cin, k});
            shapes.push_back({cout});
        }
    } else {
        for (std::size_t l = 0; l + 1 < cfg.layers; ++l) {
            const std::size_t cin = l == 0 ? cfg.input_channels : cfg.channels;
            shapes.push_back({cfg.channels, cin, k, 3, 3});
            shapes.push_back({cfg.channels});
        }
        shapes.push_back({1, cfg.channels, k});
        shapes.push_back({1});
    }
    return shapes;
}

/// Uniform in +-sqrt(1/fan_in) for weights and biases of each layer.
inline ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    ModelParams p;
    p.config = cfg;
    p.seed = seed;
    std::mt19937_64 rng(seed);
    const auto shapes = param_shapes(cfg);
    for (std::size_t i = 0; i < shapes.size(); i += 2) {
        const ad::Shape& ws = shapes[i];
        std::size_t fan_in = 1;
        for (std::size_t d = 1; d < ws.size(); ++d) fan_in *= ws[d];
        const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (std::size_t j = 0; j < 2; ++j) {
            ad::Tensor t = ad::Tensor::zeros(shapes[i + j], true);
            for (double& v : t.data) v = dist(rng);
            p.tensors.push_back(std::move(t));
        }
    }
    return p;
}

/// Minimum clip length for which every temporal layer sees a full kernel.
inline std::size_t receptive_field(const ModelConfig& cfg) {
    return cfg.layers * (cfg.temporal_kernel - 1) + 1;
}

namespace detail {

// Center each input trace over time and scale the whole clip to unit RMS.
inline void normalize_traces(std::vector<double>& data, std::size_t traces, std::size_t frames, bool trace_major) {
    double ss = 0.0;
    for (std::size_t r = 0; r < traces; ++r) {
        auto at = [&](std::size_t t) -> double& { return trace_major ? data[r * frames + t] : data[t * traces + r]; };
        double m = 0.0;
        for (std::size_t t = 0; t < frames; ++t) m += at(t);
        m /= static_cast<double>(frames);
        for (std::size_t t = 0; t < frames; ++t) {
            at(t) -= m;
            ss += at(t) * at(t);
        }
    }
    const double rms = std::sqrt(ss / static_cast<double>(data.size()));
    if (rms > 1e-12) {
        for (double& v : data) v /= rms;
    }
}

}  // namespace detail

namespace detail {

inline ad::Var forward_impl(ad::Tape& tape, const Clip& clip, const ModelConfig& cfg, const std::vector<ad::Var>& p) {
    validate(clip);
    require(clip.channels == cfg.input_channels, ErrorKind::invalid_input,
            "clip has " + std::to_string(clip.channels) + " channels, model expects " +
                std::to_string(cfg.input_channels));
    require(clip.frames >= receptive_field(cfg), ErrorKind::invalid_input, "clip shorter than the temporal receptive field");
    require(p.size() == param_shapes(cfg).size(), ErrorKind::invalid_input, "parameter count mismatch");

    const std::size_t T = clip.frames, C = clip.channels;
    const std::size_t pad = (cfg.temporal_kernel - 1) / 2;
    ad::Var x;
    std::size_t next = 0;
    if (cfg.variant == Variant::spatial_mean_tcnn) {
        std::vector<double> traces(C * T);
        for (std::size_t c = 0; c < C; ++c) {
            const auto m = clip.spatial_mean(c);
            std::copy(m.begin(), m.end(), traces.begin() + static_cast<std::ptrdiff_t>(c * T));
        }
        detail::normalize_traces(traces, C, T, true);
        x = tape.constant({C, T}, std::move(traces));
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            x = ad::temporal_conv(ad::replicate_pad(x, 1, pad, pad), p[next], p[next + 1]);
            next += 2;
            if (l + 1 < cfg.layers) x = ad::tanh(x);
        }
        return x;
    }

    require(clip.height >= 2 * (cfg.layers - 1) + 1 && clip.width >= 2 * (cfg.layers - 1) + 1, ErrorKind::invalid_input,
            "frames too small for the conv3d stack");
    const std::size_t H = clip.height, W = clip.width;
    std::vector<double> vol(C * T * H * W);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t xx = 0; xx < W; ++xx) vol[((c * T + t) * H + y) * W + xx] = clip.at(t, y, xx, c);
    // [C, T, H, W]: each (c, y, x) trace is strided by H*W along time.
    {
        const std::size_t traces = H * W;
        for (std::size_t c = 0; c < C; ++c) {
            std::vector<double> plane(vol.begin() + static_cast<std::ptrdiff_t>(c * T * traces),
                                      vol.begin() + static_cast<std::ptrdiff_t>((c + 1) * T * traces));
            // Center per pixel; the global scale is applied below.
            for (std::size_t r = 0; r < traces; ++r) {
                double m = 0.0;
                for (std::size_t t = 0; t < T; ++t) m += plane[t * traces + r];
                m /= static_cast<double>(T);
                for (std::size_t t = 0; t < T; ++t) plane[t * traces + r] -= m;
            }
            std::copy(plane.begin(), plane.end(), vol.begin() + static_cast<std::ptrdiff_t>(c * T * traces));
        }
        double ss = 0.0;
        for (double v : vol) ss += v * v;
        const double rms = std::sqrt(ss / static_cast<double>(vol.size()));
        if (rms > 1e-12) {
            for (double& v : vol) v /= rms;
        }
    }
    x = tape.constant({C, T, H, W}, std::move(vol));
    for (std::size_t l = 0; l + 1 < cfg.layers; ++l) {
        x = ad::tanh(ad::conv3d(ad::replicate_pad(x, 1, pad, pad), p[next], p[next + 1]));
        next += 2;
    }
    x = ad::mean_over_axes(x, {2, 3});
    return ad::temporal_conv(ad::replicate_pad(x, 1, pad, pad), p[next], p[next + 1]);
}

}  // namespace detail

/// Record the forward pass on `tape`, returning a [1, T] waveform. The
/// parameter tensors become leaves, so backward() accumulates into their grad.
inline ad::Var forward(ad::Tape& tape, const Clip& clip, ModelParams& params) {
    std::vector<ad::Var> p;
    for (auto& t : params.tensors) p.push_back(tape.leaf(t));
    return detail::forward_impl(tape, clip, params.config, p);
}

/// Same as above with the parameters entering as constants.
inline ad::Var forward(ad::Tape& tape, const Clip& clip, const ModelParams& params) {
    std::vector<ad::Var> p;
    for (const auto& t : params.tensors) p.push_back(tape.constant(t.shape, t.data));
    return detail::forward_impl(tape, clip, params.config, p);
}

/// Waveform prediction without gradient tracking.
inline std::vector<double> predict(const Clip& clip, const ModelParams& params) {
    ad::Tape tape;
    const ad::Var y = forward(tape, clip, params);
    return {y.value().begin(), y.value().end()};
}

}  // namespace sinc::model
