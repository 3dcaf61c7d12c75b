#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "sinc/clip.hpp"
#include "sinc/diffcore.hpp"
#include "sinc/losses.hpp"
#include "sinc/model.hpp"
#include "sinc/rng.hpp"
#include "sinc/spectral.hpp"

// Central finite-difference checks of every analytic gradient in the library.
namespace sinc::gradcheck {

struct Options {
    std::size_t trials = 50;
    std::size_t batch = 4;
    std::size_t length = 120;
    double fs = 30.0;
    double h = 1e-5;
    double tolerance = 1e-5;
    std::size_t coords_per_sample = 8;  // waveform coordinates probed per sample and trial
    std::uint64_t seed = 0;
};

struct Row {
    std::string name;
    std::size_t trials = 0;
    std::size_t checked = 0;
    std::size_t skipped = 0;  // coordinates next to an argmax tie
    double max_rel_error = 0.0;
    bool pass = false;
};

/// max_i |a_i - n_i| / max(max_i |n_i|, 1e-300)
inline double relative_error(std::span<const double> analytic, std::span<const double> numeric) {
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
        scale = std::max(scale, std::abs(numeric[i]));
    }
    return diff / std::max(scale, 1e-300);
}

namespace detail {

using Batch = std::vector<std::vector<double>>;

inline Batch random_batch(Rng& rng, const Options& o) {
    std::normal_distribution<double> g(0.0, 1.0);
    Batch b(o.batch, std::vector<double>(o.length));
    for (auto& w : b)
        for (double& v : w) v = g(rng);
    return b;
}

inline std::size_t peak_of(const spectral::SpectrumPlan& plan, std::span<const double> w,
                           const spectral::BandLimits& band) {
    const auto spec = plan.power(w);
    return spectral::peak_bin(spec.power, spectral::band_mask(spec, band));
}

// Waveform-level check: f returns (value, d value / d sample) for a batch;
// `value` evaluates the loss alone.
using BatchFn = std::function<std::pair<double, Batch>(const Batch&)>;
using ValueFn = std::function<double(const Batch&)>;

inline Row check_batch_fn(const std::string& name, const BatchFn& f, const ValueFn& value, const Options& o,
                          bool peak_sensitive, std::uint64_t stream) {
    Row row{name};
    Rng rng = substream(o.seed, stream);
    const spectral::BandLimits band{};
    const spectral::SpectrumPlan plan(o.length, o.fs);
    for (std::size_t trial = 0; trial < o.trials; ++trial) {
        Batch x = random_batch(rng, o);
        const auto [v0, grad] = f(x);
        std::vector<std::size_t> base_peaks;
        if (peak_sensitive)
            for (const auto& w : x) base_peaks.push_back(peak_of(plan, w, band));
        std::vector<double> an, nu;
        std::uniform_int_distribution<std::size_t> pick(0, o.length - 1);
        for (std::size_t s = 0; s < x.size(); ++s) {
            for (std::size_t c = 0; c < o.coords_per_sample; ++c) {
                const std::size_t i = pick(rng);
                const double keep = x[s][i];
                x[s][i] = keep + o.h;
                const bool tie_p = peak_sensitive && peak_of(plan, x[s], band) != base_peaks[s];
                const double fp = value(x);
                x[s][i] = keep - o.h;
                const bool tie_m = peak_sensitive && peak_of(plan, x[s], band) != base_peaks[s];
                const double fm = value(x);
                x[s][i] = keep;
                if (tie_p || tie_m) {
                    ++row.skipped;
                    continue;
                }
                an.push_back(grad[s][i]);
                nu.push_back((fp - fm) / (2.0 * o.h));
            }
        }
        row.checked += an.size();
        row.max_rel_error = std::max(row.max_rel_error, relative_error(an, nu));
        ++row.trials;
    }
    row.pass = row.max_rel_error <= o.tolerance;
    return row;
}

// Tape-level check of a graph built by `build` from leaf variables. A fixed
// random projection reduces non-scalar outputs to a scalar.
using GraphFn = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

inline double project(ad::Tape& tape, ad::Var out, const std::vector<double>& r, ad::Var* loss) {
    const ad::Var w = tape.constant(out.shape(), r);
    *loss = ad::sum(ad::multiply(out, w));
    return loss->value()[0];
}

inline Row check_graph(const std::string& name, const std::vector<ad::Shape>& shapes, const GraphFn& build,
                       const Options& o, std::size_t trials, std::uint64_t stream) {
    Row row{name};
    Rng rng = substream(o.seed, stream);
    std::normal_distribution<double> g(0.0, 1.0);
    for (std::size_t trial = 0; trial < trials; ++trial) {
        std::vector<ad::Tensor> in;
        for (const auto& s : shapes) {
            ad::Tensor t = ad::Tensor::zeros(s, true);
            for (double& v : t.data) v = g(rng);
            in.push_back(std::move(t));
        }
        std::vector<double> r;
        auto eval = [&](bool with_grad) {
            ad::Tape tape;
            std::vector<ad::Var> leaves;
            for (auto& t : in) leaves.push_back(with_grad ? tape.leaf(t) : tape.constant(t.shape, t.data));
            const ad::Var out = build(tape, leaves);
            if (r.empty()) {
                r.resize(out.size());
                for (double& v : r) v = g(rng);
            }
            ad::Var loss;
            const double val = project(tape, out, r, &loss);
            if (with_grad) tape.backward(loss);
            return val;
        };
        for (auto& t : in) t.zero_grad();
        eval(true);
        std::vector<double> an, nu;
        for (auto& t : in) {
            for (std::size_t i = 0; i < t.size(); ++i) {
                const double keep = t.data[i];
                t.data[i] = keep + o.h;
                const double fp = eval(false);
                t.data[i] = keep - o.h;
                const double fm = eval(false);
                t.data[i] = keep;
                an.push_back(t.grad[i]);
                nu.push_back((fp - fm) / (2.0 * o.h));
            }
        }
        row.checked += an.size();
        row.max_rel_error = std::max(row.max_rel_error, relative_error(an, nu));
        ++row.trials;
    }
    row.pass = row.max_rel_error <= o.tolerance;
    return row;
}

inline losses::LossConfig only(bool b, bool s, bool v) {
    losses::LossConfig c;
    c.toggles = {b, s, v};
    return c;
}

}  // namespace detail

/// Loss gradients on random batches of `o.length`-sample waveforms.
inline std::vector<Row> check_losses(const Options& o = {}) {
    using detail::Batch;
    auto combined = [&](const std::string& name, losses::LossConfig cfg, bool peak_sensitive, std::uint64_t stream) {
        const auto f = [cfg, fs = o.fs](const Batch& x) {
            auto r = losses::combined_loss(x, fs, cfg);
            return std::pair<double, Batch>{r.losses.total, std::move(r.grads)};
        };
        const auto value = [cfg, fs = o.fs](const Batch& x) {
            return losses::combined_loss(x, fs, cfg, false).losses.total;
        };
        return detail::check_batch_fn(name, f, value, o, peak_sensitive, stream);
    };
    std::vector<Row> rows;
    rows.push_back(combined("bandwidth", detail::only(true, false, false), false, 1));
    rows.push_back(combined("sparsity", detail::only(false, true, false), true, 2));
    rows.push_back(combined("variance", detail::only(false, false, true), false, 3));
    rows.push_back(combined("combined", detail::only(true, true, true), true, 4));
    {
        losses::LossConfig c = detail::only(true, true, true);
        c.sparsity.include_second_harmonic = true;
        c.variance_norm = losses::VarianceNormalization::pooled;
        rows.push_back(combined("combined-harmonic-pooled", c, true, 5));
    }
    {
        Rng rng = substream(o.seed, 6);
        std::normal_distribution<double> g(0.0, 1.0);
        std::vector<double> target(o.length);
        for (double& v : target) v = g(rng);
        auto pearson = [target](const Batch& x) {
            double total = 0.0;
            Batch grads;
            for (const auto& w : x) {
                auto l = losses::negative_pearson_loss(w, target);
                total += l.value;
                grads.push_back(std::move(l.grad));
            }
            return std::pair<double, Batch>{total, grads};
        };
        const auto value = [&pearson](const Batch& x) { return pearson(x).first; };
        rows.push_back(detail::check_batch_fn("negative-pearson", pearson, value, o, false, 7));
    }
    return rows;
}

/// Primitive ops and both model variants, on small random inputs.
inline std::vector<Row> check_primitives(const Options& o = {}) {
    using ad::Var;
    const std::size_t n = std::max<std::size_t>(3, o.trials / 10);
    std::vector<Row> rows;
    rows.push_back(detail::check_graph("add", {{3, 4}, {3, 4}},
                                       [](ad::Tape&, const std::vector<Var>& v) { return ad::add(v[0], v[1]); }, o, n, 20));
    rows.push_back(detail::check_graph("sub-scalar", {{3, 4}, {1}},
                                       [](ad::Tape&, const std::vector<Var>& v) { return ad::sub(v[0], v[1]); }, o, n, 21));
    rows.push_back(detail::check_graph("multiply", {{3, 4}, {3, 4}},
                                       [](ad::Tape&, const std::vector<Var>& v) { return ad::multiply(v[0], v[1]); }, o, n,
                                       22));
    rows.push_back(detail::check_graph("matmul", {{3, 4}, {4, 2}},
                                       [](ad::Tape&, const std::vector<Var>& v) { return ad::matmul(v[0], v[1]); }, o, n, 23));
    rows.push_back(detail::check_graph("tanh", {{2, 5}},
                                       [](ad::Tape&, const std::vector<Var>& v) { return ad::tanh(v[0]); }, o, n, 24));
    rows.push_back(detail::check_graph("mean-over-axes", {{2, 3, 4}},
                                       [](ad::Tape&, const std::vector<Var>& v) { return ad::mean_over_axes(v[0], {0, 2}); },
                                       o, n, 25));
    rows.push_back(detail::check_graph("slice-concat", {{2, 6}, {2, 3}},
                                       [](ad::Tape&, const std::vector<Var>& v) {
                                           return ad::concat({ad::slice(v[0], 1, 1, 4), v[1]}, 1);
                                       },
                                       o, n, 26));
    rows.push_back(detail::check_graph("replicate-pad", {{2, 5}},
                                       [](ad::Tape&, const std::vector<Var>& v) { return ad::replicate_pad(v[0], 1, 2, 3); },
                                       o, n, 27));
    rows.push_back(detail::check_graph("temporal-conv", {{3, 12}, {4, 3, 5}, {4}},
                                       [](ad::Tape&, const std::vector<Var>& v) {
                                           return ad::temporal_conv(v[0], v[1], v[2]);
                                       },
                                       o, n, 28));
    rows.push_back(detail::check_graph("conv3d", {{2, 5, 4, 4}, {3, 2, 3, 3, 3}, {3}},
                                       [](ad::Tape&, const std::vector<Var>& v) { return ad::conv3d(v[0], v[1], v[2]); },
                                       o, n, 29));
    rows.push_back(detail::check_graph("linear-resample", {{2, 10}},
                                       [](ad::Tape&, const std::vector<Var>& v) {
                                           return ad::linear_resample(v[0], 1, 0.3, 1.37, 6);
                                       },
                                       o, n, 30));

    // Model variants: inputs are the parameter tensors; the clip is fixed.
    auto model_row = [&](const std::string& name, model::ModelConfig cfg, std::size_t frames, std::size_t hw,
                         std::uint64_t stream) {
        Rng rng = substream(o.seed, stream);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        Clip clip(frames, hw, hw, 3, 30.0);
        for (float& v : clip.data) v = static_cast<float>(u(rng));
        std::vector<ad::Shape> shapes = model::param_shapes(cfg);
        return detail::check_graph(name, shapes,
                                   [cfg, clip](ad::Tape& tape, const std::vector<Var>& p) {
                                       return model::detail::forward_impl(tape, clip, cfg, p);
                                   },
                                   o, 2, stream);
    };
    model::ModelConfig tcnn;
    tcnn.channels = 4;
    rows.push_back(model_row("model-spatial-mean-tcnn", tcnn, 16, 4, 40));
    model::ModelConfig cnn3d;
    cnn3d.variant = model::Variant::small_3d_cnn;
    cnn3d.channels = 3;
    cnn3d.layers = 2;
    cnn3d.temporal_kernel = 3;
    rows.push_back(model_row("model-small-3d-cnn", cnn3d, 8, 4, 41));
    return rows;
}

inline std::vector<Row> run_all(const Options& o = {}) {
    auto rows = check_losses(o);
    auto prims = check_primitives(o);
    rows.insert(rows.end(), prims.begin(), prims.end());
    return rows;
}

}  // namespace sinc::gradcheck
