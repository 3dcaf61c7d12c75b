#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "sinc/error.hpp"
#include "sinc/model.hpp"

namespace sinc::model {

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// First/second moments per parameter tensor plus the step counter.
struct OptimState {
    AdamWConfig config;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::size_t step = 0;

    static OptimState for_params(const ModelParams& params, AdamWConfig cfg = {}) {
        OptimState s;
        s.config = cfg;
        for (const auto& t : params.tensors) {
            s.m.emplace_back(t.size(), 0.0);
            s.v.emplace_back(t.size(), 0.0);
        }
        return s;
    }
};

/// One AdamW update using the gradients stored in `params`. The decay is
/// decoupled: p <- p * (1 - lr * wd) before the bias-corrected Adam step.
/// Non-finite gradients raise numeric_failure and leave everything untouched.
inline void adamw_step(ModelParams& params, OptimState& state) {
    require(state.m.size() == params.tensors.size(), ErrorKind::invalid_shape, "optimizer state does not match params");
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
        const auto& t = params.tensors[i];
        require(state.m[i].size() == t.size() && state.v[i].size() == t.size(), ErrorKind::invalid_shape,
                "optimizer moment shape mismatch");
        require(t.grad.empty() || t.grad.size() == t.size(), ErrorKind::invalid_shape, "gradient shape mismatch");
        for (double g : t.grad) {
            if (!std::isfinite(g)) fail(ErrorKind::numeric_failure, "non-finite gradient passed to adamw_step");
        }
    }
    const AdamWConfig& c = state.config;
    ++state.step;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    const double decay = 1.0 - c.lr * c.weight_decay;
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
        auto& t = params.tensors[i];
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < t.size(); ++j) {
            const double g = t.grad.empty() ? 0.0 : t.grad[j];
            m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
            v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
            t.data[j] *= decay;
            t.data[j] -= c.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + c.eps);
        }
    }
}

}  // namespace sinc::model
