#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "sinc/error.hpp"
#include "sinc/spectral.hpp"

namespace sinc::losses {

using spectral::BandLimits;
using spectral::BinRange;
using spectral::PowerSpectrum;

/// Guard for every power denominator.
inline constexpr double kEpsilon = 1e-8;

struct SparsityConfig {
    double delta_f = 0.1;  // Hz, 6 bpm
    bool include_second_harmonic = false;
};

inline void validate(const SparsityConfig& cfg, const BandLimits& band) {
    require(cfg.delta_f > 0.0, ErrorKind::invalid_config, "sparsity delta_f must be positive");
    require(2.0 * cfg.delta_f < band.hi - band.lo, ErrorKind::invalid_config,
            "sparsity window 2*delta_f must be narrower than the band");
}

/// How the batch-level spectrum Q of the variance loss is formed.
enum class VarianceNormalization {
    per_sample,  // normalize each in-band spectrum to unit mass, then average
    pooled,      // sum raw in-band spectra over the batch, then normalize once
};

/// A scalar loss together with its gradient w.r.t. the power bins (or samples,
/// for time-domain losses). `degenerate` marks the epsilon fallback.
struct ScalarGrad {
    double value = 0.0;
    std::vector<double> grad;
    bool degenerate = false;
};

/// Fraction of total power lying outside the band.
inline ScalarGrad bandwidth_loss(const PowerSpectrum& spec, const BandLimits& band) {
    const BinRange in = spectral::band_mask(spec, band);
    ScalarGrad out;
    out.grad.assign(spec.size(), 0.0);
    double total = 0.0;
    double inband = 0.0;
    for (std::size_t i = 0; i < spec.size(); ++i) {
        total += spec.power[i];
        if (in.contains(i)) inband += spec.power[i];
    }
    if (total < kEpsilon) {
        out.degenerate = true;
        return out;
    }
    const double outband = total - inband;
    out.value = outband / total;
    const double inv_t2 = 1.0 / (total * total);
    for (std::size_t i = 0; i < spec.size(); ++i) {
        out.grad[i] = ((in.contains(i) ? 0.0 : total) - outband) * inv_t2;
    }
    return out;
}

/// Bins of the in-band region that the sparsity loss treats as "near the
/// peak": |f - f_peak| <= delta_f and, optionally, |f - 2 f_peak| <= delta_f.
inline std::vector<bool> sparsity_window(const PowerSpectrum& spec, BinRange in, std::size_t peak,
                                         const SparsityConfig& cfg) {
    std::vector<bool> near(spec.size(), false);
    const double tol = 1e-9 * spec.bin_hz;
    const double fp = spec.freqs[peak];
    for (std::size_t i = in.first; i <= in.last; ++i) {
        const double f = spec.freqs[i];
        bool hit = std::abs(f - fp) <= cfg.delta_f + tol;
        if (cfg.include_second_harmonic) hit = hit || std::abs(f - 2.0 * fp) <= cfg.delta_f + tol;
        near[i] = hit;
    }
    return near;
}

/// In-band power outside the peak window, relative to all in-band power. The
/// peak location is held fixed when differentiating.
inline ScalarGrad sparsity_loss(const PowerSpectrum& spec, const BandLimits& band, const SparsityConfig& cfg = {}) {
    validate(cfg, band);
    const BinRange in = spectral::band_mask(spec, band);
    ScalarGrad out;
    out.grad.assign(spec.size(), 0.0);
    double inband = 0.0;
    for (std::size_t i = in.first; i <= in.last; ++i) inband += spec.power[i];
    if (inband < kEpsilon) {
        out.degenerate = true;
        return out;
    }
    const std::size_t peak = spectral::peak_bin(spec.power, in);
    const std::vector<bool> near = sparsity_window(spec, in, peak, cfg);
    double off_peak = 0.0;
    for (std::size_t i = in.first; i <= in.last; ++i) {
        if (!near[i]) off_peak += spec.power[i];
    }
    out.value = off_peak / inband;
    const double inv_s2 = 1.0 / (inband * inband);
    for (std::size_t i = in.first; i <= in.last; ++i) {
        out.grad[i] = ((near[i] ? 0.0 : inband) - off_peak) * inv_s2;
    }
    return out;
}

/// Result of the batch variance loss: one gradient vector per spectrum.
struct BatchGrad {
    double value = 0.0;
    std::vector<std::vector<double>> grads;
    std::size_t degenerate_samples = 0;
};

/// Squared 1-D Wasserstein distance between the batch-averaged in-band
/// distribution and the uniform prior, computed on CDFs over ascending bins.
inline BatchGrad variance_loss(std::span<const PowerSpectrum> batch, const BandLimits& band,
                               VarianceNormalization norm = VarianceNormalization::per_sample) {
    const std::size_t n = batch.size();
    require(n >= 2, ErrorKind::invalid_input, "variance loss needs a batch of at least 2 spectra");
    const BinRange in = spectral::band_mask(batch[0], band);
    for (const auto& s : batch) {
        require(s.size() == batch[0].size() && s.bin_hz == batch[0].bin_hz, ErrorKind::invalid_input,
                "spectra in a batch must share one frequency grid");
    }
    const std::size_t d = in.count();
    const double dd = static_cast<double>(d);

    BatchGrad out;
    out.grads.assign(n, std::vector<double>(batch[0].size(), 0.0));

    std::vector<double> mass(n, 0.0);
    std::vector<bool> valid(n, true);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t i = in.first; i <= in.last; ++i) mass[s] += batch[s].power[i];
        if (mass[s] < kEpsilon) {
            valid[s] = false;
            ++out.degenerate_samples;
        }
    }

    if (out.degenerate_samples == n) return out;

    // Q over in-band bins. Degenerate samples contribute the uniform prior.
    std::vector<double> q(d, 0.0);
    double pooled_mass = 0.0;
    if (norm == VarianceNormalization::per_sample) {
        for (std::size_t s = 0; s < n; ++s) {
            for (std::size_t j = 0; j < d; ++j) {
                q[j] += valid[s] ? batch[s].power[in.first + j] / mass[s] : 1.0 / dd;
            }
        }
        for (double& v : q) v /= static_cast<double>(n);
    } else {
        for (std::size_t s = 0; s < n; ++s) {
            if (valid[s]) pooled_mass += mass[s];
        }
        if (pooled_mass < kEpsilon) {
            out.degenerate_samples = n;
            return out;
        }
        for (std::size_t s = 0; s < n; ++s) {
            if (!valid[s]) continue;
            for (std::size_t j = 0; j < d; ++j) q[j] += batch[s].power[in.first + j] / pooled_mass;
        }
    }

    // L = (1/d) sum_i (C_i - i/d)^2 with C_i the running sum of Q.
    std::vector<double> dcdf(d);
    double cdf = 0.0;
    double loss = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        cdf += q[i];
        const double diff = cdf - static_cast<double>(i + 1) / dd;
        loss += diff * diff;
        dcdf[i] = 2.0 * diff / dd;
    }
    out.value = loss / dd;

    // dL/dQ_j is the suffix sum of dL/dC_i.
    std::vector<double> dq(d);
    double acc = 0.0;
    for (std::size_t j = d; j-- > 0;) {
        acc += dcdf[j];
        dq[j] = acc;
    }

    for (std::size_t s = 0; s < n; ++s) {
        if (!valid[s]) continue;
        auto& g = out.grads[s];
        if (norm == VarianceNormalization::per_sample) {
            // Q_j += v_j / (n m): dQ_j/dv_k = (delta_jk m - v_j) / (n m^2)
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += dq[j] * batch[s].power[in.first + j];
            const double m = mass[s];
            const double scale = 1.0 / (static_cast<double>(n) * m * m);
            for (std::size_t k = 0; k < d; ++k) g[in.first + k] = (dq[k] * m - dot) * scale;
        } else {
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += dq[j] * q[j];
            for (std::size_t k = 0; k < d; ++k) g[in.first + k] = (dq[k] - dot) / pooled_mass;
        }
    }
    return out;
}

/// Which terms enter the optimized total.
struct LossToggles {
    bool bandwidth = true;
    bool sparsity = true;
    bool variance = true;

    bool any() const noexcept { return bandwidth || sparsity || variance; }
};

struct LossConfig {
    BandLimits band{};
    SparsityConfig sparsity{};
    LossToggles toggles{};
    VarianceNormalization variance_norm = VarianceNormalization::per_sample;
    spectral::SpectrumOptions spectrum{};
};

struct LossBundle {
    double bandwidth = 0.0;
    double sparsity = 0.0;
    double variance = 0.0;
    double total = 0.0;
};

struct LossDiagnostics {
    std::size_t degenerate_bandwidth = 0;
    std::size_t degenerate_sparsity = 0;
    std::size_t degenerate_variance = 0;

    bool any() const noexcept { return degenerate_bandwidth + degenerate_sparsity + degenerate_variance > 0; }
};

struct CombinedResult {
    LossBundle losses;
    /// d total / d waveform sample, one vector per batch member.
    std::vector<std::vector<double>> grads;
    LossDiagnostics diagnostics;
};

/// Bandwidth and sparsity averaged over the batch, variance once per batch;
/// the total is the unweighted sum of the enabled terms. All three terms are
/// reported regardless of toggles (variance only when the batch has >= 2).
/// With `with_grads` false only values and diagnostics are computed.
inline CombinedResult combined_loss(std::span<const std::vector<double>> waveforms, double fs,
                                    const LossConfig& cfg = {}, bool with_grads = true) {
    require(cfg.toggles.any(), ErrorKind::invalid_config, "at least one loss term must be enabled");
    const std::size_t n = waveforms.size();
    require(n >= 1, ErrorKind::invalid_input, "empty batch");
    require(n >= 2 || !cfg.toggles.variance, ErrorKind::invalid_input, "variance loss needs a batch of at least 2");
    const std::size_t len = waveforms[0].size();
    for (const auto& w : waveforms) require(w.size() == len, ErrorKind::invalid_input, "waveforms differ in length");
    validate(cfg.sparsity, cfg.band);

    const spectral::SpectrumPlan& plan = spectral::shared_plan(len, fs, cfg.spectrum);
    std::vector<PowerSpectrum> spectra(n);
    std::vector<std::vector<spectral::cplx>> bins(n);
    for (std::size_t s = 0; s < n; ++s) spectra[s] = plan.power(waveforms[s], &bins[s]);

    CombinedResult out;
    std::vector<std::vector<double>> gpow(n, std::vector<double>(plan.bins(), 0.0));
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t s = 0; s < n; ++s) {
        const ScalarGrad b = bandwidth_loss(spectra[s], cfg.band);
        const ScalarGrad sp = sparsity_loss(spectra[s], cfg.band, cfg.sparsity);
        out.losses.bandwidth += b.value * inv_n;
        out.losses.sparsity += sp.value * inv_n;
        out.diagnostics.degenerate_bandwidth += b.degenerate ? 1 : 0;
        out.diagnostics.degenerate_sparsity += sp.degenerate ? 1 : 0;
        for (std::size_t k = 0; k < plan.bins(); ++k) {
            if (cfg.toggles.bandwidth) gpow[s][k] += b.grad[k] * inv_n;
            if (cfg.toggles.sparsity) gpow[s][k] += sp.grad[k] * inv_n;
        }
    }
    if (n >= 2) {
        const BatchGrad v = variance_loss(spectra, cfg.band, cfg.variance_norm);
        out.losses.variance = v.value;
        out.diagnostics.degenerate_variance = v.degenerate_samples;
        if (cfg.toggles.variance) {
            for (std::size_t s = 0; s < n; ++s) {
                for (std::size_t k = 0; k < plan.bins(); ++k) gpow[s][k] += v.grads[s][k];
            }
        }
    }
    out.losses.total = (cfg.toggles.bandwidth ? out.losses.bandwidth : 0.0) +
                       (cfg.toggles.sparsity ? out.losses.sparsity : 0.0) +
                       (cfg.toggles.variance ? out.losses.variance : 0.0);
    if (!with_grads) return out;

    out.grads.resize(n);
    for (std::size_t s = 0; s < n; ++s) out.grads[s] = plan.backward(bins[s], gpow[s]);
    return out;
}

/// Negative Pearson correlation between a prediction and a target waveform,
/// with the gradient w.r.t. the prediction.
inline ScalarGrad negative_pearson_loss(std::span<const double> pred, std::span<const double> target) {
    require(pred.size() == target.size(), ErrorKind::invalid_input, "pearson inputs differ in length");
    require(pred.size() >= 2, ErrorKind::invalid_input, "pearson needs at least 2 samples");
    const std::size_t n = pred.size();
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += pred[i];
        mb += target[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = pred[i] - ma, b = target[i] - mb;
        sab += a * b;
        saa += a * a;
        sbb += b * b;
    }
    require(saa > 0.0 && sbb > 0.0, ErrorKind::invalid_input, "pearson undefined for zero-variance input");
    const double denom = std::sqrt(saa * sbb);
    const double r = sab / denom;
    ScalarGrad out;
    out.value = -r;
    out.grad.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double a = pred[i] - ma, b = target[i] - mb;
        out.grad[i] = -(b / denom - r * a / saa);
    }
    return out;
}

}  // namespace sinc::losses
