#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "sinc/error.hpp"
#include "sinc/fft.hpp"

namespace sinc::spectral {

/// 0.33 bpm expressed in Hz.
inline constexpr double kDefaultResolutionHz = 1.0 / 180.0;

/// A real-valued waveform sampled at `fs` Hz.
struct SignalWindow {
    std::vector<double> samples;
    double fs = 30.0;

    std::size_t size() const noexcept { return samples.size(); }
};

inline void validate(const SignalWindow& sig) {
    require(sig.samples.size() >= 2, ErrorKind::invalid_input, "signal needs at least 2 samples");
    require(std::isfinite(sig.fs) && sig.fs > 0.0, ErrorKind::invalid_input, "sampling rate must be positive");
    for (double v : sig.samples) require(std::isfinite(v), ErrorKind::invalid_input, "non-finite sample");
}

/// Physiological frequency window [lo, hi] in Hz. Defaults to 40-180 bpm.
struct BandLimits {
    double lo = 2.0 / 3.0;
    double hi = 3.0;

    static BandLimits from_bpm(double lo_bpm, double hi_bpm) { return {lo_bpm / 60.0, hi_bpm / 60.0}; }
};

/// One-sided power spectrum over bins k = 1 .. N/2 of an N-point transform.
///
/// power[k-1] = w_k |X_k|^2 / N with w_k = 2 for interior bins and w_k = 1 for
/// the Nyquist bin, so that sum(power) equals the energy sum((x - mean)^2) of
/// the mean-removed (and optionally tapered) input exactly.
struct PowerSpectrum {
    std::vector<double> power;
    std::vector<double> freqs;
    double bin_hz = 0.0;

    std::size_t size() const noexcept { return power.size(); }
    double total() const noexcept {
        double s = 0.0;
        for (double p : power) s += p;
        return s;
    }
};

/// Inclusive, contiguous bin range [first, last] inside a spectrum.
struct BinRange {
    std::size_t first = 0;
    std::size_t last = 0;

    std::size_t count() const noexcept { return last - first + 1; }
    bool contains(std::size_t i) const noexcept { return i >= first && i <= last; }
};

/// Padded transform length for a signal of `length` samples at `fs` Hz.
inline std::size_t padded_length(std::size_t length, double fs, double target_resolution_hz) {
    require(std::isfinite(target_resolution_hz) && target_resolution_hz > 0.0, ErrorKind::invalid_config,
            "target resolution must be positive");
    // ceil with a relative guard so that 30 / (1/180) lands on 5400, not 5401.
    const double ratio = fs / target_resolution_hz;
    auto n = static_cast<std::size_t>(std::ceil(ratio * (1.0 - 1e-12)));
    require(n >= length, ErrorKind::invalid_config,
            "target resolution is coarser than the natural resolution fs/length");
    return n;
}

/// Inclusive band mask. Endpoints are matched with a tolerance of 1e-9 bins so
/// that grid points like 120 * (1/180) Hz count as equal to 2/3 Hz.
inline BinRange band_mask(const PowerSpectrum& spec, const BandLimits& band) {
    require(band.lo > 0.0 && band.hi >= band.lo, ErrorKind::invalid_config, "band limits must satisfy 0 < lo <= hi");
    require(!spec.freqs.empty(), ErrorKind::invalid_config, "empty spectrum");
    const double tol = 1e-9 * spec.bin_hz;
    std::size_t first = spec.freqs.size();
    std::size_t last = 0;
    for (std::size_t i = 0; i < spec.freqs.size(); ++i) {
        const double f = spec.freqs[i];
        if (f >= band.lo - tol && f <= band.hi + tol) {
            first = std::min(first, i);
            last = i;
        }
    }
    require(first < spec.freqs.size(), ErrorKind::invalid_config, "band contains no bins on this frequency grid");
    return {first, last};
}

struct SpectrumOptions {
    double resolution_hz = kDefaultResolutionHz;
    bool hann_taper = false;
};

/// Precomputed transform for one (length, fs, resolution) triple. Computes
/// power spectra and pulls gradients w.r.t. power bins back onto the time
/// samples through the exact adjoint of the whole pipeline (mean removal,
/// optional taper, zero padding, DFT, squared magnitude).
class SpectrumPlan {
public:
    SpectrumPlan(std::size_t length, double fs, SpectrumOptions opts = {})
        : length_(length), fs_(fs), opts_(opts), fft_(padded_length(length, fs, opts.resolution_hz)), rfft_(fft_.size()) {
        require(length >= 2, ErrorKind::invalid_input, "signal needs at least 2 samples");
        require(std::isfinite(fs) && fs > 0.0, ErrorKind::invalid_input, "sampling rate must be positive");
        const std::size_t n = fft_.size();
        bins_ = n / 2;
        require(bins_ >= 1, ErrorKind::invalid_config, "transform too short for any positive-frequency bin");
        bin_hz_ = fs / static_cast<double>(n);
        taper_.assign(length, 1.0);
        if (opts_.hann_taper) {
            for (std::size_t i = 0; i < length; ++i) {
                taper_[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                                 static_cast<double>(length - 1));
            }
        }
    }

    std::size_t length() const noexcept { return length_; }
    std::size_t padded() const noexcept { return fft_.size(); }
    std::size_t bins() const noexcept { return bins_; }
    double fs() const noexcept { return fs_; }
    double bin_hz() const noexcept { return bin_hz_; }
    const SpectrumOptions& options() const noexcept { return opts_; }

    std::vector<double> freqs() const {
        std::vector<double> f(bins_);
        for (std::size_t k = 0; k < bins_; ++k) f[k] = static_cast<double>(k + 1) * bin_hz_;
        return f;
    }

    /// Forward pass. When `spectrum_out` is given, the complex bins are kept
    /// there for a later call to `backward`.
    PowerSpectrum power(std::span<const double> x, std::vector<cplx>* spectrum_out = nullptr) const {
        require(x.size() == length_, ErrorKind::invalid_shape, "signal length does not match spectrum plan");
        for (double v : x) require(std::isfinite(v), ErrorKind::invalid_input, "non-finite sample");
        double mean = 0.0;
        for (double v : x) mean += v;
        mean /= static_cast<double>(length_);
        std::vector<double> centered(length_);
        for (std::size_t i = 0; i < length_; ++i) centered[i] = (x[i] - mean) * taper_[i];
        std::vector<cplx> X = rfft_.forward(centered);

        PowerSpectrum out;
        out.bin_hz = bin_hz_;
        out.freqs = freqs();
        out.power.resize(bins_);
        const double inv_n = 1.0 / static_cast<double>(fft_.size());
        for (std::size_t k = 1; k <= bins_; ++k) out.power[k - 1] = weight(k) * std::norm(X[k]) * inv_n;
        if (spectrum_out) *spectrum_out = std::move(X);
        return out;
    }

    /// Vector-Jacobian product: given dL/dpower, return dL/dx.
    std::vector<double> backward(std::span<const cplx> spectrum, std::span<const double> grad_power) const {
        require(spectrum.size() == fft_.size() && grad_power.size() == bins_, ErrorKind::invalid_shape,
                "backward buffers do not match spectrum plan");
        const std::size_t n = fft_.size();
        // dP_k/dx_j = (2 w_k / N) Re(conj(X_k) e^{-2 pi i k j / N})
        std::vector<cplx> y(n, cplx(0.0, 0.0));
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t k = 1; k <= bins_; ++k) {
            y[k] = grad_power[k - 1] * 2.0 * weight(k) * inv_n * std::conj(spectrum[k]);
        }
        std::vector<cplx> z = fft_.forward(y);
        std::vector<double> g(length_);
        for (std::size_t j = 0; j < length_; ++j) g[j] = z[j].real() * taper_[j];
        double gmean = 0.0;
        for (double v : g) gmean += v;
        gmean /= static_cast<double>(length_);
        for (double& v : g) v -= gmean;
        return g;
    }

private:
    double weight(std::size_t k) const noexcept {
        return (fft_.size() % 2 == 0 && k == fft_.size() / 2) ? 1.0 : 2.0;
    }

    std::size_t length_;
    double fs_;
    SpectrumOptions opts_;
    FftPlan fft_;
    RealFftPlan rfft_;
    std::size_t bins_ = 0;
    double bin_hz_ = 0.0;
    std::vector<double> taper_;
};

/// Per-thread cache of recently used plans.
inline const SpectrumPlan& shared_plan(std::size_t length, double fs, SpectrumOptions opts = {}) {
    thread_local std::vector<std::unique_ptr<SpectrumPlan>> cache;
    for (const auto& p : cache) {
        if (p->length() == length && p->fs() == fs && p->options().resolution_hz == opts.resolution_hz &&
            p->options().hann_taper == opts.hann_taper)
            return *p;
    }
    if (cache.size() >= 8) cache.erase(cache.begin());
    cache.push_back(std::make_unique<SpectrumPlan>(length, fs, opts));
    return *cache.back();
}

/// One-shot power spectrum of a validated signal, zero-padded to
/// N = ceil(fs / target_resolution_hz).
inline PowerSpectrum power_spectrum(const SignalWindow& sig, double target_resolution_hz = kDefaultResolutionHz,
                                    bool hann_taper = false) {
    validate(sig);
    SpectrumPlan plan(sig.size(), sig.fs, {target_resolution_hz, hann_taper});
    return plan.power(sig.samples);
}

/// Index of the largest bin in `range`; ties go to the lowest frequency.
inline std::size_t peak_bin(std::span<const double> power, BinRange range) {
    std::size_t best = range.first;
    for (std::size_t i = range.first + 1; i <= range.last; ++i) {
        if (power[i] > power[best]) best = i;
    }
    return best;
}

}  // namespace sinc::spectral
