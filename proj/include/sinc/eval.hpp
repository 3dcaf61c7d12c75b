#pragma once

#include <cmath>
#include <cstddef>
#include <iomanip>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sinc/clip.hpp"
#include "sinc/error.hpp"
#include "sinc/model.hpp"
#include "sinc/spectral.hpp"
#include "sinc/synthdata.hpp"

namespace sinc::eval {

using spectral::BandLimits;
using spectral::SignalWindow;

struct WindowOptions {
    double window_len_s = 10.0;
    double stride_s = 1.0;
    BandLimits band{};
    double resolution_hz = spectral::kDefaultResolutionHz;
};

struct PulseRateSeries {
    std::vector<double> rates_bpm;
    std::vector<double> window_starts_s;
    double window_len_s = 10.0;
    double stride_s = 1.0;

    std::size_t size() const noexcept { return rates_bpm.size(); }
};

/// Highest in-band spectral peak per sliding window, in bpm.
inline PulseRateSeries estimate_pulse_rates(const SignalWindow& sig, const WindowOptions& opt = {}) {
    spectral::validate(sig);
    require(opt.window_len_s > 0.0 && opt.stride_s > 0.0, ErrorKind::invalid_config, "window and stride must be positive");
    const auto wlen = static_cast<std::size_t>(std::llround(opt.window_len_s * sig.fs));
    const auto stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(opt.stride_s * sig.fs)));
    require(wlen >= 2 && wlen <= sig.size(), ErrorKind::invalid_input, "analysis window is longer than the signal");
    const spectral::SpectrumPlan plan(wlen, sig.fs, {opt.resolution_hz, false});
    PulseRateSeries out;
    out.window_len_s = opt.window_len_s;
    out.stride_s = opt.stride_s;
    for (std::size_t start = 0; start + wlen <= sig.size(); start += stride) {
        const auto spec = plan.power(std::span<const double>(sig.samples).subspan(start, wlen));
        const auto in = spectral::band_mask(spec, opt.band);
        out.rates_bpm.push_back(60.0 * spec.freqs[spectral::peak_bin(spec.power, in)]);
        out.window_starts_s.push_back(static_cast<double>(start) / sig.fs);
    }
    return out;
}

struct RateMetrics {
    double mae_bpm = 0.0;
    double rmse_bpm = 0.0;
    std::optional<double> pearson_r;  // empty when either series has zero variance
};

inline std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), ErrorKind::invalid_input, "series differ in length");
    const std::size_t n = a.size();
    if (n < 2) return std::nullopt;
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa <= 0.0 || sbb <= 0.0) return std::nullopt;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

inline RateMetrics compute_metrics(std::span<const double> pred_bpm, std::span<const double> gt_bpm) {
    require(pred_bpm.size() == gt_bpm.size(), ErrorKind::invalid_input, "prediction and ground truth differ in length");
    require(!pred_bpm.empty(), ErrorKind::invalid_input, "no windows to score");
    RateMetrics m;
    for (std::size_t i = 0; i < pred_bpm.size(); ++i) {
        const double e = pred_bpm[i] - gt_bpm[i];
        m.mae_bpm += std::abs(e);
        m.rmse_bpm += e * e;
    }
    m.mae_bpm /= static_cast<double>(pred_bpm.size());
    m.rmse_bpm = std::sqrt(m.rmse_bpm / static_cast<double>(pred_bpm.size()));
    m.pearson_r = pearson(pred_bpm, gt_bpm);
    return m;
}

inline RateMetrics compute_metrics(const PulseRateSeries& pred, const PulseRateSeries& gt) {
    require(pred.window_starts_s == gt.window_starts_s, ErrorKind::invalid_input, "window grids are not aligned");
    return compute_metrics(pred.rates_bpm, gt.rates_bpm);
}

struct SnrOptions {
    double half_width_bpm = 6.0;
    bool include_second_harmonic = false;
    BandLimits band{};
    double resolution_hz = 0.0;  // 0: natural grid fs/N, no zero padding
    double floor_db = -20.0;
    double ceil_db = 60.0;
};

/// In-band power within +-6 bpm of the reference rate (and optionally its
/// second harmonic) over the remaining in-band power, in dB, clamped.
/// Empty when the band holds no power.
inline std::optional<double> snr_db(const SignalWindow& sig, double gt_rate_bpm, const SnrOptions& opt = {}) {
    const double f0 = gt_rate_bpm / 60.0;
    require(f0 >= opt.band.lo && f0 <= opt.band.hi, ErrorKind::invalid_input, "reference rate outside the band");
    spectral::validate(sig);
    const double res = opt.resolution_hz > 0.0 ? opt.resolution_hz : sig.fs / static_cast<double>(sig.size());
    const auto spec = spectral::power_spectrum(sig, res);
    const auto in = spectral::band_mask(spec, opt.band);
    const double hw = opt.half_width_bpm / 60.0 + 1e-9 * spec.bin_hz;
    double signal = 0.0, noise = 0.0;
    for (std::size_t i = in.first; i <= in.last; ++i) {
        const double f = spec.freqs[i];
        const bool near = std::abs(f - f0) <= hw || (opt.include_second_harmonic && std::abs(f - 2.0 * f0) <= hw);
        (near ? signal : noise) += spec.power[i];
    }
    if (signal + noise <= 0.0) return std::nullopt;
    if (noise <= 0.0) return opt.ceil_db;
    if (signal <= 0.0) return opt.floor_db;
    return std::clamp(10.0 * std::log10(signal / noise), opt.floor_db, opt.ceil_db);
}

/// Population standard deviation of rate estimates.
inline double rate_dispersion(std::span<const double> rates_bpm) {
    if (rates_bpm.empty()) return 0.0;
    double m = 0.0;
    for (double r : rates_bpm) m += r;
    m /= static_cast<double>(rates_bpm.size());
    double v = 0.0;
    for (double r : rates_bpm) v += (r - m) * (r - m);
    return std::sqrt(v / static_cast<double>(rates_bpm.size()));
}

/// Spread of peak rates across a batch of predictions. Each waveform
/// contributes its window estimates; waveforms shorter than the window are
/// analysed whole. Near-zero dispersion with diverse inputs means collapse.
inline double collapse_diagnostic(std::span<const SignalWindow> batch, const WindowOptions& opt = {}) {
    require(batch.size() >= 2, ErrorKind::invalid_input, "collapse diagnostic needs a batch of at least 2");
    std::vector<double> rates;
    for (const auto& w : batch) {
        WindowOptions o = opt;
        const double dur = static_cast<double>(w.size()) / w.fs;
        if (o.window_len_s > dur) o.window_len_s = dur;
        const auto s = estimate_pulse_rates(w, o);
        rates.insert(rates.end(), s.rates_bpm.begin(), s.rates_bpm.end());
    }
    return rate_dispersion(rates);
}

struct ClipMetrics {
    std::size_t clip = 0;
    double window_start_s = 0.0;
    double pred_bpm = 0.0;
    double gt_bpm = 0.0;
    std::optional<double> snr_db;
};

struct MetricsReport {
    double mae_bpm = 0.0;
    double rmse_bpm = 0.0;
    std::optional<double> pearson_r;
    std::optional<double> mean_snr_db;
    double pred_dispersion_bpm = 0.0;
    double gt_dispersion_bpm = 0.0;
    std::vector<ClipMetrics> windows;
};

/// Predict every clip with the model, estimate window rates on prediction and
/// ground-truth waveform alike, and score them.
inline MetricsReport evaluate(const model::ModelParams& params, std::span<const Clip> clips,
                              std::span<const synth::GroundTruth> truth, const WindowOptions& opt = {}) {
    require(clips.size() == truth.size() && !clips.empty(), ErrorKind::invalid_input, "clips and truth must pair up");
    MetricsReport rep;
    std::vector<double> pred_rates, gt_rates, snrs;
    for (std::size_t i = 0; i < clips.size(); ++i) {
        const SignalWindow pred{model::predict(clips[i], params), clips[i].fps};
        const SignalWindow gtw{truth[i].waveform, clips[i].fps};
        const auto ps = estimate_pulse_rates(pred, opt);
        const auto gs = estimate_pulse_rates(gtw, opt);
        const double ref = std::clamp(truth[i].rate_bpm, 60.0 * opt.band.lo, 60.0 * opt.band.hi);
        const auto snr = snr_db(pred, ref, {6.0, false, opt.band});
        if (snr) snrs.push_back(*snr);
        for (std::size_t w = 0; w < ps.size(); ++w) {
            rep.windows.push_back({i, ps.window_starts_s[w], ps.rates_bpm[w], gs.rates_bpm[w], snr});
            pred_rates.push_back(ps.rates_bpm[w]);
            gt_rates.push_back(gs.rates_bpm[w]);
        }
    }
    const auto m = compute_metrics(pred_rates, gt_rates);
    rep.mae_bpm = m.mae_bpm;
    rep.rmse_bpm = m.rmse_bpm;
    rep.pearson_r = m.pearson_r;
    if (!snrs.empty()) {
        double s = 0.0;
        for (double v : snrs) s += v;
        rep.mean_snr_db = s / static_cast<double>(snrs.size());
    }
    rep.pred_dispersion_bpm = rate_dispersion(pred_rates);
    rep.gt_dispersion_bpm = rate_dispersion(gt_rates);
    return rep;
}

inline constexpr const char* kMetricsCsvVersion = "sinc-metrics v1";

/// Per-window rows under a versioned comment line:
/// clip,window_start_s,pred_bpm,gt_bpm,abs_err_bpm,snr_db
inline void write_csv(std::ostream& os, const MetricsReport& rep) {
    os << "# " << kMetricsCsvVersion << "\n";
    os << "clip,window_start_s,pred_bpm,gt_bpm,abs_err_bpm,snr_db\n";
    os << std::setprecision(10);
    for (const auto& w : rep.windows) {
        os << w.clip << ',' << w.window_start_s << ',' << w.pred_bpm << ',' << w.gt_bpm << ','
           << std::abs(w.pred_bpm - w.gt_bpm) << ',';
        if (w.snr_db) os << *w.snr_db;
        os << '\n';
    }
}

}  // namespace sinc::eval
