#pragma once

#include <charconv>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "sinc/augment.hpp"
#include "sinc/binio.hpp"
#include "sinc/error.hpp"
#include "sinc/eval.hpp"
#include "sinc/model.hpp"
#include "sinc/synthdata.hpp"
#include "sinc/train.hpp"

// Run configuration, stored as JSON. Every numeric value is a decimal string
// ("0.0001", "200") so files round-trip without float surprises; booleans
// and names are plain JSON. Unknown keys are errors.
namespace sinc::config {

using nlohmann::json;

struct RunConfig {
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    std::string out = "run";
    std::string dataset;
    std::string checkpoint;
    spectral::BandLimits band{};
    synth::GenConfig gen{};
    std::array<double, 3> split{0.6, 0.2, 0.2};
    train::TrainConfig train{};
    eval::WindowOptions eval{};
    std::vector<std::uint64_t> ablate_seeds{0, 1, 2};
    std::vector<std::size_t> ablate_batch_sizes{5, 10, 15, 20};

    /// Pushes shared settings (seed, band) into the per-module configs.
    void sync() {
        gen.seed = seed;
        train.seed = seed;
        gen.band = band;
        train.loss.band = band;
        eval.band = band;
    }
};

inline std::string num(double v) {
    char b[64];
    const auto r = std::to_chars(b, b + sizeof b, v);
    return std::string(b, r.ptr);
}
inline std::string num(std::uint64_t v) { return std::to_string(v); }

namespace detail {

class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        require(j_.is_object(), ErrorKind::invalid_config, where("") + " must be an object");
    }

    bool has(const std::string& k) const { return j_.contains(k); }

    template <class F>
    void sub(const std::string& k, F&& f) {
        if (!take(k)) return;
        Section s(j_.at(k), where(k));
        f(s);
        s.finish();
    }

    void real(const std::string& k, double& out) {
        if (!take(k)) return;
        const std::string s = text(k);
        double v = 0.0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        require(ec == std::errc{} && p == s.data() + s.size() && std::isfinite(v), ErrorKind::invalid_config,
                where(k) + ": not a decimal number: \"" + s + "\"");
        out = v;
    }

    template <class U>
    void integer(const std::string& k, U& out) {
        if (!take(k)) return;
        out = parse_uint<U>(text(k), where(k));
    }

    void flag(const std::string& k, bool& out) {
        if (!take(k)) return;
        require(j_.at(k).is_boolean(), ErrorKind::invalid_config, where(k) + " must be true or false");
        out = j_.at(k).get<bool>();
    }

    void string(const std::string& k, std::string& out) {
        if (!take(k)) return;
        out = text(k);
    }

    template <class U>
    void integer_list(const std::string& k, std::vector<U>& out) {
        if (!take(k)) return;
        require(j_.at(k).is_array(), ErrorKind::invalid_config, where(k) + " must be an array of decimal strings");
        out.clear();
        for (const auto& e : j_.at(k)) {
            require(e.is_string(), ErrorKind::invalid_config, where(k) + " entries must be decimal strings");
            out.push_back(parse_uint<U>(e.get<std::string>(), where(k)));
        }
    }

    void real_list(const std::string& k, std::vector<double>& out) {
        if (!take(k)) return;
        require(j_.at(k).is_array(), ErrorKind::invalid_config, where(k) + " must be an array of decimal strings");
        out.clear();
        for (const auto& e : j_.at(k)) {
            require(e.is_string(), ErrorKind::invalid_config, where(k) + " entries must be decimal strings");
            const std::string s = e.get<std::string>();
            double v = 0.0;
            const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            require(ec == std::errc{} && p == s.data() + s.size(), ErrorKind::invalid_config,
                    where(k) + ": not a decimal number: \"" + s + "\"");
            out.push_back(v);
        }
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            require(seen_.count(it.key()) == 1, ErrorKind::invalid_config, "unknown key " + where(it.key()));
        }
    }

private:
    bool take(const std::string& k) {
        if (!j_.contains(k)) return false;
        seen_.insert(k);
        return true;
    }
    std::string text(const std::string& k) const {
        require(j_.at(k).is_string(), ErrorKind::invalid_config, where(k) + " must be a string");
        return j_.at(k).get<std::string>();
    }
    std::string where(const std::string& k) const {
        if (k.empty()) return path_.empty() ? "config" : path_;
        return path_.empty() ? k : path_ + "." + k;
    }
    template <class U>
    static U parse_uint(const std::string& s, const std::string& at) {
        std::uint64_t v = 0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        require(ec == std::errc{} && p == s.data() + s.size(), ErrorKind::invalid_config,
                at + ": not an unsigned integer: \"" + s + "\"");
        return static_cast<U>(v);
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

}  // namespace detail

inline RunConfig parse(const json& j) {
    RunConfig rc;
    detail::Section root(j, "");
    root.integer("seed", rc.seed);
    root.integer("threads", rc.threads);
    root.string("out", rc.out);
    root.string("dataset", rc.dataset);
    root.string("checkpoint", rc.checkpoint);
    root.sub("band", [&](detail::Section& s) {
        s.real("lo_hz", rc.band.lo);
        s.real("hi_hz", rc.band.hi);
    });
    root.sub("gen", [&](detail::Section& s) {
        auto& g = rc.gen;
        s.integer("n_clips", g.n_clips);
        s.integer("frames", g.frames);
        s.integer("height", g.height);
        s.integer("width", g.width);
        s.real("fps", g.fps);
        s.real("pulse_amp", g.pulse_amp);
        s.real("harmonic_ratio", g.harmonic_ratio);
        s.real("rate_min_bpm", g.rate_min_bpm);
        s.real("rate_max_bpm", g.rate_max_bpm);
        if (s.has("fixed_rate_bpm")) {
            double v = 0.0;
            s.real("fixed_rate_bpm", v);
            g.fixed_rate_bpm = v;
        }
        s.real("drift_hz", g.drift_hz);
        s.real("drift_amp", g.drift_amp);
        s.real("flicker_hz", g.flicker_hz);
        s.real("flicker_amp", g.flicker_amp);
        s.real("noise_sigma", g.noise_sigma);
        std::vector<double> fr;
        s.real_list("split", fr);
        if (!fr.empty()) {
            require(fr.size() == 3, ErrorKind::invalid_config, "gen.split needs three fractions");
            rc.split = {fr[0], fr[1], fr[2]};
        }
    });
    root.sub("train", [&](detail::Section& s) {
        auto& t = rc.train;
        std::string mode;
        s.string("mode", mode);
        if (!mode.empty()) {
            require(mode == "sinc" || mode == "supervised", ErrorKind::invalid_config,
                    "train.mode must be \"sinc\" or \"supervised\"");
            t.mode = mode == "sinc" ? train::Mode::sinc : train::Mode::supervised;
        }
        s.integer("epochs", t.epochs);
        s.integer("batch_size", t.batch_size);
        s.integer("clip_frames", t.clip_frames);
        s.real("lr", t.optim.lr);
        s.real("beta1", t.optim.beta1);
        s.real("beta2", t.optim.beta2);
        s.real("eps", t.optim.eps);
        s.real("weight_decay", t.optim.weight_decay);
        s.sub("losses", [&](detail::Section& l) {
            l.flag("bandwidth", t.loss.toggles.bandwidth);
            l.flag("sparsity", t.loss.toggles.sparsity);
            l.flag("variance", t.loss.toggles.variance);
            l.real("delta_f_hz", t.loss.sparsity.delta_f);
            l.flag("include_second_harmonic", t.loss.sparsity.include_second_harmonic);
            l.real("resolution_hz", t.loss.spectrum.resolution_hz);
            l.flag("hann_taper", t.loss.spectrum.hann_taper);
            std::string norm;
            l.string("variance_normalization", norm);
            if (!norm.empty()) {
                require(norm == "per_sample" || norm == "pooled", ErrorKind::invalid_config,
                        "variance_normalization must be \"per_sample\" or \"pooled\"");
                t.loss.variance_norm =
                    norm == "pooled" ? losses::VarianceNormalization::pooled : losses::VarianceNormalization::per_sample;
            }
        });
        s.sub("model", [&](detail::Section& m) {
            std::string v;
            m.string("variant", v);
            if (!v.empty()) t.model.variant = model::variant_from_string(v);
            m.integer("channels", t.model.channels);
            m.integer("layers", t.model.layers);
            m.integer("temporal_kernel", t.model.temporal_kernel);
        });
        s.sub("augment", [&](detail::Section& a) {
            auto& g = t.augment;
            a.flag("flip", g.flip);
            a.real("flip_prob", g.flip_prob);
            a.flag("illumination", g.illumination);
            a.real("illum_offset_sigma", g.illum_offset_sigma);
            a.flag("pixel_noise", g.pixel_noise);
            a.real("pixel_noise_sigma", g.pixel_noise_sigma);
            a.flag("resample", g.resample);
            a.real("resample_min", g.resample_min);
            a.real("resample_max", g.resample_max);
            a.flag("time_reverse", g.time_reverse);
            a.real("time_reverse_prob", g.time_reverse_prob);
        });
    });
    root.sub("eval", [&](detail::Section& s) {
        s.real("window_len_s", rc.eval.window_len_s);
        s.real("stride_s", rc.eval.stride_s);
        s.real("resolution_hz", rc.eval.resolution_hz);
    });
    root.sub("ablate", [&](detail::Section& s) {
        s.integer_list("seeds", rc.ablate_seeds);
        s.integer_list("batch_sizes", rc.ablate_batch_sizes);
    });
    root.finish();
    rc.sync();
    return rc;
}

/// Checks every module's invariants up front.
inline void validate(const RunConfig& rc) {
    require(rc.threads >= 1, ErrorKind::invalid_config, "threads must be at least 1");
    synth::validate(rc.gen);
    train::validate(rc.train);
    require(rc.eval.window_len_s > 0.0 && rc.eval.stride_s > 0.0, ErrorKind::invalid_config,
            "eval window and stride must be positive");
    require(!rc.ablate_seeds.empty(), ErrorKind::invalid_config, "ablate.seeds must not be empty");
    double sum = 0.0;
    for (double f : rc.split) {
        require(f >= 0.0, ErrorKind::invalid_config, "split fractions must be non-negative");
        sum += f;
    }
    require(std::abs(sum - 1.0) < 1e-9, ErrorKind::invalid_config, "split fractions must sum to 1");
}

inline json gen_json(const synth::GenConfig& g, const std::array<double, 3>& split) {
    json j{{"n_clips", num(std::uint64_t{g.n_clips})},
           {"frames", num(std::uint64_t{g.frames})},
           {"height", num(std::uint64_t{g.height})},
           {"width", num(std::uint64_t{g.width})},
           {"fps", num(g.fps)},
           {"pulse_amp", num(g.pulse_amp)},
           {"harmonic_ratio", num(g.harmonic_ratio)},
           {"rate_min_bpm", num(g.rate_min_bpm)},
           {"rate_max_bpm", num(g.rate_max_bpm)},
           {"drift_hz", num(g.drift_hz)},
           {"drift_amp", num(g.drift_amp)},
           {"flicker_hz", num(g.flicker_hz)},
           {"flicker_amp", num(g.flicker_amp)},
           {"noise_sigma", num(g.noise_sigma)},
           {"split", {num(split[0]), num(split[1]), num(split[2])}}};
    if (g.fixed_rate_bpm) j["fixed_rate_bpm"] = num(*g.fixed_rate_bpm);
    return j;
}

/// Canonical echo: parse(to_json(rc)) reproduces rc.
inline json to_json(const RunConfig& rc) {
    const auto& t = rc.train;
    const auto& a = t.augment;
    json seeds = json::array(), sizes = json::array();
    for (auto s : rc.ablate_seeds) seeds.push_back(num(s));
    for (auto s : rc.ablate_batch_sizes) sizes.push_back(num(std::uint64_t{s}));
    return json{
        {"seed", num(rc.seed)},
        {"threads", num(std::uint64_t{rc.threads})},
        {"out", rc.out},
        {"dataset", rc.dataset},
        {"checkpoint", rc.checkpoint},
        {"band", {{"lo_hz", num(rc.band.lo)}, {"hi_hz", num(rc.band.hi)}}},
        {"gen", gen_json(rc.gen, rc.split)},
        {"train",
         {{"mode", t.mode == train::Mode::sinc ? "sinc" : "supervised"},
          {"epochs", num(std::uint64_t{t.epochs})},
          {"batch_size", num(std::uint64_t{t.batch_size})},
          {"clip_frames", num(std::uint64_t{t.clip_frames})},
          {"lr", num(t.optim.lr)},
          {"beta1", num(t.optim.beta1)},
          {"beta2", num(t.optim.beta2)},
          {"eps", num(t.optim.eps)},
          {"weight_decay", num(t.optim.weight_decay)},
          {"losses",
           {{"bandwidth", t.loss.toggles.bandwidth},
            {"sparsity", t.loss.toggles.sparsity},
            {"variance", t.loss.toggles.variance},
            {"delta_f_hz", num(t.loss.sparsity.delta_f)},
            {"include_second_harmonic", t.loss.sparsity.include_second_harmonic},
            {"resolution_hz", num(t.loss.spectrum.resolution_hz)},
            {"hann_taper", t.loss.spectrum.hann_taper},
            {"variance_normalization",
             t.loss.variance_norm == losses::VarianceNormalization::pooled ? "pooled" : "per_sample"}}},
          {"model",
           {{"variant", model::to_string(t.model.variant)},
            {"channels", num(std::uint64_t{t.model.channels})},
            {"layers", num(std::uint64_t{t.model.layers})},
            {"temporal_kernel", num(std::uint64_t{t.model.temporal_kernel})}}},
          {"augment",
           {{"flip", a.flip},
            {"flip_prob", num(a.flip_prob)},
            {"illumination", a.illumination},
            {"illum_offset_sigma", num(a.illum_offset_sigma)},
            {"pixel_noise", a.pixel_noise},
            {"pixel_noise_sigma", num(a.pixel_noise_sigma)},
            {"resample", a.resample},
            {"resample_min", num(a.resample_min)},
            {"resample_max", num(a.resample_max)},
            {"time_reverse", a.time_reverse},
            {"time_reverse_prob", num(a.time_reverse_prob)}}}}},
        {"eval",
         {{"window_len_s", num(rc.eval.window_len_s)},
          {"stride_s", num(rc.eval.stride_s)},
          {"resolution_hz", num(rc.eval.resolution_hz)}}},
        {"ablate", {{"seeds", seeds}, {"batch_sizes", sizes}}}};
}

inline RunConfig load(const std::string& path) {
    const auto buf = binio::read_file(path);
    json j;
    try {
        j = json::parse(buf.begin(), buf.end());
    } catch (const json::exception& e) {
        fail(ErrorKind::invalid_config, "cannot parse " + path + ": " + e.what());
    }
    return parse(j);
}

}  // namespace sinc::config
