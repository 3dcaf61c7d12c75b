#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "sinc/binio.hpp"
#include "sinc/clip.hpp"
#include "sinc/error.hpp"
#include "sinc/synthdata.hpp"

// On-disk dataset layout:
//   <dir>/manifest.json           digests, seed, generator config echo, split
//   <dir>/clips/clip_NNNN.sncv    binary clip
//   <dir>/clips/clip_NNNN.txt     ground-truth sidecar (read by eval only)
namespace sinc::io {

inline constexpr std::uint32_t kClipFormatVersion = 1;
inline constexpr const char* kSidecarFormat = "sinc-truth v1";
inline constexpr const char* kManifestFormat = "sinc-dataset v1";

// "SNCV" | u32 version | u32 T | u32 H | u32 W | u32 C | f64 fps | f32 pixels
inline std::vector<std::uint8_t> encode_clip(const Clip& clip) {
    validate(clip);
    binio::Writer w;
    w.bytes("SNCV", 4);
    w.u32(kClipFormatVersion);
    w.u32(static_cast<std::uint32_t>(clip.frames));
    w.u32(static_cast<std::uint32_t>(clip.height));
    w.u32(static_cast<std::uint32_t>(clip.width));
    w.u32(static_cast<std::uint32_t>(clip.channels));
    w.f64(clip.fps);
    for (float v : clip.data) w.f32(v);
    return w.buffer();
}

inline Clip decode_clip(const std::vector<std::uint8_t>& buf) {
    require(buf.size() >= 8 && std::string(buf.begin(), buf.begin() + 4) == "SNCV", ErrorKind::checksum,
            "not a clip file (bad magic)");
    binio::Reader r(buf, buf.size());
    r.u32();
    const std::uint32_t version = r.u32();
    require(version == kClipFormatVersion, ErrorKind::incompatible_version,
            "clip file version " + std::to_string(version) + " is not supported");
    Clip c;
    c.frames = r.u32();
    c.height = r.u32();
    c.width = r.u32();
    c.channels = r.u32();
    c.fps = r.f64();
    const std::size_t n = c.frames * c.frame_size();
    require(r.has(4 * n) && buf.size() == r.pos() + 4 * n, ErrorKind::checksum, "clip file size does not match header");
    c.data.resize(n);
    for (float& v : c.data) v = r.f32();
    validate(c);
    return c;
}

namespace detail {

inline std::string fmt_double(double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.17g", v);
    return b;
}

inline double parse_double(const std::string& s, const std::string& what) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    require(ec == std::errc{} && p == s.data() + s.size(), ErrorKind::invalid_input, "bad number for " + what + ": " + s);
    return v;
}

inline std::string hex64(std::uint64_t v) {
    char b[20];
    std::snprintf(b, sizeof b, "%016llx", static_cast<unsigned long long>(v));
    return b;
}

}  // namespace detail

/// Plain-text sidecar: one key=value per line, waveform comma separated.
inline std::string encode_truth(const synth::GroundTruth& gt) {
    using detail::fmt_double;
    std::ostringstream os;
    os << "format=" << kSidecarFormat << "\n";
    os << "rate_bpm=" << fmt_double(gt.rate_bpm) << "\n";
    os << "harmonic_phase=" << fmt_double(gt.harmonic_phase) << "\n";
    const auto& d = gt.distractors;
    os << "drift_hz=" << fmt_double(d.drift_hz) << "\n";
    os << "drift_amp=" << fmt_double(d.drift_amp) << "\n";
    os << "drift_phase=" << fmt_double(d.drift_phase) << "\n";
    os << "flicker_hz=" << fmt_double(d.flicker_hz) << "\n";
    os << "flicker_amp=" << fmt_double(d.flicker_amp) << "\n";
    os << "flicker_phase=" << fmt_double(d.flicker_phase) << "\n";
    os << "noise_sigma=" << fmt_double(d.noise_sigma) << "\n";
    os << "waveform=";
    for (std::size_t i = 0; i < gt.waveform.size(); ++i) os << (i ? "," : "") << fmt_double(gt.waveform[i]);
    os << "\n";
    return os.str();
}

inline synth::GroundTruth decode_truth(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        require(eq != std::string::npos, ErrorKind::invalid_input, "sidecar line without '='");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    require(kv["format"] == kSidecarFormat, ErrorKind::incompatible_version, "unsupported sidecar format");
    auto num = [&](const char* k) {
        require(kv.count(k) == 1, ErrorKind::invalid_input, std::string("sidecar missing ") + k);
        return detail::parse_double(kv[k], k);
    };
    synth::GroundTruth gt;
    gt.rate_bpm = num("rate_bpm");
    gt.harmonic_phase = num("harmonic_phase");
    gt.distractors = {num("drift_hz"),    num("drift_amp"),     num("drift_phase"), num("flicker_hz"),
                      num("flicker_amp"), num("flicker_phase"), num("noise_sigma")};
    std::istringstream ws(kv["waveform"]);
    std::string tok;
    while (std::getline(ws, tok, ',')) gt.waveform.push_back(detail::parse_double(tok, "waveform"));
    return gt;
}

inline std::string clip_stem(std::size_t i) {
    char b[32];
    std::snprintf(b, sizeof b, "clip_%04zu", i);
    return b;
}

/// Writes clips, sidecars and manifest. `gen_echo` is stored verbatim.
inline nlohmann::json save_dataset(const std::string& dir, const synth::Dataset& ds, const synth::Split& split,
                                   const nlohmann::json& gen_echo) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(fs::path(dir) / "clips", ec);
    if (ec) fail(ErrorKind::io, "cannot create " + dir + ": " + ec.message());

    nlohmann::json clips = nlohmann::json::array();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const std::string stem = clip_stem(i);
        const auto bytes = encode_clip(ds.clips[i]);
        const std::string truth = encode_truth(ds.truth[i]);
        binio::write_file((fs::path(dir) / "clips" / (stem + ".sncv")).string(), bytes);
        binio::write_file((fs::path(dir) / "clips" / (stem + ".txt")).string(),
                          std::vector<std::uint8_t>(truth.begin(), truth.end()));
        clips.push_back({{"clip", "clips/" + stem + ".sncv"},
                         {"sidecar", "clips/" + stem + ".txt"},
                         {"clip_fnv1a", detail::hex64(binio::fnv1a(bytes.data(), bytes.size()))},
                         {"sidecar_fnv1a", detail::hex64(binio::fnv1a(truth))}});
    }
    nlohmann::json m{{"format", kManifestFormat},
                     {"seed", std::to_string(ds.config.seed)},
                     {"generator", gen_echo},
                     {"clips", clips},
                     {"split", {{"train", split.train}, {"val", split.val}, {"test", split.test}}}};
    const std::string text = m.dump(2) + "\n";
    binio::write_file((fs::path(dir) / "manifest.json").string(), std::vector<std::uint8_t>(text.begin(), text.end()));
    return m;
}

inline nlohmann::json load_manifest(const std::string& dir) {
    const auto buf = binio::read_file((std::filesystem::path(dir) / "manifest.json").string());
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(buf.begin(), buf.end());
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::invalid_input, std::string("malformed manifest: ") + e.what());
    }
    require(m.value("format", "") == kManifestFormat, ErrorKind::incompatible_version, "unsupported manifest format");
    return m;
}

inline std::vector<std::size_t> split_indices(const nlohmann::json& manifest, const std::string& part) {
    require(manifest.contains("split") && manifest["split"].contains(part), ErrorKind::invalid_input,
            "manifest has no '" + part + "' split");
    return manifest["split"][part].get<std::vector<std::size_t>>();
}

/// Loads clip tensors only, verifying each against its manifest digest.
inline std::vector<Clip> load_clips(const std::string& dir, const nlohmann::json& manifest,
                                    const std::vector<std::size_t>& idx) {
    const auto& entries = manifest.at("clips");
    std::vector<Clip> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) {
        require(i < entries.size(), ErrorKind::invalid_input, "split index out of range");
        const auto bytes = binio::read_file((std::filesystem::path(dir) / entries[i]["clip"].get<std::string>()).string());
        require(detail::hex64(binio::fnv1a(bytes.data(), bytes.size())) == entries[i]["clip_fnv1a"].get<std::string>(),
                ErrorKind::checksum, "clip digest mismatch for index " + std::to_string(i));
        out.push_back(decode_clip(bytes));
    }
    return out;
}

/// Loads ground-truth sidecars. Only evaluation calls this.
inline std::vector<synth::GroundTruth> load_truth(const std::string& dir, const nlohmann::json& manifest,
                                                  const std::vector<std::size_t>& idx) {
    const auto& entries = manifest.at("clips");
    std::vector<synth::GroundTruth> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) {
        require(i < entries.size(), ErrorKind::invalid_input, "split index out of range");
        const auto bytes =
            binio::read_file((std::filesystem::path(dir) / entries[i]["sidecar"].get<std::string>()).string());
        const std::string text(bytes.begin(), bytes.end());
        require(detail::hex64(binio::fnv1a(text)) == entries[i]["sidecar_fnv1a"].get<std::string>(),
                ErrorKind::checksum, "sidecar digest mismatch for index " + std::to_string(i));
        out.push_back(decode_truth(text));
    }
    return out;
}

}  // namespace sinc::io
