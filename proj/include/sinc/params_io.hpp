#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sinc/binio.hpp"
#include "sinc/error.hpp"
#include "sinc/model.hpp"

// Parameter file layout (little-endian):
//   "SINC" | u32 version | u64 config digest | u32 variant | u32 channels |
//   u32 layers | u32 kernel | u32 input channels | u64 init seed |
//   u32 tensor count | f64 data of every tensor in declared order | u32 CRC32
// The CRC covers every byte before it.
namespace sinc::model {

inline constexpr std::uint32_t kParamFormatVersion = 1;

inline std::vector<std::uint8_t> encode_params(const ModelParams& p) {
    binio::Writer w;
    w.bytes("SINC", 4);
    w.u32(kParamFormatVersion);
    w.u64(binio::fnv1a(describe(p.config)));
    w.u32(static_cast<std::uint32_t>(p.config.variant));
    w.u32(static_cast<std::uint32_t>(p.config.channels));
    w.u32(static_cast<std::uint32_t>(p.config.layers));
    w.u32(static_cast<std::uint32_t>(p.config.temporal_kernel));
    w.u32(static_cast<std::uint32_t>(p.config.input_channels));
    w.u64(p.seed);
    w.u32(static_cast<std::uint32_t>(p.tensors.size()));
    for (const auto& t : p.tensors)
        for (double v : t.data) w.f64(v);
    const auto& buf = w.buffer();
    const std::uint32_t crc = binio::crc32_of(buf.data(), buf.size());
    w.u32(crc);
    return w.buffer();
}

inline ModelParams decode_params(const std::vector<std::uint8_t>& buf) {
    require(buf.size() >= 12 && std::string(buf.begin(), buf.begin() + 4) == "SINC", ErrorKind::checksum,
            "not a parameter file (bad magic)");
    binio::Reader head(buf, buf.size());
    head.u32();  // magic
    const std::uint32_t version = head.u32();
    require(version == kParamFormatVersion, ErrorKind::incompatible_version,
            "parameter file version " + std::to_string(version) + " is not supported (expected " +
                std::to_string(kParamFormatVersion) + ")");
    const std::size_t body = buf.size() - 4;
    std::uint32_t stored = 0;
    for (std::size_t i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(buf[body + i]) << (8 * i);
    require(stored == binio::crc32_of(buf.data(), body), ErrorKind::checksum, "parameter file CRC mismatch");

    binio::Reader r(buf, body);
    r.u32();
    r.u32();
    const std::uint64_t digest = r.u64();
    ModelParams p;
    p.config.variant = static_cast<Variant>(r.u32());
    p.config.channels = r.u32();
    p.config.layers = r.u32();
    p.config.temporal_kernel = r.u32();
    p.config.input_channels = r.u32();
    p.seed = r.u64();
    require(p.config.variant == Variant::spatial_mean_tcnn || p.config.variant == Variant::small_3d_cnn,
            ErrorKind::checksum, "unknown model variant in parameter file");
    require(digest == binio::fnv1a(describe(p.config)), ErrorKind::checksum, "config digest mismatch");
    const auto shapes = param_shapes(p.config);
    require(r.u32() == shapes.size(), ErrorKind::checksum, "tensor count mismatch");
    for (const auto& s : shapes) {
        ad::Tensor t = ad::Tensor::zeros(s, true);
        for (double& v : t.data) v = r.f64();
        p.tensors.push_back(std::move(t));
    }
    require(r.pos() == body, ErrorKind::checksum, "trailing bytes in parameter file");
    return p;
}

inline void save_params(const ModelParams& p, const std::string& path) { binio::write_file(path, encode_params(p)); }

inline ModelParams load_params(const std::string& path) { return decode_params(binio::read_file(path)); }

}  // namespace sinc::model
