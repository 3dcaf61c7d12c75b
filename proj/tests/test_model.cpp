#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "sinc/adamw.hpp"
#include "sinc/model.hpp"
#include "sinc/params_io.hpp"

using namespace sinc;
using model::ModelConfig;
using model::Variant;

namespace {

Clip random_clip(std::size_t t, std::uint64_t seed, std::size_t hw = 8) {
    Clip c(t, hw, hw, 3, 30.0);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.2f, 0.8f);
    for (float& v : c.data) v = u(rng);
    return c;
}

ModelConfig small3d() {
    ModelConfig c;
    c.variant = Variant::small_3d_cnn;
    c.channels = 4;
    return c;
}

}  // namespace

TEST(Forward, OutputLengthEqualsInputLength) {
    const auto p = model::init_params({}, 1);
    for (std::size_t t : {13u, 50u, 120u, 301u}) EXPECT_EQ(model::predict(random_clip(t, t), p).size(), t);
    const auto q = model::init_params(small3d(), 1);
    EXPECT_EQ(model::predict(random_clip(120, 3), q).size(), 120u);
}

TEST(Forward, ConstantClipGivesConstantOutput) {
    for (const ModelConfig& cfg : {ModelConfig{}, small3d()}) {
        const auto p = model::init_params(cfg, 5);
        Clip c(120, 8, 8, 3, 30.0);
        std::fill(c.data.begin(), c.data.end(), 0.42f);
        const auto y = model::predict(c, p);
        for (double v : y) EXPECT_NEAR(v, y[0], 1e-12);
    }
}

TEST(Forward, Errors) {
    const auto p = model::init_params({}, 1);
    EXPECT_THROW(model::predict(random_clip(5, 1), p), Error);
    Clip gray(120, 8, 8, 1, 30.0);
    try {
        model::predict(gray, p);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::invalid_input);
    }
    ModelConfig bad;
    bad.temporal_kernel = 4;
    EXPECT_THROW(model::init_params(bad, 0), Error);
    bad = {};
    bad.layers = 0;
    EXPECT_THROW(model::init_params(bad, 0), Error);
}

TEST(Init, SeededAndBounded) {
    const auto a = model::init_params({}, 17), b = model::init_params({}, 17), c = model::init_params({}, 18);
    ASSERT_EQ(a.tensors.size(), 6u);
    for (std::size_t i = 0; i < a.tensors.size(); ++i) EXPECT_EQ(a.tensors[i].data, b.tensors[i].data);
    EXPECT_NE(a.tensors[0].data, c.tensors[0].data);
    // first layer fan-in is 3 channels x 5 taps
    for (double v : a.tensors[0].data) EXPECT_LE(std::abs(v), std::sqrt(1.0 / 15.0));
    for (double v : a.tensors[2].data) EXPECT_LE(std::abs(v), std::sqrt(1.0 / 80.0));
}

TEST(AdamW, DescendsOnQuadratic) {
    model::ModelParams p;
    p.tensors.push_back(ad::Tensor({1}, {1.0}, true));
    model::AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.0;
    auto st = model::OptimState::for_params(p, cfg);
    p.tensors[0].grad = {2.0 * p.tensors[0].data[0]};
    model::adamw_step(p, st);
    EXPECT_LT(p.tensors[0].data[0], 1.0);
    EXPECT_NEAR(p.tensors[0].data[0], 0.9, 1e-6);
}

TEST(AdamW, ZeroGradientZeroDecayIsIdentity) {
    auto p = model::init_params({}, 3);
    const auto before = p.tensors;
    model::AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    auto st = model::OptimState::for_params(p, cfg);
    p.zero_grad();
    for (int i = 0; i < 5; ++i) model::adamw_step(p, st);
    for (std::size_t i = 0; i < p.tensors.size(); ++i) EXPECT_EQ(p.tensors[i].data, before[i].data);
}

TEST(AdamW, DecoupledDecayOnly) {
    model::ModelParams p;
    p.tensors.push_back(ad::Tensor({3}, {1.0, -2.0, 0.5}, true));
    auto st = model::OptimState::for_params(p, {1e-4, 0.9, 0.999, 1e-8, 0.01});
    p.zero_grad();
    model::adamw_step(p, st);
    const double k = 1.0 - 1e-4 * 0.01;
    EXPECT_NEAR(k, 1.0 - 1e-6, 1e-16);
    EXPECT_EQ(p.tensors[0].data[0], 1.0 * k);
    EXPECT_EQ(p.tensors[0].data[1], -2.0 * k);
    EXPECT_EQ(p.tensors[0].data[2], 0.5 * k);
}

TEST(AdamW, NonFiniteGradientLeavesParamsUntouched) {
    auto p = model::init_params({}, 4);
    const auto before = p.tensors;
    auto st = model::OptimState::for_params(p);
    p.zero_grad();
    p.tensors[3].grad[2] = std::nan("");
    try {
        model::adamw_step(p, st);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::numeric_failure);
    }
    EXPECT_EQ(st.step, 0u);
    for (std::size_t i = 0; i < p.tensors.size(); ++i) EXPECT_EQ(p.tensors[i].data, before[i].data);
}

TEST(ParamsIo, RoundTripIsBitExact) {
    for (const ModelConfig& cfg : {ModelConfig{}, small3d()}) {
        auto p = model::init_params(cfg, 99);
        p.tensors[1].data[0] = -0.0;
        p.tensors[0].data[0] = 1e-310;
        const auto q = model::decode_params(model::encode_params(p));
        EXPECT_EQ(q.seed, p.seed);
        EXPECT_EQ(model::describe(q.config), model::describe(p.config));
        ASSERT_EQ(q.tensors.size(), p.tensors.size());
        for (std::size_t i = 0; i < p.tensors.size(); ++i) {
            ASSERT_EQ(q.tensors[i].shape, p.tensors[i].shape);
            EXPECT_EQ(std::memcmp(q.tensors[i].data.data(), p.tensors[i].data.data(), p.tensors[i].size() * 8), 0);
        }
    }
}

TEST(ParamsIo, FileRoundTrip) {
    const auto path = (std::filesystem::temp_directory_path() / "sinc_params_test.sinc").string();
    const auto p = model::init_params({}, 5);
    model::save_params(p, path);
    const auto q = model::load_params(path);
    for (std::size_t i = 0; i < p.tensors.size(); ++i) EXPECT_EQ(q.tensors[i].data, p.tensors[i].data);
    std::filesystem::remove(path);
    try {
        model::load_params(path);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::io);
    }
}

TEST(ParamsIo, TruncatedOrCorruptIsChecksumError) {
    const auto buf = model::encode_params(model::init_params({}, 6));
    for (std::size_t cut : {buf.size() - 1, buf.size() - 9, std::size_t{40}, std::size_t{6}}) {
        std::vector<std::uint8_t> t(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(cut));
        try {
            model::decode_params(t);
            FAIL() << "cut " << cut;
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::checksum) << "cut " << cut;
        }
    }
    auto flipped = buf;
    flipped[100] ^= 0x10;
    try {
        model::decode_params(flipped);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::checksum);
    }
}

TEST(ParamsIo, VersionMismatchIsIncompatible) {
    auto buf = model::encode_params(model::init_params({}, 7));
    buf[4] = 2;
    try {
        model::decode_params(buf);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::incompatible_version);
    }
}
