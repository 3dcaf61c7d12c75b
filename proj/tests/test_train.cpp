#include <algorithm>
#include <limits>
#include <sstream>
#include <type_traits>
#include <vector>

#include <gtest/gtest.h>

#include "sinc/ablation.hpp"
#include "sinc/train.hpp"

using namespace sinc;
using train::TrainConfig;

namespace {

struct Small {
    synth::Dataset ds;
    std::vector<Clip> train, val, test;
    std::vector<synth::GroundTruth> train_truth, val_truth, test_truth;

    Small() {
        synth::GenConfig g;
        g.n_clips = 12;
        g.frames = 180;
        g.height = g.width = 4;
        g.seed = 5;
        ds = synth::generate(g);
        const auto s = synth::split(ds.size(), {0.5, 0.25, 0.25}, 5);
        train = synth::select_clips(ds, s.train);
        val = synth::select_clips(ds, s.val);
        test = synth::select_clips(ds, s.test);
        train_truth = synth::select_truth(ds, s.train);
        val_truth = synth::select_truth(ds, s.val);
        test_truth = synth::select_truth(ds, s.test);
    }
};

const Small& data() {
    static const Small s;
    return s;
}

TrainConfig quick() {
    TrainConfig c;
    c.epochs = 3;
    c.batch_size = 3;
    c.optim.lr = 1e-2;
    c.seed = 7;
    return c;
}

bool is_config_error(const TrainConfig& c) {
    try {
        train::validate(c);
        return false;
    } catch (const Error& e) {
        return e.kind() == ErrorKind::invalid_config;
    }
}

}  // namespace

// Unsupervised training accepts clips only.
static_assert(std::is_same_v<decltype(&train::train_sinc),
                             train::TrainResult (*)(std::span<const Clip>, std::span<const Clip>, const TrainConfig&)>);

TEST(TrainConfig, Validation) {
    TrainConfig c;
    EXPECT_FALSE(is_config_error(c));
    c.loss.toggles = {false, false, false};
    EXPECT_TRUE(is_config_error(c));
    c = {};
    c.batch_size = 1;
    EXPECT_TRUE(is_config_error(c));
    c.loss.toggles.variance = false;
    EXPECT_FALSE(is_config_error(c));
    c = {};
    c.epochs = 0;
    EXPECT_TRUE(is_config_error(c));
    c = {};
    c.optim.lr = 0.0;
    EXPECT_TRUE(is_config_error(c));
}

TEST(TrainConfig, EmptyPartitionsRejected) {
    const auto& d = data();
    try {
        train::train_sinc(d.train, std::span<const Clip>(), quick());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::invalid_config);
    }
}

TEST(TrainLog, AppendOnlyMonotone) {
    train::TrainLog log;
    train::EpochRecord r;
    r.epoch = 1;
    log.append(r);
    r.epoch = 3;
    log.append(r);
    r.epoch = 3;
    EXPECT_THROW(log.append(r), Error);
    EXPECT_EQ(log.size(), 2u);
    std::istringstream is(log.to_jsonl());
    std::string line;
    std::size_t n = 0;
    while (std::getline(is, line)) {
        const auto j = nlohmann::json::parse(line);
        EXPECT_TRUE(j.contains("val") && j.contains("rng_digest") && j.contains("wall_time_s"));
        ++n;
    }
    EXPECT_EQ(n, 2u);
}

TEST(TrainSinc, SameSeedGivesIdenticalLogsAndParams) {
    const auto& d = data();
    const auto a = train::train_sinc(d.train, d.val, quick());
    const auto b = train::train_sinc(d.train, d.val, quick());
    ASSERT_FALSE(a.aborted);
    EXPECT_EQ(a.log.size(), 3u);
    EXPECT_EQ(a.log.digest(), b.log.digest());
    EXPECT_EQ(a.best_epoch, b.best_epoch);
    for (std::size_t i = 0; i < a.best.tensors.size(); ++i) EXPECT_EQ(a.best.tensors[i].data, b.best.tensors[i].data);
    TrainConfig other = quick();
    other.seed = 8;
    EXPECT_NE(train::train_sinc(d.train, d.val, other).log.digest(), a.log.digest());
}

TEST(TrainSinc, ReturnsTheBestLoggedCheckpoint) {
    const auto& d = data();
    TrainConfig c = quick();
    c.epochs = 5;
    const auto r = train::train_sinc(d.train, d.val, c);
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& rec : r.log.records()) {
        EXPECT_DOUBLE_EQ(rec.val_score, rec.val.bandwidth + rec.val.sparsity);
        lo = std::min(lo, rec.val_score);
    }
    EXPECT_EQ(r.best_score, lo);
    EXPECT_EQ(r.log.records()[r.best_epoch - 1].val_score, lo);
    const auto again = train::validation_losses(r.best, d.val, c);
    EXPECT_NEAR(again.bandwidth + again.sparsity, lo, 1e-12);
}

TEST(TrainSinc, EveryLossSubsetRuns) {
    const auto& d = data();
    const std::vector<std::uint64_t> seeds{1};
    for (const auto& arm : train::loss_arms(quick(), seeds)) {
        TrainConfig c = arm.config;
        c.epochs = 1;
        const auto r = train::train_sinc(d.train, d.val, c);
        EXPECT_FALSE(r.aborted) << arm.label;
        EXPECT_EQ(r.best_epoch, 1u);
    }
}

TEST(TrainSupervised, DeterministicAndImproves) {
    const auto& d = data();
    TrainConfig c = quick();
    c.mode = train::Mode::supervised;
    c.epochs = 6;
    const auto a = train::train_supervised(d.train, d.train_truth, d.val, d.val_truth, c);
    const auto b = train::train_supervised(d.train, d.train_truth, d.val, d.val_truth, c);
    EXPECT_EQ(a.log.digest(), b.log.digest());
    const auto& recs = a.log.records();
    EXPECT_LE(a.best_score, recs.front().val_score);
    for (const auto& r : recs) EXPECT_TRUE(r.val_pearson >= -1.0 && r.val_pearson <= 1.0);
    EXPECT_THROW(train::train_sinc(d.train, d.val, c), Error);
}

TEST(Ablation, LossArmsCoverSevenSubsets) {
    const std::vector<std::uint64_t> seeds{0, 1, 2};
    const auto arms = train::loss_arms({}, seeds);
    ASSERT_EQ(arms.size(), 21u);
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < 7; ++i) labels.push_back(arms[i].label);
    std::sort(labels.begin(), labels.end());
    EXPECT_EQ(labels, (std::vector<std::string>{"b", "bs", "bsv", "bv", "s", "sv", "v"}));
    EXPECT_EQ(arms[7].config.seed, 1u);
}

TEST(Ablation, AugmentArmsDifferOnlyInToggles) {
    const std::vector<std::uint64_t> seeds{4};
    const auto arms = train::augment_arms({}, seeds);
    ASSERT_EQ(arms.size(), 2u);
    const auto& on = arms[0].config.augment;
    const auto& off = arms[1].config.augment;
    EXPECT_FALSE(off.flip || off.illumination || off.pixel_noise || off.resample || off.time_reverse);
    EXPECT_EQ(on.flip_prob, off.flip_prob);
    EXPECT_EQ(on.resample_min, off.resample_min);
    EXPECT_EQ(on.resample_max, off.resample_max);
    EXPECT_EQ(on.pixel_noise_sigma, off.pixel_noise_sigma);
    EXPECT_EQ(arms[0].config.seed, arms[1].config.seed);
}

TEST(Ablation, BatchArmMatchesDirectTraining) {
    const auto& d = data();
    TrainConfig base = quick();
    const std::vector<std::size_t> sizes{2, 3};
    const std::vector<std::uint64_t> seeds{base.seed};
    const auto arms = train::batch_arms(base, sizes, seeds);
    ASSERT_EQ(arms.size(), 2u);
    const train::AblationData ad{d.train, d.val, d.test, d.test_truth, {4.0, 1.0}};
    const auto rows = train::run_arms(arms, ad, 2);
    EXPECT_EQ(rows[1].log_digest, train::train_sinc(d.train, d.val, base).log.digest());
    const auto serial = train::run_arms(arms, ad, 1);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_EQ(rows[i].log_digest, serial[i].log_digest);
        EXPECT_EQ(rows[i].mae_bpm, serial[i].mae_bpm);
    }
    std::ostringstream os;
    train::write_table(os, rows);
    EXPECT_EQ(os.str().rfind("# sinc-ablation v1\nlabel,seed,", 0), 0u);
}
