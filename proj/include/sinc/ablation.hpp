#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <iomanip>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "sinc/clip.hpp"
#include "sinc/eval.hpp"
#include "sinc/synthdata.hpp"
#include "sinc/train.hpp"

namespace sinc::train {

/// Everything an ablation needs. Test labels feed evaluation only.
struct AblationData {
    std::span<const Clip> train;
    std::span<const Clip> val;
    std::span<const Clip> test;
    std::span<const synth::GroundTruth> test_truth;
    eval::WindowOptions window{};
};

struct AblationArm {
    std::string label;
    TrainConfig config;
};

struct AblationRow {
    std::string label;
    std::uint64_t seed = 0;
    std::size_t best_epoch = 0;
    double val_bandwidth = 0.0;
    double val_sparsity = 0.0;
    double mae_bpm = 0.0;
    double rmse_bpm = 0.0;
    std::optional<double> pearson_r;
    double pred_dispersion_bpm = 0.0;
    double gt_dispersion_bpm = 0.0;
    bool aborted = false;
    std::uint64_t log_digest = 0;
};

inline std::string toggles_label(const losses::LossToggles& t) {
    std::string s;
    if (t.bandwidth) s += "b";
    if (t.sparsity) s += "s";
    if (t.variance) s += "v";
    return s.empty() ? "-" : s;
}

inline AblationRow run_arm(const AblationArm& arm, const AblationData& data) {
    const TrainResult r = train_sinc(data.train, data.val, arm.config);
    AblationRow row;
    row.label = arm.label;
    row.seed = arm.config.seed;
    row.best_epoch = r.best_epoch;
    row.aborted = r.aborted;
    row.log_digest = r.log.digest();
    if (r.best_epoch > 0) {
        const auto& rec = r.log.records()[r.best_epoch - 1];
        row.val_bandwidth = rec.val.bandwidth;
        row.val_sparsity = rec.val.sparsity;
    }
    const auto m = eval::evaluate(r.best, data.test, data.test_truth, data.window);
    row.mae_bpm = m.mae_bpm;
    row.rmse_bpm = m.rmse_bpm;
    row.pearson_r = m.pearson_r;
    row.pred_dispersion_bpm = m.pred_dispersion_bpm;
    row.gt_dispersion_bpm = m.gt_dispersion_bpm;
    return row;
}

/// Runs independent arms on up to `threads` workers. Each arm owns its RNG
/// streams, so results do not depend on the thread count.
inline std::vector<AblationRow> run_arms(const std::vector<AblationArm>& arms, const AblationData& data,
                                         std::size_t threads = 1) {
    for (const auto& a : arms) validate(a.config);
    std::vector<AblationRow> rows(arms.size());
    std::vector<std::exception_ptr> errors(arms.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < arms.size(); i = next++) {
            try {
                rows[i] = run_arm(arms[i], data);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t n = std::max<std::size_t>(1, std::min(threads, arms.size()));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return rows;
}

/// The 7 non-empty loss subsets, for every seed.
inline std::vector<AblationArm> loss_arms(const TrainConfig& base, std::span<const std::uint64_t> seeds) {
    std::vector<AblationArm> arms;
    for (std::uint64_t seed : seeds) {
        for (unsigned mask = 1; mask < 8; ++mask) {
            TrainConfig c = base;
            c.seed = seed;
            c.loss.toggles = {(mask & 1u) != 0, (mask & 2u) != 0, (mask & 4u) != 0};
            arms.push_back({toggles_label(c.loss.toggles), c});
        }
    }
    return arms;
}

inline std::vector<AblationArm> batch_arms(const TrainConfig& base, std::span<const std::size_t> sizes,
                                           std::span<const std::uint64_t> seeds) {
    std::vector<AblationArm> arms;
    for (std::uint64_t seed : seeds) {
        for (std::size_t b : sizes) {
            TrainConfig c = base;
            c.seed = seed;
            c.batch_size = b;
            arms.push_back({"batch=" + std::to_string(b), c});
        }
    }
    return arms;
}

/// Two arms per seed that differ only in the augmentation enable flags.
inline std::vector<AblationArm> augment_arms(const TrainConfig& base, std::span<const std::uint64_t> seeds) {
    std::vector<AblationArm> arms;
    for (std::uint64_t seed : seeds) {
        TrainConfig on = base;
        on.seed = seed;
        TrainConfig off = on;
        off.augment.flip = off.augment.illumination = off.augment.pixel_noise = false;
        off.augment.resample = off.augment.time_reverse = false;
        arms.push_back({"augmented", on});
        arms.push_back({"no-augmentation", off});
    }
    return arms;
}

inline constexpr const char* kAblationCsvVersion = "sinc-ablation v1";

/// label,seed,best_epoch,val_bandwidth,val_sparsity,mae_bpm,rmse_bpm,pearson_r,
/// pred_dispersion_bpm,gt_dispersion_bpm,aborted
inline void write_table(std::ostream& os, std::span<const AblationRow> rows) {
    os << "# " << kAblationCsvVersion << "\n";
    os << "label,seed,best_epoch,val_bandwidth,val_sparsity,mae_bpm,rmse_bpm,pearson_r,pred_dispersion_bpm,"
          "gt_dispersion_bpm,aborted\n";
    os << std::setprecision(10);
    for (const auto& r : rows) {
        os << r.label << ',' << r.seed << ',' << r.best_epoch << ',' << r.val_bandwidth << ',' << r.val_sparsity << ','
           << r.mae_bpm << ',' << r.rmse_bpm << ',';
        if (r.pearson_r) os << *r.pearson_r;
        os << ',' << r.pred_dispersion_bpm << ',' << r.gt_dispersion_bpm << ',' << (r.aborted ? 1 : 0) << '\n';
    }
}

}  // namespace sinc::train
