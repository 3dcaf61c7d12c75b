#pragma once

#include <chrono>
#include <cstdint>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "sinc/adamw.hpp"
#include "sinc/augment.hpp"
#include "sinc/binio.hpp"
#include "sinc/clip.hpp"
#include "sinc/diffcore.hpp"
#include "sinc/error.hpp"
#include "sinc/losses.hpp"
#include "sinc/model.hpp"
#include "sinc/rng.hpp"
#include "sinc/synthdata.hpp"

namespace sinc::train {

enum class Mode { sinc, supervised };

struct TrainConfig {
    Mode mode = Mode::sinc;
    std::size_t epochs = 200;
    std::size_t batch_size = 20;
    std::size_t clip_frames = 120;
    losses::LossConfig loss{};
    augment::AugmentConfig augment{};
    model::ModelConfig model{};
    model::AdamWConfig optim{};
    std::uint64_t seed = 0;
};

inline void validate(const TrainConfig& c) {
    require(c.epochs >= 1, ErrorKind::invalid_config, "epochs must be positive");
    require(c.batch_size >= 1, ErrorKind::invalid_config, "batch_size must be positive");
    require(c.clip_frames >= 2, ErrorKind::invalid_config, "clip_frames must be at least 2");
    if (c.mode == Mode::sinc) {
        require(c.loss.toggles.any(), ErrorKind::invalid_config, "at least one loss must be enabled");
        require(c.batch_size >= 2 || !c.loss.toggles.variance, ErrorKind::invalid_config,
                "variance loss needs batch_size >= 2");
        losses::validate(c.loss.sparsity, c.loss.band);
    }
    augment::validate(c.augment);
    model::validate(c.model);
    require(c.optim.lr > 0.0 && c.optim.weight_decay >= 0.0, ErrorKind::invalid_config, "bad optimizer settings");
}

struct EpochRecord {
    std::size_t epoch = 0;
    losses::LossBundle train;
    losses::LossBundle val;
    double train_pearson = 0.0;  // supervised mode only
    double val_pearson = 0.0;
    double val_score = 0.0;      // the model-selection criterion
    double wall_time_s = 0.0;
    std::uint64_t rng_digest = 0;
    std::size_t degenerate = 0;
};

/// Append-only per-epoch history.
class TrainLog {
public:
    void append(const EpochRecord& r) {
        require(records_.empty() || r.epoch > records_.back().epoch, ErrorKind::invalid_input,
                "epoch indices must increase");
        records_.push_back(r);
    }
    const std::vector<EpochRecord>& records() const noexcept { return records_; }
    std::size_t size() const noexcept { return records_.size(); }

    static nlohmann::json to_json(const EpochRecord& r, bool with_time = true) {
        auto bundle = [](const losses::LossBundle& b) {
            return nlohmann::json{{"bandwidth", b.bandwidth}, {"sparsity", b.sparsity}, {"variance", b.variance},
                                  {"total", b.total}};
        };
        nlohmann::json j{{"epoch", r.epoch},
                         {"train", bundle(r.train)},
                         {"val", bundle(r.val)},
                         {"train_neg_pearson", r.train_pearson},
                         {"val_neg_pearson", r.val_pearson},
                         {"val_score", r.val_score},
                         {"rng_digest", r.rng_digest},
                         {"degenerate", r.degenerate}};
        if (with_time) j["wall_time_s"] = r.wall_time_s;
        return j;
    }

    /// One JSON object per line.
    std::string to_jsonl() const {
        std::string out;
        for (const auto& r : records_) out += to_json(r).dump() + "\n";
        return out;
    }

    /// Digest over everything except wall-clock time.
    std::uint64_t digest() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (const auto& r : records_) {
            const std::string s = to_json(r, false).dump();
            h = binio::fnv1a(s.data(), s.size(), h);
        }
        return h;
    }

private:
    std::vector<EpochRecord> records_;
};

struct TrainResult {
    model::ModelParams best;
    TrainLog log;
    std::size_t best_epoch = 0;
    double best_score = 0.0;
    bool aborted = false;
    std::string diagnostic;
};

namespace detail {

inline std::uint64_t rng_digest(const Rng& rng) {
    std::ostringstream os;
    os << rng;
    return binio::fnv1a(os.str());
}

inline std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t s = 0; s < n; s += batch) {
        const std::size_t e = std::min(n, s + batch);
        if (e - s < 2 && batch >= 2) break;  // a lone straggler cannot form a batch
        out.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(s), idx.begin() + static_cast<std::ptrdiff_t>(e));
    }
    return out;
}

// Contiguous chunks of about `batch` for validation; a trailing chunk of one
// is folded into its predecessor.
inline std::vector<std::pair<std::size_t, std::size_t>> chunks(std::size_t n, std::size_t batch) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    batch = std::max<std::size_t>(batch, 2);
    for (std::size_t s = 0; s < n; s += batch) out.emplace_back(s, std::min(n, s + batch));
    if (out.size() >= 2 && out.back().second - out.back().first < 2) {
        out[out.size() - 2].second = out.back().second;
        out.pop_back();
    }
    return out;
}

inline void accumulate(losses::LossBundle& acc, const losses::LossBundle& b, double w) {
    acc.bandwidth += w * b.bandwidth;
    acc.sparsity += w * b.sparsity;
    acc.variance += w * b.variance;
    acc.total += w * b.total;
}

}  // namespace detail

/// Unaugmented SiNC losses of `params` on the first `cfg.clip_frames` frames
/// of every clip.
inline losses::LossBundle validation_losses(const model::ModelParams& params, std::span<const Clip> clips,
                                            const TrainConfig& cfg, std::size_t* degenerate = nullptr) {
    require(clips.size() >= 2, ErrorKind::invalid_input, "validation needs at least 2 clips");
    std::vector<std::vector<double>> waves;
    waves.reserve(clips.size());
    for (const Clip& c : clips) waves.push_back(model::predict(augment::crop(c, 0, cfg.clip_frames), params));
    losses::LossConfig lc = cfg.loss;
    lc.toggles = {};  // report every term
    losses::LossBundle acc;
    std::size_t bad = 0;
    for (auto [s, e] : detail::chunks(waves.size(), cfg.batch_size)) {
        const auto r = losses::combined_loss(std::span<const std::vector<double>>(waves).subspan(s, e - s),
                                             clips[0].fps, lc, false);
        const double w = static_cast<double>(e - s) / static_cast<double>(waves.size());
        detail::accumulate(acc, r.losses, w);
        bad += r.diagnostics.degenerate_bandwidth + r.diagnostics.degenerate_sparsity;
    }
    if (degenerate) *degenerate = bad;
    return acc;
}

/// Unsupervised training. The inputs are bare clips: ground truth cannot
/// reach this loop. Returns the parameters with the lowest validation
/// bandwidth + sparsity loss over all epochs.
inline TrainResult train_sinc(std::span<const Clip> train_clips, std::span<const Clip> val_clips, const TrainConfig& cfg) {
    validate(cfg);
    require(cfg.mode == Mode::sinc, ErrorKind::invalid_config, "train_sinc called with a supervised config");
    require(train_clips.size() >= 2 && val_clips.size() >= 2, ErrorKind::invalid_config,
            "train and validation partitions need at least 2 clips each");

    model::ModelParams params = model::init_params(cfg.model, mix_seed(cfg.seed, 0));
    model::OptimState opt = model::OptimState::for_params(params, cfg.optim);
    Rng shuffle_rng = substream(cfg.seed, 1);
    Rng aug_rng = substream(cfg.seed, 2);

    TrainResult res;
    res.best = params;
    res.best_score = std::numeric_limits<double>::infinity();
    const auto t0 = std::chrono::steady_clock::now();
    try {
        for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
            EpochRecord rec;
            rec.epoch = epoch;
            double seen = 0.0;
            for (const auto& batch : detail::make_batches(train_clips.size(), cfg.batch_size, shuffle_rng)) {
                ad::Tape tape;
                std::vector<ad::Var> outs;
                std::vector<std::vector<double>> waves;
                for (std::size_t i : batch) {
                    const auto view = augment::apply(train_clips[i], aug_rng, cfg.augment, augment::Mode::unsupervised,
                                                     cfg.clip_frames);
                    const ad::Var y = model::forward(tape, view.clip, params);
                    outs.push_back(y);
                    waves.emplace_back(y.value().begin(), y.value().end());
                }
                auto r = losses::combined_loss(waves, train_clips[0].fps, cfg.loss);
                rec.degenerate += r.diagnostics.degenerate_bandwidth + r.diagnostics.degenerate_sparsity +
                                  r.diagnostics.degenerate_variance;
                const ad::Var loss = ad::external_loss(outs, r.losses.total, std::move(r.grads));
                params.zero_grad();
                tape.backward(loss);
                model::adamw_step(params, opt);
                detail::accumulate(rec.train, r.losses, static_cast<double>(batch.size()));
                seen += static_cast<double>(batch.size());
            }
            if (seen > 0) {
                rec.train.bandwidth /= seen;
                rec.train.sparsity /= seen;
                rec.train.variance /= seen;
                rec.train.total /= seen;
            }
            std::size_t bad = 0;
            rec.val = validation_losses(params, val_clips, cfg, &bad);
            rec.degenerate += bad;
            rec.val.total = (cfg.loss.toggles.bandwidth ? rec.val.bandwidth : 0.0) +
                            (cfg.loss.toggles.sparsity ? rec.val.sparsity : 0.0) +
                            (cfg.loss.toggles.variance ? rec.val.variance : 0.0);
            rec.val_score = rec.val.bandwidth + rec.val.sparsity;
            rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            rec.rng_digest = detail::rng_digest(aug_rng) ^ detail::rng_digest(shuffle_rng);
            res.log.append(rec);
            if (rec.val_score < res.best_score) {
                res.best_score = rec.val_score;
                res.best_epoch = epoch;
                res.best = params;
            }
        }
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::numeric_failure) throw;
        res.aborted = true;
        res.diagnostic = e.what();
    }
    return res;
}

/// Supervised baseline: negative Pearson against the ground-truth waveform,
/// same augmentations minus time reversal, selection on validation loss.
inline TrainResult train_supervised(std::span<const Clip> train_clips, std::span<const synth::GroundTruth> train_truth,
                                    std::span<const Clip> val_clips, std::span<const synth::GroundTruth> val_truth,
                                    const TrainConfig& cfg) {
    validate(cfg);
    require(cfg.mode == Mode::supervised, ErrorKind::invalid_config, "train_supervised called with a sinc config");
    require(train_clips.size() == train_truth.size() && val_clips.size() == val_truth.size(), ErrorKind::invalid_input,
            "clips and ground truth must pair up");
    require(!train_clips.empty() && !val_clips.empty(), ErrorKind::invalid_config, "empty partition");

    model::ModelParams params = model::init_params(cfg.model, mix_seed(cfg.seed, 0));
    model::OptimState opt = model::OptimState::for_params(params, cfg.optim);
    Rng shuffle_rng = substream(cfg.seed, 1);
    Rng aug_rng = substream(cfg.seed, 2);

    TrainResult res;
    res.best = params;
    res.best_score = std::numeric_limits<double>::infinity();
    const auto t0 = std::chrono::steady_clock::now();
    try {
        for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
            EpochRecord rec;
            rec.epoch = epoch;
            double seen = 0.0;
            std::vector<std::size_t> all(train_clips.size());
            std::iota(all.begin(), all.end(), std::size_t{0});
            std::shuffle(all.begin(), all.end(), shuffle_rng);
            for (std::size_t s = 0; s < all.size(); s += cfg.batch_size) {
                const std::size_t e = std::min(all.size(), s + cfg.batch_size);
                ad::Tape tape;
                std::vector<ad::Var> outs;
                std::vector<std::vector<double>> grads;
                double batch_loss = 0.0;
                const double inv = 1.0 / static_cast<double>(e - s);
                for (std::size_t k = s; k < e; ++k) {
                    const std::size_t i = all[k];
                    const auto view = augment::apply(train_clips[i], aug_rng, cfg.augment, augment::Mode::supervised,
                                                     cfg.clip_frames, train_truth[i].waveform);
                    const ad::Var y = model::forward(tape, view.clip, params);
                    auto l = losses::negative_pearson_loss(y.value(), view.truth);
                    for (double& g : l.grad) g *= inv;
                    batch_loss += l.value * inv;
                    outs.push_back(y);
                    grads.push_back(std::move(l.grad));
                }
                const ad::Var loss = ad::external_loss(outs, batch_loss, std::move(grads));
                params.zero_grad();
                tape.backward(loss);
                model::adamw_step(params, opt);
                rec.train_pearson += batch_loss * static_cast<double>(e - s);
                seen += static_cast<double>(e - s);
            }
            rec.train_pearson /= std::max(seen, 1.0);
            double val = 0.0;
            for (std::size_t i = 0; i < val_clips.size(); ++i) {
                const auto y = model::predict(augment::crop(val_clips[i], 0, cfg.clip_frames), params);
                const std::span<const double> gt(val_truth[i].waveform.data(), cfg.clip_frames);
                val += losses::negative_pearson_loss(y, gt).value;
            }
            rec.val_pearson = val / static_cast<double>(val_clips.size());
            rec.val_score = rec.val_pearson;
            rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            rec.rng_digest = detail::rng_digest(aug_rng) ^ detail::rng_digest(shuffle_rng);
            res.log.append(rec);
            if (rec.val_score < res.best_score) {
                res.best_score = rec.val_score;
                res.best_epoch = epoch;
                res.best = params;
            }
        }
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::numeric_failure) throw;
        res.aborted = true;
        res.diagnostic = e.what();
    }
    return res;
}

}  // namespace sinc::train
