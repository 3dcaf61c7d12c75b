// sinc: generate synthetic data, train, evaluate, check gradients, ablate.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "sinc/ablation.hpp"
#include "sinc/dataset_io.hpp"
#include "sinc/gradcheck.hpp"
#include "sinc/params_io.hpp"
#include "sinc/run_config.hpp"
#include "sinc/sinc.hpp"

namespace {

using namespace sinc;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

struct Flags {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::string dataset;
    std::string checkpoint;
    std::string split = "test";
    std::string kind;
};

int exit_code(ErrorKind k) {
    switch (k) {
        case ErrorKind::numeric_failure: return kExitNumeric;
        case ErrorKind::io:
        case ErrorKind::checksum:
        case ErrorKind::incompatible_version: return kExitIo;
        default: return kExitConfig;
    }
}

config::RunConfig resolve(const Flags& f) {
    config::RunConfig rc = f.config.empty() ? config::RunConfig{} : config::load(f.config);
    if (f.seed) rc.seed = *f.seed;
    if (f.threads) rc.threads = *f.threads;
    if (!f.out.empty()) rc.out = f.out;
    if (!f.dataset.empty()) rc.dataset = f.dataset;
    if (!f.checkpoint.empty()) rc.checkpoint = f.checkpoint;
    rc.sync();
    config::validate(rc);
    return rc;
}

void write_text(const fs::path& p, const std::string& text) {
    binio::write_file(p.string(), std::vector<std::uint8_t>(text.begin(), text.end()));
}

fs::path prepare_out(const config::RunConfig& rc) {
    std::error_code ec;
    fs::create_directories(rc.out, ec);
    if (ec) fail(ErrorKind::io, "cannot create output directory " + rc.out + ": " + ec.message());
    nlohmann::json echo = config::to_json(rc);
    echo["library_version"] = "0.1.0";
    write_text(fs::path(rc.out) / "config.json", echo.dump(2) + "\n");
    return rc.out;
}

// In-memory data for one run: either a dataset directory or a fresh corpus
// from the gen section. Labels are loaded separately and only on request.
struct Data {
    std::vector<Clip> train, val, test;
    std::vector<synth::GroundTruth> train_truth, val_truth, test_truth;
};

Data load_data(const config::RunConfig& rc, bool want_truth, bool want_train) {
    Data d;
    if (!rc.dataset.empty()) {
        const auto m = io::load_manifest(rc.dataset);
        const auto tr = io::split_indices(m, "train"), va = io::split_indices(m, "val"), te = io::split_indices(m, "test");
        if (want_train) {
            d.train = io::load_clips(rc.dataset, m, tr);
            d.val = io::load_clips(rc.dataset, m, va);
        }
        d.test = io::load_clips(rc.dataset, m, te);
        if (want_truth) {
            if (want_train) {
                d.train_truth = io::load_truth(rc.dataset, m, tr);
                d.val_truth = io::load_truth(rc.dataset, m, va);
            }
            d.test_truth = io::load_truth(rc.dataset, m, te);
        }
        return d;
    }
    const auto ds = synth::generate(rc.gen);
    const auto sp = synth::split(ds.size(), rc.split, rc.seed);
    d.train = synth::select_clips(ds, sp.train);
    d.val = synth::select_clips(ds, sp.val);
    d.test = synth::select_clips(ds, sp.test);
    if (want_truth) {
        d.train_truth = synth::select_truth(ds, sp.train);
        d.val_truth = synth::select_truth(ds, sp.val);
        d.test_truth = synth::select_truth(ds, sp.test);
    }
    return d;
}

int cmd_gen(const Flags& f) {
    const auto rc = resolve(f);
    const fs::path out = prepare_out(rc);
    const auto ds = synth::generate(rc.gen);
    const auto sp = synth::split(ds.size(), rc.split, rc.seed);
    io::save_dataset(out.string(), ds, sp, config::gen_json(rc.gen, rc.split));
    std::printf("wrote %zu clips to %s (train %zu, val %zu, test %zu)\n", ds.size(), out.c_str(), sp.train.size(),
                sp.val.size(), sp.test.size());
    return kExitOk;
}

int cmd_train(const Flags& f) {
    const auto rc = resolve(f);
    const fs::path out = prepare_out(rc);
    const bool supervised = rc.train.mode == train::Mode::supervised;
    const Data d = load_data(rc, supervised, true);
    const train::TrainResult r = supervised
                                     ? train::train_supervised(d.train, d.train_truth, d.val, d.val_truth, rc.train)
                                     : train::train_sinc(d.train, d.val, rc.train);
    model::save_params(r.best, (out / "params.sinc").string());
    write_text(out / "train_log.jsonl", r.log.to_jsonl());
    nlohmann::json summary{{"best_epoch", r.best_epoch},
                           {"best_val_score", r.best_score},
                           {"epochs_logged", r.log.size()},
                           {"log_digest", r.log.digest()},
                           {"aborted", r.aborted},
                           {"diagnostic", r.diagnostic}};
    write_text(out / "summary.json", summary.dump(2) + "\n");
    std::printf("best epoch %zu, validation score %.6f\n", r.best_epoch, r.best_score);
    if (r.aborted) {
        std::fprintf(stderr, "training aborted: %s\n", r.diagnostic.c_str());
        return kExitNumeric;
    }
    return kExitOk;
}

int cmd_eval(const Flags& f) {
    const auto rc = resolve(f);
    require(!rc.checkpoint.empty(), ErrorKind::invalid_config, "eval needs --checkpoint (or \"checkpoint\" in the config)");
    const auto params = model::load_params(rc.checkpoint);
    const fs::path out = prepare_out(rc);
    std::vector<Clip> clips;
    std::vector<synth::GroundTruth> truth;
    if (!rc.dataset.empty()) {
        const auto m = io::load_manifest(rc.dataset);
        const auto idx = io::split_indices(m, f.split);
        clips = io::load_clips(rc.dataset, m, idx);
        truth = io::load_truth(rc.dataset, m, idx);
    } else {
        Data d = load_data(rc, true, f.split != "test");
        if (f.split == "train") clips = std::move(d.train), truth = std::move(d.train_truth);
        else if (f.split == "val") clips = std::move(d.val), truth = std::move(d.val_truth);
        else clips = std::move(d.test), truth = std::move(d.test_truth);
    }
    const auto rep = eval::evaluate(params, clips, truth, rc.eval);
    std::ostringstream csv;
    eval::write_csv(csv, rep);
    write_text(out / "metrics.csv", csv.str());
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    nlohmann::json summary{{"split", f.split},
                           {"windows", rep.windows.size()},
                           {"mae_bpm", rep.mae_bpm},
                           {"rmse_bpm", rep.rmse_bpm},
                           {"pearson_r", opt(rep.pearson_r)},
                           {"mean_snr_db", opt(rep.mean_snr_db)},
                           {"pred_dispersion_bpm", rep.pred_dispersion_bpm},
                           {"gt_dispersion_bpm", rep.gt_dispersion_bpm}};
    write_text(out / "metrics.json", summary.dump(2) + "\n");
    std::printf("MAE %.3f bpm  RMSE %.3f bpm  r %s  windows %zu\n", rep.mae_bpm, rep.rmse_bpm,
                rep.pearson_r ? std::to_string(*rep.pearson_r).c_str() : "null", rep.windows.size());
    return kExitOk;
}

int cmd_gradcheck(const Flags& f) {
    gradcheck::Options o;
    if (f.seed) o.seed = *f.seed;
    const auto rows = gradcheck::run_all(o);
    std::ostringstream table;
    table << "# sinc-gradcheck v1\nname,trials,checked,skipped,max_rel_error,result\n";
    bool ok = true;
    std::printf("%-26s %7s %8s %8s %14s  %s\n", "check", "trials", "checked", "skipped", "max rel err", "result");
    for (const auto& r : rows) {
        std::printf("%-26s %7zu %8zu %8zu %14.3e  %s\n", r.name.c_str(), r.trials, r.checked, r.skipped,
                    r.max_rel_error, r.pass ? "PASS" : "FAIL");
        table << r.name << ',' << r.trials << ',' << r.checked << ',' << r.skipped << ',' << r.max_rel_error << ','
              << (r.pass ? "PASS" : "FAIL") << '\n';
        ok = ok && r.pass;
    }
    if (!f.out.empty()) {
        std::error_code ec;
        fs::create_directories(f.out, ec);
        if (ec) fail(ErrorKind::io, "cannot create output directory " + f.out);
        write_text(fs::path(f.out) / "gradcheck.csv", table.str());
    }
    return ok ? kExitOk : kExitNumeric;
}

int cmd_ablate(const Flags& f) {
    const auto rc = resolve(f);
    const fs::path out = prepare_out(rc);
    const Data d = load_data(rc, true, true);
    std::vector<train::AblationArm> arms;
    if (f.kind == "losses") arms = train::loss_arms(rc.train, rc.ablate_seeds);
    else if (f.kind == "batch") arms = train::batch_arms(rc.train, rc.ablate_batch_sizes, rc.ablate_seeds);
    else if (f.kind == "augment") arms = train::augment_arms(rc.train, rc.ablate_seeds);
    else fail(ErrorKind::invalid_config, "ablation kind must be losses, batch or augment");
    const train::AblationData data{d.train, d.val, d.test, d.test_truth, rc.eval};
    const auto rows = train::run_arms(arms, data, rc.threads);
    std::ostringstream csv;
    train::write_table(csv, rows);
    write_text(out / ("ablation_" + f.kind + ".csv"), csv.str());
    std::printf("%-16s %6s %10s %10s %8s %10s\n", "arm", "seed", "MAE", "RMSE", "r", "disp");
    for (const auto& r : rows) {
        std::printf("%-16s %6llu %10.3f %10.3f %8.3f %10.3f%s\n", r.label.c_str(), static_cast<unsigned long long>(r.seed),
                    r.mae_bpm, r.rmse_bpm, r.pearson_r.value_or(0.0), r.pred_dispersion_bpm, r.aborted ? "  (aborted)" : "");
    }
    for (const auto& r : rows)
        if (r.aborted) return kExitNumeric;
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Non-contrastive pulse estimation on synthetic video"};
    app.require_subcommand(1);
    Flags f;

    auto common = [&f](CLI::App* sub, bool needs_config) {
        auto* c = sub->add_option("--config", f.config, "Run config (JSON)")->envname("SINC_CONFIG");
        if (needs_config) c->check(CLI::ExistingFile);
        sub->add_option("--out", f.out, "Output directory")->envname("SINC_OUT");
        sub->add_option("--seed", f.seed, "Seed for data, init and shuffling")->envname("SINC_SEED");
        sub->add_option("--threads", f.threads, "Worker threads for ablation arms")->envname("SINC_THREADS");
    };

    auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset directory");
    common(gen, true);

    auto* trn = app.add_subcommand("train", "Train a model and write checkpoint + log");
    common(trn, true);
    trn->add_option("--dataset", f.dataset, "Dataset directory from `gen`")->envname("SINC_DATASET");

    auto* evl = app.add_subcommand("eval", "Evaluate a checkpoint; writes metrics.csv");
    common(evl, true);
    evl->add_option("--dataset", f.dataset, "Dataset directory from `gen`")->envname("SINC_DATASET");
    evl->add_option("--checkpoint", f.checkpoint, "Parameter file from `train`")->envname("SINC_CHECKPOINT");
    evl->add_option("--split", f.split, "Partition to score")->check(CLI::IsMember({"train", "val", "test"}));

    auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every gradient");
    grad->add_option("--out", f.out, "Write gradcheck.csv here")->envname("SINC_OUT");
    grad->add_option("--seed", f.seed, "Seed for the random probes")->envname("SINC_SEED");

    auto* abl = app.add_subcommand("ablate", "Run an ablation table");
    common(abl, true);
    abl->add_option("kind", f.kind, "losses | batch | augment")->required()->check(CLI::IsMember({"losses", "batch", "augment"}));
    abl->add_option("--dataset", f.dataset, "Dataset directory from `gen`")->envname("SINC_DATASET");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*gen) return cmd_gen(f);
        if (*trn) return cmd_train(f);
        if (*evl) return cmd_eval(f);
        if (*grad) return cmd_gradcheck(f);
        if (*abl) return cmd_ablate(f);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    }
    return kExitConfig;
}
