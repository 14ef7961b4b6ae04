// SPDX-License-Identifier: Apache-2.0
//
// txid generate --config <file>
// txid train --dataset <dir> --out <ckpt> [--config <file>]
// txid evaluate --ckpt <ckpt> --dataset <dir> [--config <file>]
// txid study signal-type|env-change|cross-scenario --config <file>
// txid report <dir>
//
// Exit status: 0 on success, 1 when a PASS/FAIL criterion fails, 2 on error.

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "txid/experiment.hpp"

namespace {

using namespace txid;

void log_line(const std::string& s) { std::cerr << s << std::endl; }

void print_claims(const std::vector<Claim>& claims) {
    for (const auto& c : claims) {
        const char* tag = c.gating ? (c.holds ? "PASS" : "FAIL") : (c.holds ? "note" : "note!");
        std::cout << tag << "  " << c.study << ": " << c.text << '\n';
    }
}

ExperimentConfig config_or_default(const std::string& path) {
    return path.empty() ? ExperimentConfig{} : load_config(path);
}

int cmd_generate(const std::string& config_path, const std::string& out) {
    const ExperimentConfig cfg = load_config(config_path).effective();
    const int epoch = cfg.env_change ? 1 : 0;
    const fs::path dir = out.empty() ? fs::path(cfg.out_dir) / dataset_name(cfg, epoch) : fs::path(out);
    const Manifest m = run_generation(cfg, dir, epoch);
    std::cout << dir.string() << '\n'
              << "windows " << m.total() << ", header_failed " << m.header_failed << ", no_frame " << m.no_frame
              << ", id_mismatches " << m.id_mismatches << '\n';
    return 0;
}

int cmd_train(const std::string& dataset_dir, const std::string& out, const std::string& config_path) {
    const ExperimentConfig cfg = config_or_default(config_path).effective();
    const Dataset ds = read_dataset(dataset_dir);
    const Split split = split_shuffle(ds, split_seed(cfg));
    const auto arch = nn::Architecture::standard(ds.n_classes(), ds.window_samples);
    auto result = nn::train(ds, split, arch, cfg.train_config(), [](const nn::EpochRecord& r) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "epoch %zu loss %.4f val %.4f", r.epoch, r.train_loss, r.val_acc);
        log_line(buf);
    });
    nn::save_checkpoint(out, result.params);
    fs::path hist = out;
    hist.replace_extension(".history.csv");
    nn::save_history_csv(hist, result.history);
    const auto ev = nn::evaluate(result.params, ds, split.test, cfg.normalize_windows);
    std::printf("test accuracy %.4f (%zu examples)\n", ev.accuracy, split.test.size());
    return 0;
}

int cmd_evaluate(const std::string& ckpt, const std::string& dataset_dir, const std::string& config_path,
                 bool whole) {
    const ExperimentConfig cfg = config_or_default(config_path).effective();
    const auto params = nn::load_checkpoint(ckpt);
    const Dataset ds = read_dataset(dataset_dir);
    std::vector<std::size_t> idx;
    if (whole) {
        idx.resize(ds.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    } else {
        idx = split_shuffle(ds, split_seed(cfg)).test;
    }
    const auto ev = nn::evaluate(params, ds, idx, cfg.normalize_windows);
    std::printf("accuracy %.4f (%zu examples)\nconfusion (rows = true emitter):\n", ev.accuracy, idx.size());
    for (const auto& row : ev.confusion) {
        for (auto v : row) std::printf(" %6zu", v);
        std::printf("\n");
    }
    return 0;
}

int cmd_study(const std::string& name, const std::string& config_path) {
    Runner runner(load_config(config_path), log_line);
    const auto table = runner.run_study(name);
    const auto claims = runner.write(table);
    for (const auto& r : table.rows) std::cout << format_row(r) << '\n';
    print_claims(claims);
    return all_gating_pass(claims) ? 0 : 1;
}

int cmd_report(const std::string& dir) {
    const auto claims = emit_report(dir);
    std::cout << (fs::path(dir) / "summary.md").string() << '\n';
    print_claims(claims);
    return all_gating_pass(claims) ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Transmitter identification simulation"};
    app.require_subcommand(1);

    std::string config, out, dataset, ckpt, study, report_dir;
    bool whole = false;

    auto* gen = app.add_subcommand("generate", "Generate one dataset from a config");
    gen->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    gen->add_option("--out", out, "Output directory (default: <out_dir>/<dataset name>)");

    auto* tr = app.add_subcommand("train", "Train the network on a dataset");
    tr->add_option("--dataset", dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    tr->add_option("--out", out, "Checkpoint path")->required();
    tr->add_option("--config", config, "Experiment config for training settings")->check(CLI::ExistingFile);

    auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset's test split");
    ev->add_option("--ckpt", ckpt, "Checkpoint path")->required()->check(CLI::ExistingFile);
    ev->add_option("--dataset", dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    ev->add_option("--config", config, "Experiment config for split seed")->check(CLI::ExistingFile);
    ev->add_flag("--all", whole, "Evaluate on every example instead of the test split");

    auto* st = app.add_subcommand("study", "Run a study");
    st->add_option("name", study, "signal-type | env-change | cross-scenario")
        ->required()
        ->check(CLI::IsMember({"signal-type", "env-change", "cross-scenario"}));
    st->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);

    auto* rep = app.add_subcommand("report", "Rebuild summary.md from study CSVs");
    rep->add_option("dir", report_dir, "Study output directory")->required()->check(CLI::ExistingDirectory);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) return cmd_generate(config, out);
        if (*tr) return cmd_train(dataset, out, config);
        if (*ev) return cmd_evaluate(ckpt, dataset, config, whole);
        if (*st) return cmd_study(study, config);
        if (*rep) return cmd_report(report_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 2;
}
