// SPDX-License-Identifier: Apache-2.0
//
// End-to-end orchestration: dataset generation from a config, cached
// training, the three studies and their report.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "txid/channel.hpp"
#include "txid/dataset.hpp"
#include "txid/error.hpp"
#include "txid/framing.hpp"
#include "txid/impairments.hpp"
#include "txid/nn/checkpoint.hpp"
#include "txid/nn/network.hpp"
#include "txid/nn/train.hpp"
#include "txid/random.hpp"
#include "txid/signal.hpp"

namespace txid {

namespace fs = std::filesystem;

struct Seeds {
    std::uint64_t profile = 1;
    std::uint64_t channel = 2;
    std::uint64_t schedule = 3;
    std::uint64_t noise = 4;
    std::uint64_t train = 5;

    friend bool operator==(const Seeds&, const Seeds&) = default;
};

struct ExperimentConfig {
    std::size_t n_emitters = 8;
    std::size_t packets_per_emitter = 2000;
    PayloadKind payload_kind = PayloadKind::Static;
    Scenario scenario = Scenario::Plain;
    double snr_db = 20.0;
    double amplitude_min = 0.2;
    double amplitude_max = 1.0;
    Seeds seeds;
    bool env_change = false;

    std::size_t epochs = 10;
    std::size_t batch = 128;
    double lr = 1e-3;
    double l1_lambda = 1e-5;
    std::size_t study_seeds = 3;
    bool calibrated = true;
    bool normalize_windows = false;
    bool full_scale = false;
    std::string out_dir = "txid-out";

    void validate() const {
        require(n_emitters >= 2 && n_emitters <= 256, "n_emitters must be in [2, 256]");
        require(packets_per_emitter > 0, "packets_per_emitter must be positive");
        require(epochs > 0 && batch > 0, "epochs and batch must be positive");
        require(study_seeds > 0, "study_seeds must be positive");
        require(lr > 0.0 && l1_lambda >= 0.0, "lr must be positive and l1_lambda non-negative");
        scenario_config().validate();
    }

    /// Applies the full-scale flag: 21 emitters, 50000 packets, 35 epochs.
    ExperimentConfig effective() const {
        ExperimentConfig c = *this;
        if (full_scale) {
            c.n_emitters = 21;
            c.packets_per_emitter = 50000;
            c.epochs = 35;
        }
        return c;
    }

    ScenarioConfig scenario_config() const {
        return ScenarioConfig{scenario, amplitude_min, amplitude_max, snr_db, seeds.channel};
    }

    nn::TrainConfig train_config() const {
        nn::TrainConfig t;
        t.batch = batch;
        t.epochs = epochs;
        t.lr = lr;
        t.l1_lambda = l1_lambda;
        t.seed = seeds.train;
        t.normalize_windows = normalize_windows;
        return t;
    }
};

inline void to_json(nlohmann::json& j, const Seeds& s) {
    j = nlohmann::json{{"profile", s.profile},
                       {"channel", s.channel},
                       {"schedule", s.schedule},
                       {"noise", s.noise},
                       {"train", s.train}};
}

inline void from_json(const nlohmann::json& j, Seeds& s) {
    s.profile = j.at("profile").get<std::uint64_t>();
    s.channel = j.at("channel").get<std::uint64_t>();
    s.schedule = j.at("schedule").get<std::uint64_t>();
    s.noise = j.at("noise").get<std::uint64_t>();
    s.train = j.at("train").get<std::uint64_t>();
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    j = nlohmann::json{{"n_emitters", c.n_emitters},
                       {"packets_per_emitter", c.packets_per_emitter},
                       {"payload_kind", std::string(to_string(c.payload_kind))},
                       {"scenario", std::string(to_string(c.scenario))},
                       {"snr_db", c.snr_db},
                       {"amplitude_range", {c.amplitude_min, c.amplitude_max}},
                       {"seeds", c.seeds},
                       {"env_change", c.env_change},
                       {"epochs", c.epochs},
                       {"batch", c.batch},
                       {"lr", c.lr},
                       {"l1_lambda", c.l1_lambda},
                       {"study_seeds", c.study_seeds},
                       {"calibrated", c.calibrated},
                       {"normalize_windows", c.normalize_windows},
                       {"full_scale", c.full_scale},
                       {"out_dir", c.out_dir}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    static const std::vector<std::string> known = {
        "n_emitters", "packets_per_emitter", "payload_kind", "scenario",   "snr_db",
        "amplitude_range", "seeds",          "env_change",   "epochs",     "batch",
        "lr",         "l1_lambda",           "study_seeds",  "calibrated", "normalize_windows",
        "full_scale", "out_dir"};
    require(j.is_object(), "experiment config must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw Error("unknown config key '" + key + "'");
    c.n_emitters = j.value("n_emitters", c.n_emitters);
    c.packets_per_emitter = j.value("packets_per_emitter", c.packets_per_emitter);
    if (j.contains("payload_kind")) c.payload_kind = parse_payload_kind(j["payload_kind"].get<std::string>());
    if (j.contains("scenario")) c.scenario = parse_scenario(j["scenario"].get<std::string>());
    c.snr_db = j.value("snr_db", c.snr_db);
    if (j.contains("amplitude_range")) {
        const auto r = j["amplitude_range"].get<std::vector<double>>();
        require(r.size() == 2, "amplitude_range must be [min, max]");
        c.amplitude_min = r[0];
        c.amplitude_max = r[1];
    }
    if (j.contains("seeds")) c.seeds = j["seeds"].get<Seeds>();
    c.env_change = j.value("env_change", c.env_change);
    c.epochs = j.value("epochs", c.epochs);
    c.batch = j.value("batch", c.batch);
    c.lr = j.value("lr", c.lr);
    c.l1_lambda = j.value("l1_lambda", c.l1_lambda);
    c.study_seeds = j.value("study_seeds", c.study_seeds);
    c.calibrated = j.value("calibrated", c.calibrated);
    c.normalize_windows = j.value("normalize_windows", c.normalize_windows);
    c.full_scale = j.value("full_scale", c.full_scale);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.validate();
}

inline ExperimentConfig load_config(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open config " + path.string());
    return nlohmann::json::parse(is).get<ExperimentConfig>();
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Everything that determines the bytes of a generated dataset.
inline nlohmann::json generation_key(const ExperimentConfig& c, int env_epoch) {
    return nlohmann::json{{"n_emitters", c.n_emitters},
                          {"packets_per_emitter", c.packets_per_emitter},
                          {"payload_kind", std::string(to_string(c.payload_kind))},
                          {"scenario", std::string(to_string(c.scenario))},
                          {"snr_db", c.snr_db},
                          {"amplitude_range", {c.amplitude_min, c.amplitude_max}},
                          {"seeds",
                           {{"profile", c.seeds.profile},
                            {"channel", c.seeds.channel},
                            {"schedule", c.seeds.schedule},
                            {"noise", c.seeds.noise}}},
                          {"calibrated", c.calibrated},
                          {"env_epoch", env_epoch}};
}

inline std::string dataset_name(const ExperimentConfig& c, int env_epoch) {
    return std::string(to_string(c.scenario)) + "-" + std::string(to_string(c.payload_kind)) + "-e" +
           std::to_string(env_epoch) + "-" + hex64(fnv1a(generation_key(c, env_epoch).dump()));
}

/// Config of study replicate `r`. Replicate 0 is the config itself; others
/// derive every seed from it.
inline ExperimentConfig replicate(const ExperimentConfig& c, std::size_t r) {
    if (r == 0) return c;
    ExperimentConfig out = c;
    auto derive = [r](std::uint64_t s) { return RandomStream(s).fork("replicate").fork(r).engine()(); };
    out.seeds.profile = derive(c.seeds.profile);
    out.seeds.channel = derive(c.seeds.channel);
    out.seeds.schedule = derive(c.seeds.schedule);
    out.seeds.noise = derive(c.seeds.noise);
    out.seeds.train = derive(c.seeds.train);
    return out;
}

inline std::uint64_t split_seed(const ExperimentConfig& c) {
    return RandomStream(c.seeds.train).fork("split").engine()();
}

/// Profiles shared by every scenario and payload of one config.
inline std::vector<EmitterProfile> experiment_profiles(const ExperimentConfig& c) {
    RandomStream rng(c.seeds.profile);
    return sample_profiles(c.n_emitters, c.calibrated, rng);
}

/// Links at environment epoch `env_epoch`. Each epoch's change is drawn from
/// its own stream, identical for all links.
inline std::vector<ChannelState> experiment_links(const ExperimentConfig& c,
                                                  const std::vector<EmitterProfile>& profiles, int env_epoch) {
    RandomStream rng(c.seeds.channel);
    auto links = make_links(profiles, c.scenario_config(), rng);
    for (int e = 1; e <= env_epoch; ++e) {
        const RandomStream change = RandomStream(c.seeds.channel).fork("environment").fork(static_cast<std::uint64_t>(e));
        for (auto& l : links) l = perturb_environment(l, change);
    }
    return links;
}

inline double recording_duration_s(const ExperimentConfig& c) {
    return static_cast<double>(c.packets_per_emitter * c.n_emitters) * kSchedulerPeriodS;
}

/// Runs schedule -> transmit -> receive -> record into `dir`. Datasets of
/// later environment epochs are recorded after the earlier ones on the
/// experiment clock.
inline Manifest run_generation(const ExperimentConfig& cfg, const fs::path& dir, int env_epoch = 0) {
    cfg.validate();
    require(env_epoch >= 0, "env_epoch must be non-negative");
    fs::create_directories(dir);
    const auto profiles = experiment_profiles(cfg);
    save_profiles(dir / "profiles.json", profiles);
    auto links = experiment_links(cfg, profiles, env_epoch);
    const ScenarioConfig sc = cfg.scenario_config();
    const FrameLayout layout;
    const IqBuffer preamble = make_preamble(layout.preamble);

    const double duration = recording_duration_s(cfg);
    RandomStream sched_rng = RandomStream(cfg.seeds.schedule).fork(static_cast<std::uint64_t>(env_epoch));
    const auto events = schedule(cfg.n_emitters, duration, sched_rng, duration * env_epoch);
    const RandomStream noise = RandomStream(cfg.seeds.noise).fork(static_cast<std::uint64_t>(env_epoch));

    DatasetWriter writer(dir, cfg.n_emitters, layout.window_samples());
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& ev = events[i];
        const auto id = static_cast<std::size_t>(ev.emitter_id);
        RandomStream packet_rng = noise.fork(static_cast<std::uint64_t>(i));
        auto [air, next] = transmit_packet(ev, profiles[id], links[id], sc, cfg.payload_kind, packet_rng, layout);
        links[id] = std::move(next);
        writer.add(receive_packet(air, preamble, layout, ev.time_s), ev.emitter_id);
    }
    auto& m = writer.manifest();
    m.scenario = std::string(to_string(cfg.scenario));
    m.seed = cfg.seeds.noise;
    m.env_epoch = env_epoch;
    m.payload_kind = std::string(to_string(cfg.payload_kind));
    m.profile_file = "profiles.json";
    m.config = generation_key(cfg, env_epoch);
    return writer.finalize();
}

// ---------------------------------------------------------------------------
// Results

struct ResultRow {
    std::string train_scenario;
    std::string test;  // test scenario, or "own" / "env<k>"
    std::string payload_kind;
    double accuracy = 0.0;
    std::size_t n_test = 0;
};

struct ResultTable {
    std::string study;
    std::vector<ResultRow> rows;  // means over replicates
    std::vector<std::pair<std::size_t, ResultRow>> per_replicate;

    const ResultRow* find(std::string_view train, std::string_view test, std::string_view payload) const {
        for (const auto& r : rows)
            if (r.train_scenario == train && r.test == test && r.payload_kind == payload) return &r;
        return nullptr;
    }
};

inline std::string format_row(const ResultRow& r) {
    char acc[32];
    std::snprintf(acc, sizeof acc, "%.6f", r.accuracy);
    return r.train_scenario + "," + r.test + "," + r.payload_kind + "," + acc + "," + std::to_string(r.n_test);
}

inline void write_table_csv(const fs::path& path, const ResultTable& t) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write " + path.string());
    os << "train_scenario,test,payload_kind,accuracy,n_test\n";
    for (const auto& r : t.rows) os << format_row(r) << '\n';
}

inline void write_replicates_csv(const fs::path& path, const ResultTable& t) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write " + path.string());
    os << "replicate,train_scenario,test,payload_kind,accuracy,n_test\n";
    for (const auto& [rep, r] : t.per_replicate) os << rep << ',' << format_row(r) << '\n';
}

inline ResultTable read_table_csv(const fs::path& path, std::string study) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot read " + path.string());
    ResultTable t;
    t.study = std::move(study);
    std::string line;
    std::getline(is, line);
    require(line == "train_scenario,test,payload_kind,accuracy,n_test", "unexpected header in " + path.string());
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
        require(f.size() == 5, "malformed row in " + path.string());
        ResultRow r{f[0], f[1], f[2], std::stod(f[3]), static_cast<std::size_t>(std::stoull(f[4]))};
        require(r.accuracy >= 0.0 && r.accuracy <= 1.0, "accuracy outside [0, 1] in " + path.string());
        t.rows.push_back(std::move(r));
    }
    return t;
}

/// Averages replicate rows that share (train, test, payload), keeping the
/// first-seen order.
inline std::vector<ResultRow> mean_rows(const std::vector<std::pair<std::size_t, ResultRow>>& reps) {
    std::vector<ResultRow> out;
    std::vector<std::size_t> count;
    for (const auto& [_, r] : reps) {
        auto it = std::find_if(out.begin(), out.end(), [&](const ResultRow& o) {
            return o.train_scenario == r.train_scenario && o.test == r.test && o.payload_kind == r.payload_kind;
        });
        if (it == out.end()) {
            out.push_back(r);
            count.push_back(1);
        } else {
            it->accuracy += r.accuracy;
            it->n_test += r.n_test;
            ++count[static_cast<std::size_t>(it - out.begin())];
        }
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i].accuracy /= static_cast<double>(count[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Claims

struct Claim {
    std::string study;
    std::string text;
    bool holds = false;
    bool gating = true;  // acceptance ordering; others are reported only
};

inline std::string pts(double acc) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * acc);
    return buf;
}

inline std::vector<Claim> evaluate_claims(const ResultTable& t) {
    std::vector<Claim> out;
    auto acc = [&](std::string_view train, std::string_view test, std::string_view payload) -> std::optional<double> {
        const auto* r = t.find(train, test, payload);
        return r ? std::optional<double>(r->accuracy) : std::nullopt;
    };
    auto missing = [&](std::string what) { out.push_back({t.study, "missing rows for " + what, false, true}); };

    if (t.study == "signal-type") {
        for (std::string sc : {"plain", "varying"}) {
            const auto s = acc(sc, sc, "static"), r = acc(sc, sc, "random"), n = acc(sc, sc, "noise");
            if (!s || !r || !n) {
                missing(sc);
                continue;
            }
            out.push_back({t.study, sc + ": static >= random - 2 pts (static " + pts(*s) + ", random " + pts(*r) + ")",
                           *s >= *r - 0.02});
            out.push_back({t.study,
                           sc + ": |random - noise| <= 5 pts (random " + pts(*r) + ", noise " + pts(*n) + ")",
                           std::abs(*r - *n) <= 0.05});
        }
    } else if (t.study == "env-change") {
        std::map<std::string, double> drop, own;
        for (std::string sc : {"plain", "varying", "robot"}) {
            const auto a = acc(sc, "own", "static"), b = acc(sc, "env1", "static");
            if (!a || !b) {
                missing(sc);
                return out;
            }
            own[sc] = *a;
            drop[sc] = *a - *b;
        }
        out.push_back({t.study,
                       "drop(plain) > drop(varying) (" + pts(drop["plain"]) + " vs " + pts(drop["varying"]) + " pts)",
                       drop["plain"] > drop["varying"]});
        out.push_back({t.study,
                       "drop(varying) > drop(robot) - 2 pts (" + pts(drop["varying"]) + " vs " + pts(drop["robot"]) +
                           " pts)",
                       drop["varying"] > drop["robot"] - 0.02});
        out.push_back({t.study,
                       "drop(plain) > drop(robot) (" + pts(drop["plain"]) + " vs " + pts(drop["robot"]) + " pts)",
                       drop["plain"] > drop["robot"], false});
        out.push_back({t.study,
                       "own-test accuracy robot <= plain (" + pts(own["robot"]) + " vs " + pts(own["plain"]) + ")",
                       own["robot"] <= own["plain"], false});
    } else if (t.study == "cross-scenario") {
        const std::vector<std::string> scs = {"plain", "varying", "robot"};
        std::map<std::string, double> worst;
        for (const auto& tr : scs) {
            double diag = 0.0, w = 1.0;
            for (const auto& te : scs) {
                const auto a = acc(tr, te, "static");
                if (!a) {
                    missing(tr + "->" + te);
                    return out;
                }
                if (te == tr)
                    diag = *a;
                else
                    w = std::min(w, *a);
            }
            worst[tr] = w;
            out.push_back({t.study,
                           tr + "-trained: own scenario >= every other (" + pts(diag) + " vs worst " + pts(w) + ")",
                           diag >= w, false});
        }
        out.push_back({t.study,
                       "robot-trained worst cross-test >= plain-trained worst + 2 pts (" + pts(worst["robot"]) +
                           " vs " + pts(worst["plain"]) + ")",
                       worst["robot"] >= worst["plain"] + 0.02});
    }
    return out;
}

inline const std::vector<std::string>& study_names() {
    static const std::vector<std::string> names = {"signal-type", "env-change", "cross-scenario"};
    return names;
}

inline std::string csv_stem(std::string_view study) {
    std::string s(study);
    std::replace(s.begin(), s.end(), '-', '_');
    return s;
}

/// Writes summary.md from every study CSV present in `dir`; returns the
/// claims in study order.
inline std::vector<Claim> emit_report(const fs::path& dir) {
    std::vector<Claim> claims;
    std::ostringstream md;
    md << "# Study summary\n";
    for (const auto& study : study_names()) {
        const fs::path csv = dir / (csv_stem(study) + ".csv");
        if (!fs::exists(csv)) continue;
        const ResultTable t = read_table_csv(csv, study);
        md << "\n## " << study << "\n\n| train | test | payload | accuracy % | n_test |\n|---|---|---|---|---|\n";
        for (const auto& r : t.rows)
            md << "| " << r.train_scenario << " | " << r.test << " | " << r.payload_kind << " | " << pts(r.accuracy)
               << " | " << r.n_test << " |\n";
        md << '\n';
        for (const auto& c : evaluate_claims(t)) {
            md << "- " << (c.gating ? (c.holds ? "PASS " : "FAIL ") : (c.holds ? "note (holds) " : "note (does not hold) "))
               << c.text << '\n';
            claims.push_back(c);
        }
    }
    std::ofstream os(dir / "summary.md", std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write summary in " + dir.string());
    os << md.str();
    return claims;
}

inline bool all_gating_pass(const std::vector<Claim>& claims) {
    return std::all_of(claims.begin(), claims.end(), [](const Claim& c) { return !c.gating || c.holds; });
}

// ---------------------------------------------------------------------------
// Runner with dataset and model caches under out_dir

class Runner {
public:
    using Log = std::function<void(const std::string&)>;

    explicit Runner(ExperimentConfig cfg, Log log = {}) : cfg_(cfg.effective()), log_(std::move(log)) {
        cfg_.validate();
        root_ = cfg_.out_dir;
    }

    const ExperimentConfig& config() const { return cfg_; }
    const fs::path& root() const { return root_; }

    /// Dataset directory for `c` at `env_epoch`, generated on first use.
    fs::path dataset(const ExperimentConfig& c, int env_epoch = 0) {
        const fs::path dir = root_ / "datasets" / dataset_name(c, env_epoch);
        if (fs::exists(dir / "manifest.json")) return dir;
        const fs::path tmp = dir.string() + ".partial";
        fs::remove_all(tmp);
        say("generate " + dir.filename().string());
        const Manifest m = run_generation(c, tmp, env_epoch);
        say("  " + std::to_string(m.total()) + " windows, header_failed " + std::to_string(m.header_failed) +
            ", no_frame " + std::to_string(m.no_frame) + ", id_mismatches " + std::to_string(m.id_mismatches));
        fs::rename(tmp, dir);
        return dir;
    }

    /// Model directory (model.ckpt, history.csv) trained on `dataset_dir`.
    fs::path model(const ExperimentConfig& c, const fs::path& dataset_dir) {
        const auto tc = c.train_config();
        const nlohmann::json key = {{"dataset", dataset_dir.filename().string()},
                                    {"epochs", tc.epochs},
                                    {"batch", tc.batch},
                                    {"lr", tc.lr},
                                    {"l1_lambda", tc.l1_lambda},
                                    {"seed", tc.seed},
                                    {"split_seed", split_seed(c)},
                                    {"normalize_windows", tc.normalize_windows}};
        const fs::path dir = root_ / "models" / (dataset_dir.filename().string() + "-t" + hex64(fnv1a(key.dump())));
        if (fs::exists(dir / "model.ckpt")) return dir;
        const Dataset& ds = load(dataset_dir);
        const Split split = split_shuffle(ds, split_seed(c));
        say("train " + dir.filename().string());
        const auto arch = nn::Architecture::standard(c.n_emitters, ds.window_samples);
        auto result = nn::train(ds, split, arch, tc, [&](const nn::EpochRecord& r) {
            char buf[96];
            std::snprintf(buf, sizeof buf, "  epoch %zu loss %.4f val %.4f", r.epoch, r.train_loss, r.val_acc);
            say(buf);
        });
        const fs::path tmp = dir.string() + ".partial";
        fs::remove_all(tmp);
        fs::create_directories(tmp);
        nn::save_checkpoint(tmp / "model.ckpt", result.params);
        nn::save_history_csv(tmp / "history.csv", result.history);
        fs::rename(tmp, dir);
        return dir;
    }

    /// Accuracy of the model in `model_dir` on the test split of `dataset_dir`.
    ResultRow test(const ExperimentConfig& c, const fs::path& model_dir, const fs::path& dataset_dir) {
        const auto params = nn::load_checkpoint(model_dir / "model.ckpt");
        const Dataset& ds = load(dataset_dir);
        const Split split = split_shuffle(ds, split_seed(c));
        const auto ev = nn::evaluate(params, ds, split.test, c.normalize_windows);
        ResultRow r;
        r.accuracy = ev.accuracy;
        r.n_test = split.test.size();
        return r;
    }

    ResultTable signal_type() {
        ResultTable t{"signal-type", {}, {}};
        for (std::size_t rep = 0; rep < cfg_.study_seeds; ++rep)
            for (Scenario sc : {Scenario::Plain, Scenario::VaryingAmplitude})
                for (PayloadKind pk : {PayloadKind::Static, PayloadKind::RandomBits, PayloadKind::Noise}) {
                    ExperimentConfig c = cell(rep, sc, pk);
                    const auto ds = dataset(c);
                    ResultRow r = test(c, model(c, ds), ds);
                    r.train_scenario = r.test = std::string(to_string(sc));
                    r.payload_kind = std::string(to_string(pk));
                    t.per_replicate.emplace_back(rep, r);
                }
        t.rows = mean_rows(t.per_replicate);
        return t;
    }

    ResultTable env_change() {
        ResultTable t{"env-change", {}, {}};
        for (std::size_t rep = 0; rep < cfg_.study_seeds; ++rep)
            for (Scenario sc : {Scenario::Plain, Scenario::VaryingAmplitude, Scenario::Robot}) {
                ExperimentConfig c = cell(rep, sc, PayloadKind::Static);
                const auto ds = dataset(c);
                const auto m = model(c, ds);
                for (int epoch : {0, 1}) {
                    ResultRow r = test(c, m, epoch == 0 ? ds : dataset(c, epoch));
                    r.train_scenario = std::string(to_string(sc));
                    r.test = epoch == 0 ? "own" : "env1";
                    r.payload_kind = "static";
                    t.per_replicate.emplace_back(rep, r);
                }
            }
        t.rows = mean_rows(t.per_replicate);
        return t;
    }

    ResultTable cross_scenario() {
        ResultTable t{"cross-scenario", {}, {}};
        const std::vector<Scenario> scs = {Scenario::Plain, Scenario::VaryingAmplitude, Scenario::Robot};
        for (std::size_t rep = 0; rep < cfg_.study_seeds; ++rep) {
            std::vector<fs::path> data;
            for (Scenario sc : scs) data.push_back(dataset(cell(rep, sc, PayloadKind::Static)));
            for (std::size_t i = 0; i < scs.size(); ++i) {
                ExperimentConfig c = cell(rep, scs[i], PayloadKind::Static);
                const auto m = model(c, data[i]);
                for (std::size_t j = 0; j < scs.size(); ++j) {
                    ResultRow r = test(cell(rep, scs[j], PayloadKind::Static), m, data[j]);
                    r.train_scenario = std::string(to_string(scs[i]));
                    r.test = std::string(to_string(scs[j]));
                    r.payload_kind = "static";
                    t.per_replicate.emplace_back(rep, r);
                }
            }
        }
        t.rows = mean_rows(t.per_replicate);
        return t;
    }

    ResultTable run_study(std::string_view name) {
        if (name == "signal-type") return signal_type();
        if (name == "env-change") return env_change();
        if (name == "cross-scenario") return cross_scenario();
        throw Error("unknown study '" + std::string(name) + "'");
    }

    /// Writes the study CSVs into out_dir and refreshes summary.md.
    std::vector<Claim> write(const ResultTable& t) {
        fs::create_directories(root_);
        write_table_csv(root_ / (csv_stem(t.study) + ".csv"), t);
        write_replicates_csv(root_ / (csv_stem(t.study) + "_replicates.csv"), t);
        const auto all = emit_report(root_);
        std::vector<Claim> mine;
        for (const auto& c : all)
            if (c.study == t.study) mine.push_back(c);
        return mine;
    }

private:
    ExperimentConfig cell(std::size_t rep, Scenario sc, PayloadKind pk) const {
        ExperimentConfig c = replicate(cfg_, rep);
        c.scenario = sc;
        c.payload_kind = pk;
        return c;
    }

    const Dataset& load(const fs::path& dir) {
        if (loaded_dir_ != dir) {
            loaded_ = read_dataset(dir);
            loaded_dir_ = dir;
        }
        return loaded_;
    }

    void say(const std::string& s) const {
        if (log_) log_(s);
    }

    ExperimentConfig cfg_;
    Log log_;
    fs::path root_;
    fs::path loaded_dir_;
    Dataset loaded_;
};

} // namespace txid
