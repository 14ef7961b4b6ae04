// SPDX-License-Identifier: Apache-2.0
//
// Recorded payload windows on disk and in memory.
//
// On-disk layout of one dataset directory:
//   emitter_<id>.iq  little-endian float32, interleaved I,Q; windows are
//                    concatenated (600 complex samples = 4800 bytes each)
//   manifest.json    counts and generation settings
#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "txid/error.hpp"
#include "txid/framing.hpp"
#include "txid/random.hpp"
#include "txid/signal.hpp"

namespace txid {

inline constexpr std::size_t kWindowSamples = 600;

namespace io {

inline void put_f32_le(std::ostream& os, float v) {
    const auto u = std::bit_cast<std::uint32_t>(v);
    const char b[4] = {static_cast<char>(u & 0xFF), static_cast<char>((u >> 8) & 0xFF),
                       static_cast<char>((u >> 16) & 0xFF), static_cast<char>((u >> 24) & 0xFF)};
    os.write(b, 4);
}

inline float get_f32_le(const unsigned char* p) {
    const std::uint32_t u = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                            (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    return std::bit_cast<float>(u);
}

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot read " + path.string());
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

} // namespace io

inline std::string emitter_file_name(int id) { return "emitter_" + std::to_string(id) + ".iq"; }

struct Manifest {
    std::string scenario;
    std::uint64_t seed = 0;
    std::size_t n_emitters = 0;
    std::vector<std::size_t> counts;
    int env_epoch = 0;
    std::string payload_kind;
    std::string profile_file;
    std::size_t window_samples = kWindowSamples;
    std::size_t header_failed = 0;
    std::size_t no_frame = 0;
    std::size_t id_mismatches = 0;
    nlohmann::json config;

    std::size_t total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }
};

inline void to_json(nlohmann::json& j, const Manifest& m) {
    j = nlohmann::json{{"scenario", m.scenario},       {"seed", m.seed},
                       {"n_emitters", m.n_emitters},   {"counts", m.counts},
                       {"env_epoch", m.env_epoch},     {"payload_kind", m.payload_kind},
                       {"profile_file", m.profile_file}, {"window_samples", m.window_samples},
                       {"header_failed", m.header_failed}, {"no_frame", m.no_frame},
                       {"id_mismatches", m.id_mismatches}, {"config", m.config}};
}

inline void from_json(const nlohmann::json& j, Manifest& m) {
    m.scenario = j.at("scenario").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.n_emitters = j.at("n_emitters").get<std::size_t>();
    m.counts = j.at("counts").get<std::vector<std::size_t>>();
    m.env_epoch = j.at("env_epoch").get<int>();
    m.payload_kind = j.at("payload_kind").get<std::string>();
    m.profile_file = j.at("profile_file").get<std::string>();
    m.window_samples = j.value("window_samples", kWindowSamples);
    m.header_failed = j.value("header_failed", std::size_t{0});
    m.no_frame = j.value("no_frame", std::size_t{0});
    m.id_mismatches = j.value("id_mismatches", std::size_t{0});
    m.config = j.value("config", nlohmann::json::object());
}

/// Streams received packets into per-emitter files. Packets that failed
/// detection or header decoding are counted, never recorded.
class DatasetWriter {
public:
    DatasetWriter(std::filesystem::path dir, std::size_t n_emitters, std::size_t window_samples = kWindowSamples)
        : dir_(std::move(dir)), window_(window_samples), files_(n_emitters) {
        std::filesystem::create_directories(dir_);
        manifest_.n_emitters = n_emitters;
        manifest_.window_samples = window_samples;
        manifest_.counts.assign(n_emitters, 0);
        for (std::size_t i = 0; i < n_emitters; ++i) {
            files_[i].open(dir_ / emitter_file_name(static_cast<int>(i)), std::ios::binary | std::ios::trunc);
            if (!files_[i]) throw Error("cannot create " + (dir_ / emitter_file_name(static_cast<int>(i))).string());
        }
    }

    /// `scheduled_id`, when given, is the ground truth used for the label
    /// integrity count; the recorded label is always the decoded one.
    bool add(const ReceivedPacket& rx, std::optional<int> scheduled_id = std::nullopt) {
        if (rx.status == RxStatus::NoFrame) {
            ++manifest_.no_frame;
            return false;
        }
        if (rx.status == RxStatus::HeaderFailed || !rx.emitter_id_decoded) {
            ++manifest_.header_failed;
            return false;
        }
        const int id = *rx.emitter_id_decoded;
        if (scheduled_id && *scheduled_id != id) ++manifest_.id_mismatches;
        if (id < 0 || static_cast<std::size_t>(id) >= files_.size()) {
            ++manifest_.header_failed;
            return false;
        }
        add_window(id, rx.payload_window);
        return true;
    }

    void add_window(int id, const IqBuffer& window) {
        require(window.size() == window_, "window length mismatch");
        require(window.all_finite(), "non-finite sample in window");
        auto& os = files_.at(static_cast<std::size_t>(id));
        for (const auto& s : window) {
            io::put_f32_le(os, static_cast<float>(s.real()));
            io::put_f32_le(os, static_cast<float>(s.imag()));
        }
        if (!os) throw Error("write failed for emitter " + std::to_string(id));
        ++manifest_.counts[static_cast<std::size_t>(id)];
    }

    Manifest& manifest() { return manifest_; }

    /// Flushes the emitter files and writes manifest.json.
    Manifest finalize() {
        for (auto& f : files_) {
            f.flush();
            if (!f) throw Error("flush failed in " + dir_.string());
            f.close();
        }
        std::ofstream os(dir_ / "manifest.json", std::ios::binary | std::ios::trunc);
        if (!os) throw Error("cannot write manifest in " + dir_.string());
        os << nlohmann::json(manifest_).dump(2) << '\n';
        return manifest_;
    }

private:
    std::filesystem::path dir_;
    std::size_t window_;
    std::vector<std::ofstream> files_;
    Manifest manifest_;
};

/// A dataset held in memory: example i occupies floats
/// [i * 2W, (i + 1) * 2W) of `data`, interleaved I,Q.
struct Dataset {
    std::size_t window_samples = kWindowSamples;
    std::vector<float> data;
    std::vector<int> labels;
    Manifest manifest;

    std::size_t size() const { return labels.size(); }
    std::size_t example_floats() const { return 2 * window_samples; }
    std::size_t n_classes() const { return manifest.n_emitters; }
    const float* example(std::size_t i) const { return data.data() + i * example_floats(); }
};

inline Manifest read_manifest(const std::filesystem::path& dir) {
    std::ifstream is(dir / "manifest.json", std::ios::binary);
    if (!is) throw Error("no manifest.json in " + dir.string());
    return nlohmann::json::parse(is).get<Manifest>();
}

/// Loads every emitter file; fails if a file size disagrees with the manifest.
inline Dataset read_dataset(const std::filesystem::path& dir) {
    Dataset ds;
    ds.manifest = read_manifest(dir);
    ds.window_samples = ds.manifest.window_samples;
    const std::size_t bytes_per = ds.window_samples * 2 * sizeof(float);
    ds.data.reserve(ds.manifest.total() * ds.example_floats());
    ds.labels.reserve(ds.manifest.total());
    for (std::size_t id = 0; id < ds.manifest.n_emitters; ++id) {
        const auto bytes = io::read_file(dir / emitter_file_name(static_cast<int>(id)));
        const std::size_t expected = ds.manifest.counts.at(id) * bytes_per;
        if (bytes.size() != expected)
            throw Error("emitter " + std::to_string(id) + " file holds " + std::to_string(bytes.size()) +
                        " bytes, manifest says " + std::to_string(expected));
        for (std::size_t off = 0; off < bytes.size(); off += 4) ds.data.push_back(io::get_f32_le(bytes.data() + off));
        ds.labels.insert(ds.labels.end(), ds.manifest.counts[id], static_cast<int>(id));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Splits and batches

enum class Part { Train, Val, Test };

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;

    const std::vector<std::size_t>& part(Part p) const {
        switch (p) {
        case Part::Train: return train;
        case Part::Val: return val;
        case Part::Test: return test;
        }
        return test;
    }
};

struct SplitFractions {
    double train = 0.7;
    double val = 0.1;
};

/// Stratified shuffle split: each class is permuted on its own and cut
/// 70/10/20, so proportions hold per emitter up to rounding.
inline Split split_shuffle(const Dataset& ds, std::uint64_t seed, SplitFractions f = {}) {
    std::vector<std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto c = static_cast<std::size_t>(ds.labels[i]);
        if (c >= by_class.size()) by_class.resize(c + 1);
        by_class[c].push_back(i);
    }
    RandomStream rng(seed);
    Split s;
    for (auto& idx : by_class) {
        std::shuffle(idx.begin(), idx.end(), rng.engine());
        const auto n = static_cast<double>(idx.size());
        const auto n_train = static_cast<std::size_t>(std::llround(n * f.train));
        const auto n_val = std::min(idx.size() - n_train, static_cast<std::size_t>(std::llround(n * f.val)));
        s.train.insert(s.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
        s.val.insert(s.val.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train),
                     idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
        s.test.insert(s.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
    }
    return s;
}

struct Batch {
    std::size_t size = 0;
    std::vector<float> inputs;  // size x window x 2, interleaved I,Q
    std::vector<int> labels;
};

/// Mini-batches over one split part. The train part is reshuffled from
/// `epoch_seed`; validation and test parts keep split order. The last batch
/// may be short.
class BatchIterator {
public:
    BatchIterator(const Dataset& ds, const Split& split, Part part, std::size_t batch, std::uint64_t epoch_seed,
                  bool normalize_rms = false)
        : ds_(&ds), order_(split.part(part)), batch_(batch), normalize_(normalize_rms) {
        require(batch > 0, "batch size must be positive");
        if (part == Part::Train) {
            RandomStream rng(epoch_seed);
            std::shuffle(order_.begin(), order_.end(), rng.engine());
        }
    }

    std::size_t batches() const { return (order_.size() + batch_ - 1) / batch_; }

    bool next(Batch& out) {
        if (pos_ >= order_.size()) return false;
        const std::size_t n = std::min(batch_, order_.size() - pos_);
        const std::size_t ef = ds_->example_floats();
        out.size = n;
        out.inputs.resize(n * ef);
        out.labels.resize(n);
        for (std::size_t b = 0; b < n; ++b) {
            const std::size_t idx = order_[pos_ + b];
            const float* src = ds_->example(idx);
            float* dst = out.inputs.data() + b * ef;
            std::copy(src, src + ef, dst);
            if (normalize_) normalize_window(dst, ef);
            out.labels[b] = ds_->labels[idx];
        }
        pos_ += n;
        return true;
    }

    static void normalize_window(float* x, std::size_t n) {
        double e = 0.0;
        for (std::size_t i = 0; i < n; ++i) e += static_cast<double>(x[i]) * x[i];
        const double rms = std::sqrt(e / static_cast<double>(n / 2));
        if (rms > 0.0)
            for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<float>(x[i] / rms);
    }

private:
    const Dataset* ds_;
    std::vector<std::size_t> order_;
    std::size_t batch_;
    bool normalize_;
    std::size_t pos_ = 0;
};

inline BatchIterator batch_iter(const Dataset& ds, const Split& split, Part part, std::size_t batch,
                                std::uint64_t epoch_seed, bool normalize_rms = false) {
    return BatchIterator(ds, split, part, batch, epoch_seed, normalize_rms);
}

} // namespace txid
