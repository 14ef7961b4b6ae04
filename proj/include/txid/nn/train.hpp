// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "txid/dataset.hpp"
#include "txid/error.hpp"
#include "txid/nn/network.hpp"

namespace txid::nn {

struct TrainConfig {
    std::size_t batch = 128;
    std::size_t epochs = 35;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double l1_lambda = 1e-5;
    std::uint64_t seed = 0;
    bool normalize_windows = false;
};

template <class T>
struct AdamState {
    Params<T> m;
    Params<T> v;
    std::uint64_t step = 0;

    static AdamState like(const Params<T>& p) {
        return {Params<T>::zeros(p.arch), Params<T>::zeros(p.arch), 0};
    }
};

/// One bias-corrected Adam update, in place.
template <class T>
void adam_step(Params<T>& params, const Params<T>& grads, AdamState<T>& state, const TrainConfig& cfg) {
    if (state.m.conv_w.size() != params.conv_w.size() || state.m.dense_w.size() != params.dense_w.size())
        state = AdamState<T>::like(params);
    ++state.step;
    const double t = static_cast<double>(state.step);
    const T b1 = static_cast<T>(cfg.beta1);
    const T b2 = static_cast<T>(cfg.beta2);
    const T bc1 = static_cast<T>(1.0 - std::pow(cfg.beta1, t));
    const T bc2 = static_cast<T>(1.0 - std::pow(cfg.beta2, t));
    const T lr = static_cast<T>(cfg.lr);
    const T eps = static_cast<T>(cfg.eps);

    auto w = params.tensors();
    auto g = grads.tensors();
    auto m = state.m.tensors();
    auto v = state.v.tensors();
    for (std::size_t k = 0; k < w.size(); ++k) {
        require(g[k].size() == w[k].size(), "adam_step: gradient shape mismatch");
        for (std::size_t i = 0; i < w[k].size(); ++i) {
            m[k][i] = b1 * m[k][i] + (T(1) - b1) * g[k][i];
            v[k][i] = b2 * v[k][i] + (T(1) - b2) * g[k][i] * g[k][i];
            const T mhat = m[k][i] / bc1;
            const T vhat = v[k][i] / bc2;
            w[k][i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_acc = 0.0;
};

struct Evaluation {
    double accuracy = 0.0;
    std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]

    std::size_t total() const {
        std::size_t n = 0;
        for (const auto& row : confusion)
            for (auto c : row) n += c;
        return n;
    }
};

/// Accuracy and confusion matrix of `params` over `indices` of `ds`.
template <class T>
Evaluation evaluate(const Params<T>& params, const Dataset& ds, const std::vector<std::size_t>& indices,
                    bool normalize_windows = false, std::size_t batch = 256) {
    const std::size_t n_classes = params.arch.n_classes();
    require(ds.window_samples == params.arch.input_length, "evaluate: window length does not match network input");
    Evaluation ev;
    ev.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
    if (indices.empty()) return ev;

    Split only;
    only.test = indices;
    auto it = batch_iter(ds, only, Part::Test, batch, 0, normalize_windows);
    Batch b;
    Cache<T> cache;
    std::vector<T> in;
    std::size_t correct = 0;
    while (it.next(b)) {
        in.assign(b.inputs.begin(), b.inputs.end());
        const Mat<T>& lp = forward(params, std::span<const T>(in), b.size, cache);
        for (std::size_t i = 0; i < b.size; ++i) {
            Eigen::Index pred = 0;
            lp.col(static_cast<Eigen::Index>(i)).maxCoeff(&pred);
            const auto truth = static_cast<std::size_t>(b.labels[i]);
            require(truth < n_classes, "evaluate: label out of range");
            ++ev.confusion[truth][static_cast<std::size_t>(pred)];
            if (static_cast<std::size_t>(pred) == truth) ++correct;
        }
    }
    ev.accuracy = static_cast<double>(correct) / static_cast<double>(indices.size());
    return ev;
}

struct TrainResult {
    Params<float> params;
    std::vector<EpochRecord> history;
};

inline std::uint64_t epoch_seed(std::uint64_t train_seed, std::size_t epoch) {
    return RandomStream(train_seed).fork("epoch").fork(static_cast<std::uint64_t>(epoch)).engine()();
}

/// Mini-batch Adam training in float32. Deterministic for fixed seeds.
/// `on_epoch`, when set, is called after every epoch.
inline TrainResult train(const Dataset& ds, const Split& split, const Architecture& arch, const TrainConfig& cfg,
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    require(!split.train.empty(), "train: empty training split");
    require(!split.val.empty(), "train: empty validation split");
    require(cfg.epochs > 0 && cfg.batch > 0, "train: epochs and batch must be positive");
    require(ds.window_samples == arch.input_length, "train: window length does not match network input");
    require(ds.n_classes() <= arch.n_classes(), "train: more emitters than network outputs");

    TrainResult r;
    r.params = init_network<float>(arch, RandomStream(cfg.seed).fork("init").engine()());
    auto state = AdamState<float>::like(r.params);
    Params<float> grads = Params<float>::zeros(arch);
    Cache<float> cache;
    Batch b;
    const auto l1 = static_cast<float>(cfg.l1_lambda);

    for (std::size_t e = 1; e <= cfg.epochs; ++e) {
        auto it = batch_iter(ds, split, Part::Train, cfg.batch, epoch_seed(cfg.seed, e), cfg.normalize_windows);
        double loss_sum = 0.0;
        std::size_t seen = 0;
        while (it.next(b)) {
            forward(r.params, std::span<const float>(b.inputs), b.size, cache);
            const float loss = backward(r.params, cache, std::span<const int>(b.labels), l1, grads);
            adam_step(r.params, grads, state, cfg);
            loss_sum += static_cast<double>(loss) * static_cast<double>(b.size);
            seen += b.size;
        }
        EpochRecord rec;
        rec.epoch = e;
        rec.train_loss = loss_sum / static_cast<double>(seen);
        rec.val_acc = evaluate(r.params, ds, split.val, cfg.normalize_windows).accuracy;
        r.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    require(r.params.all_finite(), "train: parameters diverged");
    return r;
}

} // namespace txid::nn
