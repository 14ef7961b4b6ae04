// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "txid/nn/checkpoint.hpp"
#include "txid/nn/train.hpp"

using namespace txid;
using namespace txid::nn;
namespace fs = std::filesystem;

namespace {

// Two classes of constant windows (+a or -a on both rails) plus small noise.
Dataset separable(std::size_t per_class, std::size_t window, std::uint64_t seed) {
    RandomStream rng(seed);
    Dataset ds;
    ds.window_samples = window;
    ds.manifest.n_emitters = 2;
    ds.manifest.counts = {per_class, per_class};
    for (int c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < per_class; ++i) {
            const double level = (c == 0 ? 0.5 : -0.5) * rng.uniform(0.5, 1.5);
            for (std::size_t k = 0; k < 2 * window; ++k) ds.data.push_back(static_cast<float>(level + 0.05 * rng.normal()));
            ds.labels.push_back(c);
        }
    return ds;
}

Architecture small_arch(std::size_t window, std::size_t classes) {
    Architecture a;
    a.input_length = window;
    a.conv = {{8, 3, 2}, {8, 3, 2}};
    a.dense = {16, classes};
    return a;
}

} // namespace

TEST(Adam, ZeroGradientsLeaveParamsAndDecayMoments) {
    const auto a = Architecture::tiny(3);
    auto p = init_network<double>(a, 1);
    const auto before = p;
    AdamState<double> s = AdamState<double>::like(p);
    for (auto t : s.m.tensors())
        for (auto& v : t) v = 0.0;
    s.m.dense_b[0].setConstant(0.2);
    s.v.dense_b[0].setConstant(0.0);
    const auto zero = Params<double>::zeros(a);
    TrainConfig cfg;
    adam_step(p, zero, s, cfg);
    EXPECT_EQ(s.step, 1u);
    EXPECT_NEAR(s.m.dense_b[0](0), 0.9 * 0.2, 1e-15);
    for (std::size_t i = 0; i < p.conv_w.size(); ++i) EXPECT_EQ(p.conv_w[i], before.conv_w[i]);
    for (std::size_t i = 0; i < p.dense_w.size(); ++i) EXPECT_EQ(p.dense_w[i], before.dense_w[i]);

    // with m = v = 0 as well, nothing moves at all
    auto q = init_network<double>(a, 2);
    const auto q0 = q;
    AdamState<double> fresh = AdamState<double>::like(q);
    adam_step(q, zero, fresh, cfg);
    for (std::size_t t = 0; t < q.tensors().size(); ++t)
        for (std::size_t i = 0; i < q.tensors()[t].size(); ++i) EXPECT_EQ(q.tensors()[t][i], q0.tensors()[t][i]);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    const auto a = Architecture::tiny(3);
    auto p = init_network<double>(a, 3);
    const auto p0 = p;
    auto g = Params<double>::zeros(a);
    RandomStream rng(4);
    for (auto t : g.tensors())
        for (auto& v : t) v = rng.normal();
    AdamState<double> s = AdamState<double>::like(p);
    TrainConfig cfg;
    adam_step(p, g, s, cfg);
    const auto pt = p.tensors();
    const auto p0t = p0.tensors();
    const auto gt = g.tensors();
    for (std::size_t t = 0; t < pt.size(); ++t)
        for (std::size_t i = 0; i < pt[t].size(); ++i) {
            const double delta = pt[t][i] - p0t[t][i];
            // m_hat = g, v_hat = g^2: delta = -lr g / (|g| + eps)
            EXPECT_NEAR(delta, -1e-3 * gt[t][i] / (std::abs(gt[t][i]) + 1e-8), 1e-15);
        }
}

TEST(Adam, QuadraticBowlMatchesScalarTrajectory) {
    // f(w) = |w|^2 from w = 1 on every coordinate; each coordinate follows
    // the same scalar Adam recursion, computed here independently.
    const auto a = Architecture::tiny(3);
    auto p = Params<double>::zeros(a);
    for (auto t : p.tensors())
        for (auto& v : t) v = 1.0;
    AdamState<double> s = AdamState<double>::like(p);
    TrainConfig cfg;
    cfg.lr = 0.01;
    double w = 1.0, m = 0.0, v = 0.0;  // lr 0.01: about 0.01 per step, no overshoot in 60 steps
    std::vector<double> norms;
    auto g = Params<double>::zeros(a);
    for (int step = 1; step <= 60; ++step) {
        auto gt = g.tensors();
        auto pt = p.tensors();
        for (std::size_t t = 0; t < gt.size(); ++t)
            for (std::size_t i = 0; i < gt[t].size(); ++i) gt[t][i] = 2.0 * pt[t][i];
        adam_step(p, g, s, cfg);

        const double grad = 2.0 * w;
        m = 0.9 * m + 0.1 * grad;
        v = 0.999 * v + 0.001 * grad * grad;
        const double mh = m / (1.0 - std::pow(0.9, step));
        const double vh = v / (1.0 - std::pow(0.999, step));
        w -= 0.01 * mh / (std::sqrt(vh) + 1e-8);

        double sq = 0.0;
        for (auto t : p.tensors())
            for (double x : t) {
                EXPECT_NEAR(x, w, 1e-12);
                sq += x * x;
            }
        norms.push_back(std::sqrt(sq));
    }
    EXPECT_EQ(s.step, 60u);
    for (std::size_t i = 3; i < norms.size(); ++i) EXPECT_LT(norms[i], norms[i - 1]) << "step " << i + 1;
    EXPECT_LT(norms.back(), norms.front());
}

TEST(Train, SeparableClassesReachNinetyNine) {
    const auto ds = separable(300, 32, 5);
    const auto split = split_shuffle(ds, 6);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch = 32;
    cfg.seed = 7;
    const auto r = train(ds, split, small_arch(32, 2), cfg);
    ASSERT_EQ(r.history.size(), 5u);
    EXPECT_GE(r.history.back().val_acc, 0.99);
    EXPECT_LT(r.history.front().train_loss, std::log(2.0) + 1.0);
    EXPECT_GE(evaluate(r.params, ds, split.test).accuracy, 0.99);
}

TEST(Train, DeterministicGivenSeeds) {
    const auto ds = separable(100, 16, 8);
    const auto split = split_shuffle(ds, 9);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch = 16;
    cfg.seed = 10;
    const auto a = train(ds, split, small_arch(16, 2), cfg);
    const auto b = train(ds, split, small_arch(16, 2), cfg);
    cfg.seed = 11;
    const auto c = train(ds, split, small_arch(16, 2), cfg);
    for (std::size_t t = 0; t < a.params.tensors().size(); ++t) {
        const auto x = a.params.tensors()[t], y = b.params.tensors()[t];
        EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin()));
    }
    for (std::size_t e = 0; e < a.history.size(); ++e) {
        EXPECT_EQ(a.history[e].train_loss, b.history[e].train_loss);
        EXPECT_EQ(a.history[e].val_acc, b.history[e].val_acc);
    }
    EXPECT_NE(a.params.dense_w[0], c.params.dense_w[0]);
}

TEST(Train, EmptyPartsRejected) {
    const auto ds = separable(10, 16, 12);
    Split s = split_shuffle(ds, 13);
    s.val.clear();
    TrainConfig cfg;
    cfg.epochs = 1;
    EXPECT_THROW(train(ds, s, small_arch(16, 2), cfg), Error);
    s = split_shuffle(ds, 13);
    s.train.clear();
    EXPECT_THROW(train(ds, s, small_arch(16, 2), cfg), Error);
}

TEST(Evaluate, ConfusionIdentities) {
    const auto ds = separable(50, 16, 14);
    const auto split = split_shuffle(ds, 15);
    const auto p = init_network<float>(small_arch(16, 2), 16);
    const auto ev = evaluate(p, ds, split.test);
    EXPECT_EQ(ev.total(), split.test.size());
    std::size_t trace = 0;
    for (std::size_t i = 0; i < ev.confusion.size(); ++i) trace += ev.confusion[i][i];
    EXPECT_EQ(ev.accuracy, static_cast<double>(trace) / static_cast<double>(ev.total()));
}

TEST(Evaluate, PerfectOracleOnOneClass) {
    // Output bias forces class 0 whatever the input.
    Dataset ds = separable(20, 16, 17);
    ds.labels.assign(ds.labels.size(), 0);
    ds.manifest.counts = {40, 0};
    std::vector<std::size_t> all(ds.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    auto p = Params<float>::zeros(small_arch(16, 2));
    p.dense_b.back()(0) = 5.0f;
    EXPECT_EQ(evaluate(p, ds, all).accuracy, 1.0);
}

TEST(Checkpoint, RoundTripAndFormat) {
    const auto a = Architecture::standard(8);
    const auto p = init_network<float>(a, 18);
    const auto path = fs::temp_directory_path() / "txid_ckpt_test.ckpt";
    save_checkpoint(path, p);
    const auto q = load_checkpoint(path);
    EXPECT_EQ(q.arch, a);
    for (std::size_t t = 0; t < p.tensors().size(); ++t) {
        const auto x = p.tensors()[t], y = q.tensors()[t];
        EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin()));
    }
    const std::size_t header = 8 + 4 + 4 + 4 + 4 + 5 * 12 + 4 + 6 * 4;
    EXPECT_EQ(fs::file_size(path), header + 4 * p.parameter_count());
    const auto bytes = io::read_file(path);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "TXIDCKPT");
    EXPECT_EQ(bytes[8], 1);
    // first tensor value right after the header
    EXPECT_EQ(io::get_f32_le(bytes.data() + header), p.conv_w[0].data()[0]);
    fs::remove(path);
}

TEST(Checkpoint, RejectsCorruptFiles) {
    const auto path = fs::temp_directory_path() / "txid_ckpt_bad.ckpt";
    std::ofstream(path, std::ios::binary) << "NOTACKPT....";
    EXPECT_THROW(load_checkpoint(path), Error);
    const auto p = init_network<float>(Architecture::tiny(), 1);
    save_checkpoint(path, p);
    fs::resize_file(path, fs::file_size(path) - 4);
    EXPECT_THROW(load_checkpoint(path), Error);
    fs::remove(path);
}

TEST(Checkpoint, HistoryCsv) {
    const auto path = fs::temp_directory_path() / "txid_history.csv";
    save_history_csv(path, {{1, 0.5, 0.75}, {2, 0.25, 1.0}});
    std::ifstream is(path);
    std::string all((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    EXPECT_EQ(all, "epoch,train_loss,val_acc\n1,0.5,0.75\n2,0.25,1\n");
    fs::remove(path);
}
