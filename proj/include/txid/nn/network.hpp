// SPDX-License-Identifier: Apache-2.0
//
// 1-D convolutional classifier over raw IQ windows.
//
//   input  B x L x 2 (I/Q as two channels)
//   conv   same padding, stride 1, ELU, max-pool     (repeated)
//   flatten
//   dense  ELU                                        (repeated)
//   dense  softmax
//
// Activations are kept as column-major (channels x B*L) matrices: column
// b*L + t holds every channel of sample t of example b. With that layout the
// interleaved input buffer, the flattened conv output and the dense input
// are all plain reinterpretations of the same memory.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "txid/error.hpp"
#include "txid/random.hpp"

namespace txid::nn {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

struct ConvSpec {
    std::size_t channels = 0;
    std::size_t kernel = 0;
    std::size_t pool = 2;

    friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

struct Architecture {
    std::size_t input_length = 600;
    std::size_t input_channels = 2;
    std::vector<ConvSpec> conv;
    std::vector<std::size_t> dense;  // last entry is the class count

    /// Five conv + six dense layers, sized to train on a CPU.
    static Architecture standard(std::size_t n_classes, std::size_t input_length = 600) {
        Architecture a;
        a.input_length = input_length;
        a.conv = {{64, 7, 2}, {64, 5, 2}, {128, 5, 2}, {128, 3, 2}, {128, 3, 2}};
        a.dense = {256, 128, 128, 64, 32, n_classes};
        return a;
    }

    /// Small enough for finite-difference checks over every parameter.
    static Architecture tiny(std::size_t n_classes = 3) {
        Architecture a;
        a.input_length = 12;
        a.conv = {{4, 3, 2}, {3, 2, 2}};
        a.dense = {5, n_classes};
        return a;
    }

    std::size_t n_classes() const { return dense.empty() ? 0 : dense.back(); }

    /// Sequence length entering conv layer i; entry conv.size() is the length
    /// after the last pooling.
    std::vector<std::size_t> lengths() const {
        std::vector<std::size_t> l{input_length};
        for (const auto& c : conv) l.push_back(l.back() / c.pool);
        return l;
    }

    std::size_t conv_out_channels(std::size_t i) const { return i == 0 ? input_channels : conv[i - 1].channels; }

    std::size_t flat_features() const {
        return lengths().back() * (conv.empty() ? input_channels : conv.back().channels);
    }

    void validate() const {
        require(input_length > 0 && input_channels > 0, "architecture: empty input");
        require(!dense.empty() && n_classes() >= 2, "architecture: need a dense output with >= 2 classes");
        for (const auto& c : conv) require(c.channels > 0 && c.kernel > 0 && c.pool > 0, "architecture: bad conv spec");
        require(flat_features() > 0, "architecture: sequence pooled away");
    }

    friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// All weights and biases. Conv weight i is (out x kernel*in) with column
/// j*in + c multiplying input channel c at kernel tap j; dense weights are
/// (out x in).
template <class T>
struct Params {
    Architecture arch;
    std::vector<Mat<T>> conv_w;
    std::vector<Vec<T>> conv_b;
    std::vector<Mat<T>> dense_w;
    std::vector<Vec<T>> dense_b;

    /// Zero-filled tensors shaped for `a`.
    static Params zeros(const Architecture& a) {
        a.validate();
        Params p;
        p.arch = a;
        std::size_t in = a.input_channels;
        for (const auto& c : a.conv) {
            p.conv_w.push_back(Mat<T>::Zero(static_cast<Eigen::Index>(c.channels), static_cast<Eigen::Index>(c.kernel * in)));
            p.conv_b.push_back(Vec<T>::Zero(static_cast<Eigen::Index>(c.channels)));
            in = c.channels;
        }
        std::size_t features = a.flat_features();
        for (std::size_t width : a.dense) {
            p.dense_w.push_back(Mat<T>::Zero(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(features)));
            p.dense_b.push_back(Vec<T>::Zero(static_cast<Eigen::Index>(width)));
            features = width;
        }
        return p;
    }

    /// Every tensor in declaration order: conv (w, b) per layer, then dense
    /// (w, b) per layer.
    std::vector<std::span<T>> tensors() {
        std::vector<std::span<T>> out;
        for (std::size_t i = 0; i < conv_w.size(); ++i) {
            out.emplace_back(conv_w[i].data(), static_cast<std::size_t>(conv_w[i].size()));
            out.emplace_back(conv_b[i].data(), static_cast<std::size_t>(conv_b[i].size()));
        }
        for (std::size_t i = 0; i < dense_w.size(); ++i) {
            out.emplace_back(dense_w[i].data(), static_cast<std::size_t>(dense_w[i].size()));
            out.emplace_back(dense_b[i].data(), static_cast<std::size_t>(dense_b[i].size()));
        }
        return out;
    }

    std::vector<std::span<const T>> tensors() const {
        auto spans = const_cast<Params*>(this)->tensors();
        return {spans.begin(), spans.end()};
    }

    /// True for tensor indices (in `tensors()` order) that hold dense weights.
    bool is_dense_weight(std::size_t tensor_index) const {
        const std::size_t first_dense = 2 * conv_w.size();
        return tensor_index >= first_dense && (tensor_index - first_dense) % 2 == 0;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (auto t : tensors()) n += t.size();
        return n;
    }

    template <class U>
    Params<U> cast() const {
        Params<U> p;
        p.arch = arch;
        for (const auto& m : conv_w) p.conv_w.push_back(m.template cast<U>());
        for (const auto& v : conv_b) p.conv_b.push_back(v.template cast<U>());
        for (const auto& m : dense_w) p.dense_w.push_back(m.template cast<U>());
        for (const auto& v : dense_b) p.dense_b.push_back(v.template cast<U>());
        return p;
    }

    bool all_finite() const {
        for (auto t : tensors())
            for (T v : t)
                if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }
};

/// Uniform weights in +/- sqrt(6 / fan_in), zero biases.
template <class T>
Params<T> init_network(const Architecture& arch, std::uint64_t seed) {
    Params<T> p = Params<T>::zeros(arch);
    RandomStream rng(seed);
    auto fill = [&](Mat<T>& w, std::size_t fan_in) {
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<T>(rng.uniform(-limit, limit));
    };
    for (auto& w : p.conv_w) fill(w, static_cast<std::size_t>(w.cols()));
    for (auto& w : p.dense_w) fill(w, static_cast<std::size_t>(w.cols()));
    return p;
}

// ---------------------------------------------------------------------------
// Forward / backward

template <class T>
inline T elu(T x) {
    return x > T(0) ? x : std::expm1(x);
}

/// ELU derivative expressed through its output a = elu(z).
template <class T>
inline T elu_grad_from_output(T a) {
    return a > T(0) ? T(1) : a + T(1);
}

/// Intermediate values kept by `forward` for `backward`.
template <class T>
struct Cache {
    std::size_t batch = 0;
    Mat<T> input;                      // C_in x B*L
    std::vector<Mat<T>> cols;          // im2col input of each conv layer
    std::vector<Mat<T>> conv_act;      // post-ELU, pre-pool
    std::vector<Mat<T>> pooled;        // pooled output (input of next layer)
    std::vector<std::vector<std::uint8_t>> argmax;
    std::vector<Mat<T>> dense_act;     // post-ELU outputs of hidden dense layers
    Mat<T> log_probs;                  // classes x B
};

namespace detail {

template <class T>
void im2col(const Mat<T>& x, std::size_t channels, std::size_t length, std::size_t batch, std::size_t kernel,
            Mat<T>& cols) {
    const std::size_t pad = (kernel - 1) / 2;
    cols.resize(static_cast<Eigen::Index>(kernel * channels), static_cast<Eigen::Index>(batch * length));
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < length; ++t) {
            T* dst = cols.data() + (b * length + t) * kernel * channels;
            for (std::size_t j = 0; j < kernel; ++j) {
                const std::ptrdiff_t src_t = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(pad);
                if (src_t < 0 || src_t >= static_cast<std::ptrdiff_t>(length)) {
                    std::fill(dst + j * channels, dst + (j + 1) * channels, T(0));
                    continue;
                }
                const T* src = x.data() + (b * length + static_cast<std::size_t>(src_t)) * channels;
                std::copy(src, src + channels, dst + j * channels);
            }
        }
    }
}

template <class T>
void col2im(const Mat<T>& dcols, std::size_t channels, std::size_t length, std::size_t batch, std::size_t kernel,
            Mat<T>& dx) {
    const std::size_t pad = (kernel - 1) / 2;
    dx.setZero(static_cast<Eigen::Index>(channels), static_cast<Eigen::Index>(batch * length));
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < length; ++t) {
            const T* src = dcols.data() + (b * length + t) * kernel * channels;
            for (std::size_t j = 0; j < kernel; ++j) {
                const std::ptrdiff_t dst_t = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(pad);
                if (dst_t < 0 || dst_t >= static_cast<std::ptrdiff_t>(length)) continue;
                T* dst = dx.data() + (b * length + static_cast<std::size_t>(dst_t)) * channels;
                for (std::size_t c = 0; c < channels; ++c) dst[c] += src[j * channels + c];
            }
        }
    }
}

template <class T>
void max_pool(const Mat<T>& x, std::size_t channels, std::size_t length, std::size_t batch, std::size_t pool,
              Mat<T>& out, std::vector<std::uint8_t>& argmax) {
    const std::size_t out_len = length / pool;
    out.resize(static_cast<Eigen::Index>(channels), static_cast<Eigen::Index>(batch * out_len));
    argmax.assign(channels * batch * out_len, 0);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < out_len; ++t) {
            const T* first = x.data() + (b * length + t * pool) * channels;
            T* dst = out.data() + (b * out_len + t) * channels;
            std::uint8_t* arg = argmax.data() + (b * out_len + t) * channels;
            std::copy(first, first + channels, dst);
            for (std::size_t k = 1; k < pool; ++k) {
                const T* cand = first + k * channels;
                for (std::size_t c = 0; c < channels; ++c) {
                    const bool greater = cand[c] > dst[c];
                    dst[c] = greater ? cand[c] : dst[c];
                    arg[c] = greater ? static_cast<std::uint8_t>(k) : arg[c];
                }
            }
        }
    }
}

template <class T>
void max_pool_backward(const Mat<T>& dout, const std::vector<std::uint8_t>& argmax, std::size_t channels,
                       std::size_t length, std::size_t batch, std::size_t pool, Mat<T>& dx) {
    const std::size_t out_len = length / pool;
    dx.setZero(static_cast<Eigen::Index>(channels), static_cast<Eigen::Index>(batch * length));
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < out_len; ++t) {
            const T* src = dout.data() + (b * out_len + t) * channels;
            const std::uint8_t* arg = argmax.data() + (b * out_len + t) * channels;
            T* base = dx.data() + (b * length + t * pool) * channels;
            for (std::size_t c = 0; c < channels; ++c) base[arg[c] * channels + c] = src[c];
        }
    }
}

// Both forms avoid select(), which Eigen 3.4 does not vectorize.
template <class T>
void apply_elu(Mat<T>& m) {
    m.array() = m.array().max(T(0)) + (m.array().min(T(0)).exp() - T(1));
}

/// min(a + 1, 1) is 1 for a > 0 and e^z for a = e^z - 1 <= 0.
template <class T>
auto elu_grad(const Mat<T>& act) {
    return (act.array() + T(1)).min(T(1));
}

} // namespace detail

/// Class log-probabilities (classes x B) for `batch` examples laid out as
/// B x L x C_in. Fills `cache` for a following `backward`.
template <class T>
const Mat<T>& forward(const Params<T>& p, std::span<const T> inputs, std::size_t batch, Cache<T>& cache) {
    const Architecture& a = p.arch;
    require(inputs.size() == batch * a.input_length * a.input_channels, "forward: input shape mismatch");
    const auto lengths = a.lengths();
    const std::size_t n_conv = a.conv.size();
    cache.batch = batch;
    cache.cols.resize(n_conv);
    cache.conv_act.resize(n_conv);
    cache.pooled.resize(n_conv);
    cache.argmax.resize(n_conv);
    cache.dense_act.resize(a.dense.size() > 0 ? a.dense.size() - 1 : 0);

    cache.input = Eigen::Map<const Mat<T>>(inputs.data(), static_cast<Eigen::Index>(a.input_channels),
                                           static_cast<Eigen::Index>(batch * a.input_length));
    const Mat<T>* x = &cache.input;
    for (std::size_t i = 0; i < n_conv; ++i) {
        const std::size_t in_ch = a.conv_out_channels(i);
        detail::im2col(*x, in_ch, lengths[i], batch, a.conv[i].kernel, cache.cols[i]);
        Mat<T>& act = cache.conv_act[i];
        act.noalias() = p.conv_w[i] * cache.cols[i];
        act.colwise() += p.conv_b[i];
        detail::apply_elu(act);
        detail::max_pool(act, a.conv[i].channels, lengths[i], batch, a.conv[i].pool, cache.pooled[i], cache.argmax[i]);
        x = &cache.pooled[i];
    }

    const auto features = static_cast<Eigen::Index>(a.flat_features());
    Eigen::Map<const Mat<T>> flat(x->data(), features, static_cast<Eigen::Index>(batch));
    Mat<T> z;
    for (std::size_t l = 0; l < a.dense.size(); ++l) {
        if (l == 0)
            z.noalias() = p.dense_w[l] * flat;
        else
            z.noalias() = p.dense_w[l] * cache.dense_act[l - 1];
        z.colwise() += p.dense_b[l];
        if (l + 1 < a.dense.size()) {
            detail::apply_elu(z);
            cache.dense_act[l] = z;
        }
    }

    // log-softmax per column
    const Eigen::Matrix<T, 1, Eigen::Dynamic> mx = z.colwise().maxCoeff();
    z.rowwise() -= mx;
    const Eigen::Matrix<T, 1, Eigen::Dynamic> lse = z.array().exp().colwise().sum().log().matrix();
    z.rowwise() -= lse;
    cache.log_probs = std::move(z);
    return cache.log_probs;
}

/// Probabilities (B x classes, row-major in the returned vector).
template <class T>
std::vector<T> predict_proba(const Params<T>& p, std::span<const T> inputs, std::size_t batch) {
    Cache<T> cache;
    const Mat<T>& lp = forward(p, inputs, batch, cache);
    std::vector<T> out(static_cast<std::size_t>(lp.size()));
    for (Eigen::Index b = 0; b < lp.cols(); ++b)
        for (Eigen::Index c = 0; c < lp.rows(); ++c)
            out[static_cast<std::size_t>(b * lp.rows() + c)] = std::exp(lp(c, b));
    return out;
}

/// Mean categorical cross-entropy plus l1 on dense weights, for the batch
/// whose forward pass is in `cache`. Gradients are written into `grads`.
template <class T>
T backward(const Params<T>& p, const Cache<T>& cache, std::span<const int> labels, T l1_lambda, Params<T>& grads) {
    const Architecture& a = p.arch;
    const std::size_t batch = cache.batch;
    require(labels.size() == batch, "backward: label count mismatch");
    const auto n_classes = static_cast<int>(a.n_classes());
    if (grads.arch != a || grads.conv_w.size() != p.conv_w.size()) grads = Params<T>::zeros(a);

    T ce = 0;
    Mat<T> dz = cache.log_probs.array().exp().matrix();
    for (std::size_t b = 0; b < batch; ++b) {
        const int y = labels[b];
        require(y >= 0 && y < n_classes, "label out of range");
        ce -= cache.log_probs(y, static_cast<Eigen::Index>(b));
        dz(y, static_cast<Eigen::Index>(b)) -= T(1);
    }
    const T inv_b = T(1) / static_cast<T>(batch);
    ce *= inv_b;
    dz *= inv_b;

    T l1 = 0;
    for (const auto& w : p.dense_w) l1 += w.cwiseAbs().sum();
    const T loss = ce + l1_lambda * l1;

    const auto features = static_cast<Eigen::Index>(a.flat_features());
    const Mat<T>& last_pooled = a.conv.empty() ? cache.input : cache.pooled.back();
    Eigen::Map<const Mat<T>> flat(last_pooled.data(), features, static_cast<Eigen::Index>(batch));

    auto sign = [](T v) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); };
    Mat<T> dh;
    for (std::size_t l = a.dense.size(); l-- > 0;) {
        if (l == 0)
            grads.dense_w[l].noalias() = dz * flat.transpose();
        else
            grads.dense_w[l].noalias() = dz * cache.dense_act[l - 1].transpose();
        grads.dense_w[l] += l1_lambda * p.dense_w[l].unaryExpr(sign);
        grads.dense_b[l] = dz.rowwise().sum();
        dh.noalias() = p.dense_w[l].transpose() * dz;
        if (l > 0) dz = (dh.array() * detail::elu_grad(cache.dense_act[l - 1])).matrix();
    }

    if (a.conv.empty()) return loss;

    // dh is d(flat); as a (channels x B*L) matrix it is d(last pooled).
    const auto lengths = a.lengths();
    Mat<T> dpool = Eigen::Map<const Mat<T>>(dh.data(), static_cast<Eigen::Index>(a.conv.back().channels),
                                            static_cast<Eigen::Index>(batch * lengths.back()));
    Mat<T> dact, dx;
    for (std::size_t i = a.conv.size(); i-- > 0;) {
        const auto& spec = a.conv[i];
        detail::max_pool_backward(dpool, cache.argmax[i], spec.channels, lengths[i], batch, spec.pool, dact);
        dact.array() *= detail::elu_grad(cache.conv_act[i]);
        grads.conv_w[i].noalias() = dact * cache.cols[i].transpose();
        grads.conv_b[i] = dact.rowwise().sum();
        if (i > 0) {
            const Mat<T> dcols = p.conv_w[i].transpose() * dact;
            detail::col2im(dcols, a.conv_out_channels(i), lengths[i], batch, spec.kernel, dx);
            dpool = std::move(dx);
        }
    }
    return loss;
}

/// Loss and gradients for one batch in a single call.
template <class T>
T loss_and_grads(const Params<T>& p, std::span<const T> inputs, std::span<const int> labels, T l1_lambda,
                 Params<T>& grads) {
    Cache<T> cache;
    forward(p, inputs, labels.size(), cache);
    return backward(p, cache, labels, l1_lambda, grads);
}

/// Loss only (no gradients), used by finite-difference checks.
template <class T>
T loss_only(const Params<T>& p, std::span<const T> inputs, std::span<const int> labels, T l1_lambda) {
    Cache<T> cache;
    const Mat<T>& lp = forward(p, inputs, labels.size(), cache);
    T ce = 0;
    for (std::size_t b = 0; b < labels.size(); ++b) {
        require(labels[b] >= 0 && labels[b] < static_cast<int>(p.arch.n_classes()), "label out of range");
        ce -= lp(labels[b], static_cast<Eigen::Index>(b));
    }
    ce /= static_cast<T>(labels.size());
    T l1 = 0;
    for (const auto& w : p.dense_w) l1 += w.cwiseAbs().sum();
    return ce + l1_lambda * l1;
}

} // namespace txid::nn
