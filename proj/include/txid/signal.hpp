// SPDX-License-Identifier: Apache-2.0
//
// Elementary complex-baseband DSP: sample buffers, QPSK, payload sources,
// Zadoff-Chu preamble, normalized cross-correlation detection, AWGN and a
// one-symbol-per-call OFDM codec.
#pragma once

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "txid/error.hpp"
#include "txid/random.hpp"

namespace txid {

using cplx = std::complex<double>;

inline constexpr double kSampleRateHz = 5e6;

struct IqBuffer {
    std::vector<cplx> samples;
    double sample_rate_hz = kSampleRateHz;

    IqBuffer() = default;
    explicit IqBuffer(std::size_t n, double fs = kSampleRateHz) : samples(n), sample_rate_hz(fs) {}
    explicit IqBuffer(std::vector<cplx> s, double fs = kSampleRateHz) : samples(std::move(s)), sample_rate_hz(fs) {}

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
    cplx& operator[](std::size_t i) { return samples[i]; }
    const cplx& operator[](std::size_t i) const { return samples[i]; }
    auto begin() { return samples.begin(); }
    auto end() { return samples.end(); }
    auto begin() const { return samples.begin(); }
    auto end() const { return samples.end(); }

    double mean_power() const {
        if (samples.empty()) return 0.0;
        double acc = 0.0;
        for (const auto& s : samples) acc += std::norm(s);
        return acc / static_cast<double>(samples.size());
    }

    bool all_finite() const {
        return std::all_of(samples.begin(), samples.end(),
                           [](const cplx& s) { return std::isfinite(s.real()) && std::isfinite(s.imag()); });
    }

    void append(const IqBuffer& other) { samples.insert(samples.end(), other.samples.begin(), other.samples.end()); }
    void append_zeros(std::size_t n) { samples.insert(samples.end(), n, cplx{}); }

    friend bool operator==(const IqBuffer&, const IqBuffer&) = default;
};

using BitSequence = std::vector<std::uint8_t>;

enum class PayloadKind { Static, RandomBits, Noise };

inline std::string_view to_string(PayloadKind k) {
    switch (k) {
    case PayloadKind::Static: return "static";
    case PayloadKind::RandomBits: return "random";
    case PayloadKind::Noise: return "noise";
    }
    return "?";
}

inline PayloadKind parse_payload_kind(std::string_view s) {
    if (s == "static") return PayloadKind::Static;
    if (s == "random") return PayloadKind::RandomBits;
    if (s == "noise") return PayloadKind::Noise;
    throw Error("unknown payload kind: " + std::string(s));
}

// ---------------------------------------------------------------------------
// QPSK and payloads

/// Gray-mapped unit-power QPSK, one symbol per sample.
inline IqBuffer qpsk_modulate(std::span<const std::uint8_t> bits) {
    require(bits.size() % 2 == 0, "odd bit length");
    const double a = std::numbers::sqrt2 / 2.0;
    IqBuffer out(bits.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double re = 1.0 - 2.0 * (bits[2 * i] & 1);
        const double im = 1.0 - 2.0 * (bits[2 * i + 1] & 1);
        out[i] = {re * a, im * a};
    }
    return out;
}

/// Chip sequence of symbol 0 in the 2.4 GHz IEEE 802.15.4 O-QPSK PHY. The
/// SHR preamble is eight repetitions of it, so tiling it reproduces the
/// preamble bit stream at any length.
inline constexpr std::array<std::uint8_t, 32> kStaticPayloadChips = {
    1, 1, 0, 1, 1, 0, 0, 1, 1, 1, 0, 0, 0, 0, 1, 1, 0, 1, 0, 1, 0, 0, 1, 0, 0, 0, 1, 0, 1, 1, 1, 0};

inline constexpr std::size_t kPayloadSamples = 560;

inline IqBuffer make_payload(PayloadKind kind, std::size_t length_samples, RandomStream& rng) {
    require(length_samples > 0, "payload length must be positive");
    switch (kind) {
    case PayloadKind::Static: {
        BitSequence bits(2 * length_samples);
        for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = kStaticPayloadChips[i % kStaticPayloadChips.size()];
        return qpsk_modulate(bits);
    }
    case PayloadKind::RandomBits: {
        BitSequence bits(2 * length_samples);
        for (auto& b : bits) b = static_cast<std::uint8_t>(rng.bit());
        return qpsk_modulate(bits);
    }
    case PayloadKind::Noise: {
        // U(-a, a) has variance a^2/3; a = sqrt(3/2) gives 1/2 per rail.
        const double a = std::sqrt(1.5);
        IqBuffer out(length_samples);
        for (auto& s : out) {
            const double re = rng.uniform(-a, a);
            const double im = rng.uniform(-a, a);
            s = {re, im};
        }
        return out;
    }
    }
    throw Error("unknown payload kind");
}

// ---------------------------------------------------------------------------
// Preamble and detection

inline constexpr std::size_t kPreambleSamples = 63;

/// Root-1 Zadoff-Chu sequence. Ideal periodic autocorrelation for every
/// length since gcd(1, L) = 1.
inline IqBuffer make_preamble(std::size_t length_samples = kPreambleSamples) {
    require(length_samples >= 16, "preamble length must be >= 16");
    const auto len = static_cast<double>(length_samples);
    const std::size_t parity = length_samples % 2;
    IqBuffer out(length_samples);
    for (std::size_t n = 0; n < length_samples; ++n) {
        // n(n+parity) mod 2L keeps the phase argument small and exact.
        const std::uint64_t q = (static_cast<std::uint64_t>(n) * (n + parity)) % (2 * length_samples);
        const double phase = -std::numbers::pi * static_cast<double>(q) / len;
        out[n] = std::polar(1.0, phase);
    }
    return out;
}

/// Normalized cross-correlation magnitude of `reference` against every
/// full-overlap window of `signal`. All-zero windows score 0.
inline std::vector<double> normalized_correlation(const IqBuffer& signal, const IqBuffer& reference) {
    require(!reference.empty(), "empty reference");
    require(reference.size() <= signal.size(), "reference longer than signal");
    const std::size_t len = reference.size();
    double ref_energy = 0.0;
    for (const auto& r : reference) ref_energy += std::norm(r);
    const double ref_norm = std::sqrt(ref_energy);

    std::vector<double> out(signal.size() - len + 1, 0.0);
    for (std::size_t k = 0; k < out.size(); ++k) {
        cplx acc{};
        double energy = 0.0;
        for (std::size_t j = 0; j < len; ++j) {
            const cplx s = signal[k + j];
            acc += s * std::conj(reference[j]);
            energy += std::norm(s);
        }
        if (energy > 0.0) out[k] = std::abs(acc) / (std::sqrt(energy) * ref_norm);
    }
    return out;
}

struct Detection {
    std::size_t offset = 0;
    double score = 0.0;
};

/// Offsets whose normalized correlation exceeds `threshold_ratio`, reduced
/// to peaks at least one reference length apart (strongest wins), sorted by
/// offset.
inline std::vector<Detection> correlate_detect(const IqBuffer& signal, const IqBuffer& reference,
                                               double threshold_ratio) {
    require(!reference.empty(), "empty reference");
    require(threshold_ratio > 0.0 && threshold_ratio <= 1.0, "threshold_ratio must be in (0, 1]");
    const auto corr = normalized_correlation(signal, reference);

    std::vector<Detection> candidates;
    for (std::size_t k = 0; k < corr.size(); ++k)
        if (corr[k] > threshold_ratio) candidates.push_back({k, corr[k]});
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Detection& a, const Detection& b) { return a.score > b.score; });

    const std::size_t len = reference.size();
    std::vector<Detection> kept;
    for (const auto& c : candidates) {
        const bool clear = std::none_of(kept.begin(), kept.end(), [&](const Detection& k) {
            const std::size_t d = c.offset > k.offset ? c.offset - k.offset : k.offset - c.offset;
            return d < len;
        });
        if (clear) kept.push_back(c);
    }
    std::sort(kept.begin(), kept.end(), [](const Detection& a, const Detection& b) { return a.offset < b.offset; });
    return kept;
}

// ---------------------------------------------------------------------------
// Noise

/// Adds complex white Gaussian noise at `snr_db` relative to the buffer's own
/// mean power. `snr_db = +inf` returns the input unchanged.
inline IqBuffer add_awgn(const IqBuffer& signal, double snr_db, RandomStream& rng) {
    require(!signal.empty(), "add_awgn on empty signal");
    const double power = signal.mean_power();
    require(power > 0.0, "add_awgn on zero-power signal");
    if (std::isinf(snr_db) && snr_db > 0) return signal;
    const double variance = power / std::pow(10.0, snr_db / 10.0);
    IqBuffer out = signal;
    for (auto& s : out) s += rng.complex_normal(variance);
    return out;
}

// ---------------------------------------------------------------------------
// OFDM

/// 64-point OFDM, 16-sample cyclic prefix, 48 BPSK data subcarriers on the
/// familiar +/-1..26 grid with +/-7 and +/-21 left empty. Time-domain output
/// has unit mean power.
class OfdmCodec {
public:
    static constexpr std::size_t kFftSize = 64;
    static constexpr std::size_t kCyclicPrefix = 16;
    static constexpr std::size_t kSymbolSamples = kFftSize + kCyclicPrefix;
    static constexpr std::size_t kDataCarriers = 48;

    static const OfdmCodec& instance() {
        static const OfdmCodec codec;
        return codec;
    }

    /// FFT bin index of each data subcarrier, in bit order.
    const std::array<std::size_t, kDataCarriers>& data_bins() const { return bins_; }

    IqBuffer modulate(std::span<const std::uint8_t> bits) const {
        require(!bits.empty() && bits.size() % kDataCarriers == 0, "OFDM bit count must be a multiple of 48");
        const std::size_t n_sym = bits.size() / kDataCarriers;
        const double scale = 1.0 / std::sqrt(static_cast<double>(kDataCarriers));
        IqBuffer out(n_sym * kSymbolSamples);
        std::array<cplx, kFftSize> freq{};
        std::array<cplx, kFftSize> time{};
        for (std::size_t s = 0; s < n_sym; ++s) {
            freq.fill(cplx{});
            for (std::size_t i = 0; i < kDataCarriers; ++i)
                freq[bins_[i]] = 1.0 - 2.0 * (bits[s * kDataCarriers + i] & 1);
            execute(backward_, freq.data(), time.data());
            auto* dst = out.samples.data() + s * kSymbolSamples;
            for (std::size_t n = 0; n < kCyclicPrefix; ++n) dst[n] = time[kFftSize - kCyclicPrefix + n] * scale;
            for (std::size_t n = 0; n < kFftSize; ++n) dst[kCyclicPrefix + n] = time[n] * scale;
        }
        return out;
    }

    /// Data-subcarrier values of each symbol, in bit order.
    std::vector<cplx> demodulate_carriers(const IqBuffer& samples) const {
        require(!samples.empty() && samples.size() % kSymbolSamples == 0,
                "OFDM demodulate: length must be a multiple of 80");
        const std::size_t n_sym = samples.size() / kSymbolSamples;
        const double scale = std::sqrt(static_cast<double>(kDataCarriers)) / static_cast<double>(kFftSize);
        std::vector<cplx> out(n_sym * kDataCarriers);
        std::array<cplx, kFftSize> time{};
        std::array<cplx, kFftSize> freq{};
        for (std::size_t s = 0; s < n_sym; ++s) {
            const auto* src = samples.samples.data() + s * kSymbolSamples + kCyclicPrefix;
            std::copy(src, src + kFftSize, time.begin());
            execute(forward_, time.data(), freq.data());
            for (std::size_t i = 0; i < kDataCarriers; ++i) out[s * kDataCarriers + i] = freq[bins_[i]] * scale;
        }
        return out;
    }

    BitSequence demodulate(const IqBuffer& samples) const {
        const auto carriers = demodulate_carriers(samples);
        BitSequence bits(carriers.size());
        for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = carriers[i].real() < 0.0 ? 1 : 0;
        return bits;
    }

    /// Coherent BPSK decisions after removing a per-bin channel response
    /// (`channel_response` has kFftSize entries, indexed by FFT bin).
    BitSequence demodulate(const IqBuffer& samples, std::span<const cplx> channel_response) const {
        require(channel_response.size() == kFftSize, "channel response must have 64 bins");
        const auto carriers = demodulate_carriers(samples);
        BitSequence bits(carriers.size());
        for (std::size_t i = 0; i < bits.size(); ++i) {
            const cplx h = channel_response[bins_[i % kDataCarriers]];
            bits[i] = (carriers[i] * std::conj(h)).real() < 0.0 ? 1 : 0;
        }
        return bits;
    }

    OfdmCodec(const OfdmCodec&) = delete;
    OfdmCodec& operator=(const OfdmCodec&) = delete;
    ~OfdmCodec() {
        fftw_destroy_plan(forward_);
        fftw_destroy_plan(backward_);
    }

private:
    OfdmCodec() {
        std::size_t i = 0;
        for (int k = -26; k <= 26; ++k) {
            if (k == 0 || k == 7 || k == -7 || k == 21 || k == -21) continue;
            bins_[i++] = static_cast<std::size_t>((k + static_cast<int>(kFftSize)) % static_cast<int>(kFftSize));
        }
        std::array<cplx, kFftSize> a{};
        std::array<cplx, kFftSize> b{};
        const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        forward_ = fftw_plan_dft_1d(kFftSize, reinterpret_cast<fftw_complex*>(a.data()),
                                    reinterpret_cast<fftw_complex*>(b.data()), FFTW_FORWARD, flags);
        backward_ = fftw_plan_dft_1d(kFftSize, reinterpret_cast<fftw_complex*>(a.data()),
                                     reinterpret_cast<fftw_complex*>(b.data()), FFTW_BACKWARD, flags);
    }

    static void execute(fftw_plan plan, cplx* in, cplx* out) {
        fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(in), reinterpret_cast<fftw_complex*>(out));
    }

    std::array<std::size_t, kDataCarriers> bins_{};
    fftw_plan forward_ = nullptr;
    fftw_plan backward_ = nullptr;
};

inline IqBuffer ofdm_modulate(std::span<const std::uint8_t> bits) { return OfdmCodec::instance().modulate(bits); }

inline BitSequence ofdm_demodulate(const IqBuffer& samples) { return OfdmCodec::instance().demodulate(samples); }

} // namespace txid
