// SPDX-License-Identifier: Apache-2.0
//
// Scheduler, frame assembly and the receiver pipeline:
//
//   | wake-up zeros | preamble | header (1 OFDM symbol) | guard | payload |
//
// The receiver finds the preamble by correlation, estimates the channel on
// it, decodes the header (8-bit id + CRC-16), and slices a fixed-length
// window around the payload for recording.
#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "txid/channel.hpp"
#include "txid/error.hpp"
#include "txid/impairments.hpp"
#include "txid/random.hpp"
#include "txid/signal.hpp"

namespace txid {

/// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no xor-out.
inline std::uint16_t crc16_ccitt(std::span<const std::uint8_t> bytes) {
    static const auto table = [] {
        std::array<std::uint16_t, 256> t{};
        for (unsigned i = 0; i < 256; ++i) {
            std::uint16_t c = static_cast<std::uint16_t>(i << 8);
            for (int b = 0; b < 8; ++b) c = (c & 0x8000) ? static_cast<std::uint16_t>((c << 1) ^ 0x1021) : static_cast<std::uint16_t>(c << 1);
            t[i] = c;
        }
        return t;
    }();
    std::uint16_t crc = 0xFFFF;
    for (auto byte : bytes) crc = static_cast<std::uint16_t>((crc << 8) ^ table[((crc >> 8) ^ byte) & 0xFF]);
    return crc;
}

struct FrameLayout {
    std::size_t wakeup_zeros = 200;
    std::size_t preamble = kPreambleSamples;
    std::size_t guard_gap = 100;
    std::size_t payload = kPayloadSamples;
    std::size_t pre_roll = 20;
    std::size_t post_roll = 20;
    // Receiver keeps capturing after the burst so the post-roll sees air.
    std::size_t capture_tail = 32;
    // Header RMS relative to the unit-modulus preamble/payload; keeps OFDM
    // peaks inside the amplifier's monotonic region.
    double header_rms = 0.5;
    double detect_threshold = 0.5;
    std::size_t channel_estimate_taps = 8;

    static constexpr std::size_t header = OfdmCodec::kSymbolSamples;

    std::size_t frame_samples() const { return wakeup_zeros + preamble + header + guard_gap + payload; }
    std::size_t payload_offset_from_preamble() const { return preamble + header + guard_gap; }
    std::size_t window_samples() const { return pre_roll + payload + post_roll; }
};

struct ScheduleEvent {
    double time_s = 0.0;
    int emitter_id = 0;
};

inline constexpr double kSchedulerPeriodS = 1e-3;

/// One uniformly chosen emitter per scheduler period, starting at `start_s`.
inline std::vector<ScheduleEvent> schedule(std::size_t n_emitters, double duration_s, RandomStream& rng,
                                           double start_s = 0.0) {
    require(n_emitters >= 2, "schedule needs at least 2 emitters");
    require(duration_s > 0.0, "schedule duration must be positive");
    const auto count = static_cast<std::size_t>(std::floor(duration_s / kSchedulerPeriodS + 1e-9));
    std::vector<ScheduleEvent> events(count);
    for (std::size_t i = 0; i < count; ++i) {
        events[i].time_s = start_s + static_cast<double>(i) * kSchedulerPeriodS;
        events[i].emitter_id = static_cast<int>(rng.index(n_emitters));
    }
    return events;
}

inline constexpr std::size_t kHeaderBits = OfdmCodec::kDataCarriers;

inline constexpr std::size_t kHeaderInfoBits = 24;

/// 8-bit id (MSB first) and the CRC-16 of that byte (MSB first), sent twice:
/// bit j rides on data carriers j and j + 24, about half the band apart.
inline BitSequence header_bits(int emitter_id) {
    require(emitter_id >= 0 && emitter_id <= 255, "emitter id must fit in 8 bits");
    const std::uint8_t id = static_cast<std::uint8_t>(emitter_id);
    const std::uint16_t crc = crc16_ccitt(std::span<const std::uint8_t>(&id, 1));
    BitSequence bits(kHeaderBits, 0);
    for (int b = 0; b < 8; ++b) bits[b] = (id >> (7 - b)) & 1;
    for (int b = 0; b < 16; ++b) bits[8 + b] = (crc >> (15 - b)) & 1;
    std::copy_n(bits.begin(), kHeaderInfoBits, bits.begin() + kHeaderInfoBits);
    return bits;
}

/// The id carried by 24 information bits, or nothing when the CRC fails.
inline std::optional<int> parse_header_info(std::span<const std::uint8_t> info) {
    require(info.size() == kHeaderInfoBits, "header info must be 24 bits");
    std::uint8_t id = 0;
    for (int b = 0; b < 8; ++b) id = static_cast<std::uint8_t>((id << 1) | (info[b] & 1));
    std::uint16_t crc = 0;
    for (int b = 0; b < 16; ++b) crc = static_cast<std::uint16_t>((crc << 1) | (info[8 + b] & 1));
    if (crc16_ccitt(std::span<const std::uint8_t>(&id, 1)) != crc) return std::nullopt;
    return static_cast<int>(id);
}

/// Combines the two copies of each information bit from per-carrier soft
/// metrics (positive means bit 0) and checks the CRC.
inline std::optional<int> decode_header_soft(std::span<const double> metrics) {
    require(metrics.size() == kHeaderBits, "header must have 48 soft metrics");
    BitSequence info(kHeaderInfoBits);
    for (std::size_t j = 0; j < kHeaderInfoBits; ++j)
        info[j] = metrics[j] + metrics[j + kHeaderInfoBits] < 0.0 ? 1 : 0;
    return parse_header_info(info);
}

/// Hard-decision variant for 48 demodulated bits; the first copy wins.
inline std::optional<int> parse_header_bits(std::span<const std::uint8_t> bits) {
    require(bits.size() == kHeaderBits, "header must be 48 bits");
    return parse_header_info(bits.first(kHeaderInfoBits));
}

struct Frame {
    std::size_t wakeup_zeros = 200;
    IqBuffer preamble;
    IqBuffer header;
    std::size_t guard_gap = 100;
    IqBuffer payload;

    IqBuffer serialize() const {
        IqBuffer out;
        out.samples.reserve(wakeup_zeros + preamble.size() + header.size() + guard_gap + payload.size());
        out.append_zeros(wakeup_zeros);
        out.append(preamble);
        out.append(header);
        out.append_zeros(guard_gap);
        out.append(payload);
        return out;
    }
};

inline Frame build_frame(int emitter_id, const IqBuffer& payload, const FrameLayout& layout = {}) {
    require(payload.size() == layout.payload, "payload length does not match frame layout");
    Frame f;
    f.wakeup_zeros = layout.wakeup_zeros;
    f.preamble = make_preamble(layout.preamble);
    f.header = ofdm_modulate(header_bits(emitter_id));
    for (auto& s : f.header) s *= layout.header_rms;
    f.guard_gap = layout.guard_gap;
    f.payload = payload;
    return f;
}

/// Emitter wake-up to receiver antenna for one scheduled packet. `rng` is the
/// packet's own stream: payload content, amplitude, robot step and noise are
/// drawn from it in that order.
inline std::pair<IqBuffer, ChannelState> transmit_packet(const ScheduleEvent& event, const EmitterProfile& profile,
                                                         const ChannelState& link, const ScenarioConfig& scenario,
                                                         PayloadKind payload_kind, RandomStream& rng,
                                                         const FrameLayout& layout = {}) {
    const IqBuffer payload = make_payload(payload_kind, layout.payload, rng);
    IqBuffer burst = build_frame(event.emitter_id, payload, layout).serialize();
    const double amplitude = payload_amplitude(scenario, rng);
    if (amplitude != 1.0)
        for (auto& s : burst) s *= amplitude;
    IqBuffer tx = apply_emitter_chain(burst, profile, event.time_s);
    auto [air, next] = propagate(tx, link, rng);
    const std::size_t capture = layout.frame_samples() + layout.capture_tail;
    if (air.size() < capture) air.append_zeros(capture - air.size());
    if (!(std::isinf(scenario.snr_db) && scenario.snr_db > 0)) air = add_awgn(air, scenario.snr_db, rng);
    return {std::move(air), std::move(next)};
}

enum class RxStatus { Ok, HeaderFailed, NoFrame };

struct ReceivedPacket {
    RxStatus status = RxStatus::NoFrame;
    std::optional<int> emitter_id_decoded;
    IqBuffer payload_window;
    std::size_t detect_offset = 0;
    double rx_time_s = 0.0;
};

/// Least-squares FIR estimate from the received preamble at `offset`, using
/// that the preamble is preceded by silence.
inline std::vector<cplx> estimate_channel(const IqBuffer& air, const IqBuffer& preamble, std::size_t offset,
                                          std::size_t n_taps) {
    const std::size_t len = preamble.size();
    const std::size_t rows = std::min(len, air.size() - offset);
    Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n_taps));
    Eigen::VectorXcd y(static_cast<Eigen::Index>(rows));
    for (std::size_t n = 0; n < rows; ++n) {
        y(static_cast<Eigen::Index>(n)) = air[offset + n];
        for (std::size_t k = 0; k < n_taps && k <= n; ++k)
            a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k)) = preamble[n - k];
    }
    const Eigen::VectorXcd h = a.colPivHouseholderQr().solve(y);
    return {h.data(), h.data() + h.size()};
}

inline std::array<cplx, OfdmCodec::kFftSize> channel_response(std::span<const cplx> taps) {
    std::array<cplx, OfdmCodec::kFftSize> out{};
    const double n = static_cast<double>(OfdmCodec::kFftSize);
    for (std::size_t bin = 0; bin < out.size(); ++bin)
        for (std::size_t k = 0; k < taps.size(); ++k)
            out[bin] += taps[k] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(bin * k) / n);
    return out;
}

inline ReceivedPacket receive_packet(const IqBuffer& air, const IqBuffer& reference_preamble,
                                     const FrameLayout& layout = {}, double capture_start_s = 0.0) {
    ReceivedPacket rx;
    if (air.size() < reference_preamble.size()) return rx;
    const auto detections = correlate_detect(air, reference_preamble, layout.detect_threshold);
    if (detections.empty()) return rx;
    const auto best = std::max_element(detections.begin(), detections.end(),
                                       [](const Detection& a, const Detection& b) { return a.score < b.score; });
    const std::size_t d = best->offset;
    rx.detect_offset = d;
    rx.rx_time_s = capture_start_s + static_cast<double>(d) / air.sample_rate_hz;

    const std::size_t header_start = d + reference_preamble.size();
    if (header_start + layout.header > air.size()) {
        rx.status = RxStatus::HeaderFailed;
        return rx;
    }
    const auto taps = estimate_channel(air, reference_preamble, d, layout.channel_estimate_taps);
    const auto response = channel_response(taps);
    IqBuffer header(std::vector<cplx>(air.samples.begin() + static_cast<std::ptrdiff_t>(header_start),
                                      air.samples.begin() + static_cast<std::ptrdiff_t>(header_start + layout.header)),
                    air.sample_rate_hz);
    const auto carriers = OfdmCodec::instance().demodulate_carriers(header);
    std::vector<double> metrics(carriers.size());
    const auto& bins = OfdmCodec::instance().data_bins();
    for (std::size_t i = 0; i < carriers.size(); ++i) metrics[i] = (carriers[i] * std::conj(response[bins[i]])).real();
    rx.emitter_id_decoded = decode_header_soft(metrics);
    rx.status = rx.emitter_id_decoded ? RxStatus::Ok : RxStatus::HeaderFailed;

    // Window: pre-roll | payload | post-roll, zero-filled past the capture.
    const std::size_t payload_start = d + layout.payload_offset_from_preamble();
    const std::size_t start = payload_start - std::min(payload_start, layout.pre_roll);
    rx.payload_window = IqBuffer(layout.window_samples(), air.sample_rate_hz);
    for (std::size_t i = 0; i < layout.window_samples() && start + i < air.size(); ++i)
        rx.payload_window[i] = air[start + i];
    return rx;
}

} // namespace txid
