// SPDX-License-Identifier: Apache-2.0
//
// Transmitter hardware imperfections: IQ gain/phase mismatch with LO leakage,
// a memoryless cubic power amplifier (AM/AM + AM/PM) and carrier frequency
// offset with linear drift. One EmitterProfile is one radio's signature.
#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <vector>

#include <json.hpp>

#include "txid/error.hpp"
#include "txid/random.hpp"
#include "txid/signal.hpp"

namespace txid {

inline constexpr double kCarrierHz = 433e6;

struct EmitterProfile {
    int emitter_id = 0;
    double iq_gain_mismatch = 0.0;
    double iq_phase_error_rad = 0.0;
    cplx dc_offset{};
    double cfo_ppm = 0.0;
    double cfo_drift_ppm_per_s = 0.0;
    double carrier_hz = kCarrierHz;
    double pa_a1 = 1.0;
    double pa_a3 = 0.0;
    double pa_phase3_rad_per_power = 0.0;
    bool calibrated = false;

    /// Largest input magnitude for which the cubic AM/AM curve is still
    /// increasing.
    double pa_monotonic_limit() const {
        if (pa_a3 == 0.0) return std::numeric_limits<double>::infinity();
        return std::sqrt(pa_a1 / (3.0 * std::abs(pa_a3)));
    }

    /// Peak output magnitude of the cubic curve, reached at the monotonic limit.
    double pa_peak_output() const { return pa_a1 * (2.0 / 3.0) * pa_monotonic_limit(); }

    friend bool operator==(const EmitterProfile&, const EmitterProfile&) = default;
};

/// Parameter ranges for freshly drawn (uncalibrated) radios.
struct ImpairmentRanges {
    double iq_gain = 0.03;          // eps ~ U(-x, x)
    double iq_phase_rad = 0.03;     // phi ~ U(-x, x)
    double dc_magnitude = 0.01;     // |d| ~ U(0, x)
    double cfo_ppm = 2.0;           // U(-x, x)
    double drift_ppm_per_s = 0.01;  // U(-x, x)
    double pa_a1_lo = 0.95, pa_a1_hi = 1.05;
    double pa_a3_lo = -0.05, pa_a3_hi = -0.005;
    double pa_phase3_hi = 0.05;     // k3 ~ U(0, x)
    double calibration_residual = 1.0 / 30.0;
};

inline std::vector<EmitterProfile> sample_profiles(std::size_t n, bool calibrated, RandomStream& rng,
                                                   const ImpairmentRanges& r = {}) {
    require(n >= 2, "sample_profiles needs at least 2 emitters");
    const double iq_scale = calibrated ? r.calibration_residual : 1.0;
    std::vector<EmitterProfile> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        EmitterProfile p;
        p.emitter_id = static_cast<int>(i);
        p.iq_gain_mismatch = rng.uniform(-r.iq_gain, r.iq_gain) * iq_scale;
        p.iq_phase_error_rad = rng.uniform(-r.iq_phase_rad, r.iq_phase_rad) * iq_scale;
        const double dc_mag = rng.uniform(0.0, r.dc_magnitude) * iq_scale;
        const double dc_arg = rng.uniform(0.0, 2.0 * std::numbers::pi);
        p.dc_offset = std::polar(dc_mag, dc_arg);
        p.cfo_ppm = rng.uniform(-r.cfo_ppm, r.cfo_ppm);
        p.cfo_drift_ppm_per_s = rng.uniform(-r.drift_ppm_per_s, r.drift_ppm_per_s);
        p.carrier_hz = kCarrierHz;
        p.pa_a1 = rng.uniform(r.pa_a1_lo, r.pa_a1_hi);
        p.pa_a3 = rng.uniform(r.pa_a3_lo, r.pa_a3_hi);
        p.pa_phase3_rad_per_power = rng.uniform(0.0, r.pa_phase3_hi);
        p.calibrated = calibrated;
        out.push_back(p);
    }
    return out;
}

inline IqBuffer apply_iq_imbalance(const IqBuffer& x, const EmitterProfile& p) {
    const double eps = p.iq_gain_mismatch;
    const double c = std::cos(p.iq_phase_error_rad);
    const double s = std::sin(p.iq_phase_error_rad);
    IqBuffer y(x.size(), x.sample_rate_hz);
    for (std::size_t n = 0; n < x.size(); ++n) {
        const double i = x[n].real();
        const double q = x[n].imag();
        y[n] = cplx{(1.0 + eps) * i, (1.0 - eps) * (q * c + i * s)} + p.dc_offset;
    }
    return y;
}

inline IqBuffer apply_pa_nonlinearity(const IqBuffer& x, const EmitterProfile& p) {
    const double limit = p.pa_monotonic_limit();
    IqBuffer y(x.size(), x.sample_rate_hz);
    for (std::size_t n = 0; n < x.size(); ++n) {
        const double r2 = std::norm(x[n]);
        if (std::sqrt(r2) > limit) throw Error("PA overdriven");
        // (a1 r + a3 r^3) e^{i(arg s + k3 r^2)} == s (a1 + a3 r^2) e^{i k3 r^2}
        const double gain = p.pa_a1 + p.pa_a3 * r2;
        const double phase = p.pa_phase3_rad_per_power * r2;
        y[n] = x[n] * cplx{gain * std::cos(phase), gain * std::sin(phase)};
    }
    return y;
}

/// Frequency offset in Hz for a packet starting at experiment time `t0_s`.
/// Drift is evaluated once per packet.
inline double cfo_hz(const EmitterProfile& p, double t0_s) {
    return p.carrier_hz * (p.cfo_ppm + p.cfo_drift_ppm_per_s * t0_s) * 1e-6;
}

inline IqBuffer apply_cfo(const IqBuffer& x, const EmitterProfile& p, double t0_s) {
    require(t0_s >= 0.0, "apply_cfo: t0_s must be non-negative");
    const double f = cfo_hz(p, t0_s);
    IqBuffer y(x.size(), x.sample_rate_hz);
    if (f == 0.0) {
        y.samples = x.samples;
        return y;
    }
    for (std::size_t n = 0; n < x.size(); ++n) {
        const double t = t0_s + static_cast<double>(n) / x.sample_rate_hz;
        // Reduce cycles before scaling so large t0 keeps full phase precision.
        const double cycles = f * t;
        const double phase = 2.0 * std::numbers::pi * (cycles - std::floor(cycles));
        y[n] = x[n] * std::polar(1.0, phase);
    }
    return y;
}

/// Baseband mismatch, then amplifier, then up-conversion error.
inline IqBuffer apply_emitter_chain(const IqBuffer& x, const EmitterProfile& p, double t0_s) {
    return apply_cfo(apply_pa_nonlinearity(apply_iq_imbalance(x, p), p), p, t0_s);
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const EmitterProfile& p) {
    j = nlohmann::json{{"emitter_id", p.emitter_id},
                       {"iq_gain_mismatch", p.iq_gain_mismatch},
                       {"iq_phase_error_rad", p.iq_phase_error_rad},
                       {"dc_offset", {p.dc_offset.real(), p.dc_offset.imag()}},
                       {"cfo_ppm", p.cfo_ppm},
                       {"cfo_drift_ppm_per_s", p.cfo_drift_ppm_per_s},
                       {"carrier_hz", p.carrier_hz},
                       {"pa_a1", p.pa_a1},
                       {"pa_a3", p.pa_a3},
                       {"pa_phase3_rad_per_power", p.pa_phase3_rad_per_power},
                       {"calibrated", p.calibrated}};
}

inline void from_json(const nlohmann::json& j, EmitterProfile& p) {
    p.emitter_id = j.at("emitter_id").get<int>();
    p.iq_gain_mismatch = j.at("iq_gain_mismatch").get<double>();
    p.iq_phase_error_rad = j.at("iq_phase_error_rad").get<double>();
    const auto& dc = j.at("dc_offset");
    p.dc_offset = {dc.at(0).get<double>(), dc.at(1).get<double>()};
    p.cfo_ppm = j.at("cfo_ppm").get<double>();
    p.cfo_drift_ppm_per_s = j.at("cfo_drift_ppm_per_s").get<double>();
    p.carrier_hz = j.at("carrier_hz").get<double>();
    p.pa_a1 = j.at("pa_a1").get<double>();
    p.pa_a3 = j.at("pa_a3").get<double>();
    p.pa_phase3_rad_per_power = j.at("pa_phase3_rad_per_power").get<double>();
    p.calibrated = j.at("calibrated").get<bool>();
}

/// Writes `{"profiles": [...]}`. Doubles are emitted with round-trip precision.
inline void save_profiles(const std::filesystem::path& path, const std::vector<EmitterProfile>& profiles) {
    nlohmann::json j;
    j["profiles"] = profiles;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    os << j.dump(2) << '\n';
}

inline std::vector<EmitterProfile> load_profiles(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot read " + path.string());
    const auto j = nlohmann::json::parse(is);
    return j.at("profiles").get<std::vector<EmitterProfile>>();
}

} // namespace txid
