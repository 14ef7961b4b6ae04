// SPDX-License-Identifier: Apache-2.0
//
// Scenario-dependent propagation between each emitter and the receiver.
#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "txid/error.hpp"
#include "txid/impairments.hpp"
#include "txid/random.hpp"
#include "txid/signal.hpp"

namespace txid {

enum class Scenario { Plain, VaryingAmplitude, Robot };

inline std::string_view to_string(Scenario s) {
    switch (s) {
    case Scenario::Plain: return "plain";
    case Scenario::VaryingAmplitude: return "varying";
    case Scenario::Robot: return "robot";
    }
    return "?";
}

inline Scenario parse_scenario(std::string_view s) {
    if (s == "plain") return Scenario::Plain;
    if (s == "varying") return Scenario::VaryingAmplitude;
    if (s == "robot") return Scenario::Robot;
    throw Error("unknown scenario: " + std::string(s));
}

struct ScenarioConfig {
    Scenario scenario = Scenario::Plain;
    double amplitude_min = 0.2;
    double amplitude_max = 1.0;
    double snr_db = 20.0;
    std::uint64_t seed = 0;

    void validate() const {
        require(amplitude_min > 0.0 && amplitude_min <= amplitude_max, "amplitude range must satisfy 0 < min <= max");
    }
};

/// Room model knobs. Defaults describe a small shielded room: four taps at
/// consecutive samples with exponentially decaying magnitude.
struct ChannelParams {
    std::size_t n_taps = 4;
    double tap_decay = 0.5;            // |tap k| ~ exp(-k * decay)
    double gain_min = 0.5;             // per-link path loss, U(gain_min, gain_max)
    double gain_max = 1.0;
    std::size_t moving_tap = 1;        // tap index the robot walk acts on
    double walk_sigma = 0.02;          // complex step std-dev per packet
    double walk_clamp = 0.5;           // moving |tap| <= clamp * |dominant tap|
    double change_min = 0.1;           // added tap magnitude relative to dominant
    double change_max = 0.3;
};

struct ChannelState {
    int link_id = 0;
    std::vector<cplx> taps;
    double static_gain = 1.0;
    Scenario scenario = Scenario::Plain;
    std::size_t moving_tap = 1;
    double walk_sigma = 0.02;
    double walk_clamp = 0.5;
    int env_epoch = 0;

    double tap_norm() const {
        double e = 0.0;
        for (const auto& t : taps) e += std::norm(t);
        return std::sqrt(e);
    }

    friend bool operator==(const ChannelState&, const ChannelState&) = default;
};

namespace detail {
inline void normalize_taps(std::vector<cplx>& taps) {
    double e = 0.0;
    for (const auto& t : taps) e += std::norm(t);
    const double n = std::sqrt(e);
    for (auto& t : taps) t /= n;
}
} // namespace detail

/// One link per emitter. Draws depend only on the emitter count and `rng`,
/// never on the scenario, so every scenario of a study sees the same room.
inline std::vector<ChannelState> make_links(const std::vector<EmitterProfile>& profiles, const ScenarioConfig& scenario,
                                            RandomStream& rng, const ChannelParams& params = {}) {
    require(!profiles.empty(), "make_links needs at least one emitter");
    require(params.n_taps >= 1 && params.n_taps <= 8, "tap count must be in [1, 8]");
    scenario.validate();
    std::vector<ChannelState> links;
    links.reserve(profiles.size());
    for (const auto& p : profiles) {
        ChannelState s;
        s.link_id = p.emitter_id;
        s.scenario = scenario.scenario;
        s.moving_tap = std::min(params.moving_tap, params.n_taps - 1);
        s.walk_sigma = params.walk_sigma;
        s.walk_clamp = params.walk_clamp;
        s.taps.resize(params.n_taps);
        for (std::size_t k = 0; k < params.n_taps; ++k) {
            const double mag = std::exp(-static_cast<double>(k) * params.tap_decay);
            s.taps[k] = std::polar(mag, rng.uniform(0.0, 2.0 * std::numbers::pi));
        }
        detail::normalize_taps(s.taps);
        s.static_gain = rng.uniform(params.gain_min, params.gain_max);
        links.push_back(std::move(s));
    }
    return links;
}

inline double payload_amplitude(const ScenarioConfig& scenario, RandomStream& rng) {
    if (scenario.scenario == Scenario::Plain) return 1.0;
    return rng.uniform(scenario.amplitude_min, scenario.amplitude_max);
}

/// One clamped random-walk step of the robot-driven tap.
inline void advance_robot_walk(ChannelState& link, RandomStream& rng) {
    if (link.taps.size() < 2 || link.moving_tap == 0) return;
    cplx& tap = link.taps[link.moving_tap];
    tap += rng.complex_normal(link.walk_sigma * link.walk_sigma);
    const double limit = link.walk_clamp * std::abs(link.taps[0]);
    const double mag = std::abs(tap);
    if (mag > limit) tap *= limit / mag;
}

/// Full linear convolution with the link taps, scaled by the path gain.
inline IqBuffer convolve_link(const IqBuffer& x, const ChannelState& link) {
    if (x.empty()) return IqBuffer(0, x.sample_rate_hz);
    IqBuffer y(x.size() + link.taps.size() - 1, x.sample_rate_hz);
    for (std::size_t n = 0; n < x.size(); ++n) {
        const cplx v = x[n] * link.static_gain;
        for (std::size_t k = 0; k < link.taps.size(); ++k) y[n + k] += v * link.taps[k];
    }
    return y;
}

inline std::pair<IqBuffer, ChannelState> propagate(const IqBuffer& x, ChannelState link, RandomStream& rng) {
    if (link.scenario == Scenario::Robot) advance_robot_walk(link, rng);
    IqBuffer y = convolve_link(x, link);
    return {std::move(y), std::move(link)};
}

/// The structural part of an environment change, shared by every link.
struct EnvironmentChange {
    std::size_t delay = 1;
    double relative_magnitude = 0.0;
};

inline EnvironmentChange draw_environment_change(std::size_t n_taps, RandomStream& rng,
                                                 const ChannelParams& params = {}) {
    EnvironmentChange c;
    c.delay = 1 + rng.index(std::max<std::size_t>(n_taps, 1));
    c.relative_magnitude = rng.uniform(params.change_min, params.change_max);
    return c;
}

/// Adds a reflector to the room: a new static tap with the shared delay and
/// magnitude of `rng`'s draw and a per-link phase, then re-normalizes.
/// Feeding identically seeded streams to every link models one change seen
/// by all emitters.
inline ChannelState perturb_environment(ChannelState link, RandomStream rng, const ChannelParams& params = {}) {
    require(!link.taps.empty(), "perturb_environment on empty link");
    const auto change = draw_environment_change(link.taps.size(), rng, params);
    RandomStream phase_rng = rng.fork(static_cast<std::uint64_t>(link.link_id));
    const double phase = phase_rng.uniform(0.0, 2.0 * std::numbers::pi);
    if (change.delay >= link.taps.size()) link.taps.resize(change.delay + 1);
    link.taps[change.delay] += std::polar(change.relative_magnitude * std::abs(link.taps[0]), phase);
    detail::normalize_taps(link.taps);
    ++link.env_epoch;
    return link;
}

} // namespace txid
