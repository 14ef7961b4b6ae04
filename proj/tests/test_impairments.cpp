// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>

#include <fftw3.h>
#include <gtest/gtest.h>

#include "txid/impairments.hpp"

using namespace txid;

namespace {

EmitterProfile neutral() { return EmitterProfile{}; }

IqBuffer random_signal(std::size_t n, std::uint64_t seed, double scale = 1.0) {
    RandomStream rng(seed);
    IqBuffer x(n);
    for (auto& s : x) s = rng.complex_normal(1.0) * scale;
    return x;
}

double max_abs_diff(const IqBuffer& a, const IqBuffer& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace

TEST(Profiles, CalibratedResidualsSmall) {
    RandomStream rng(7);
    const auto ps = sample_profiles(21, true, rng);
    ASSERT_EQ(ps.size(), 21u);
    for (std::size_t i = 0; i < ps.size(); ++i) {
        EXPECT_EQ(ps[i].emitter_id, static_cast<int>(i));
        EXPECT_LE(std::abs(ps[i].iq_gain_mismatch), 1e-3);
        EXPECT_LE(std::abs(ps[i].iq_phase_error_rad), 1e-3);
        EXPECT_LE(std::abs(ps[i].dc_offset), 1e-3);
        EXPECT_TRUE(ps[i].calibrated);
        EXPECT_GT(ps[i].pa_a1, 0.0);
    }
}

TEST(Profiles, DeterministicAndDistinct) {
    RandomStream a(3), b(3);
    EXPECT_EQ(sample_profiles(2, false, a), sample_profiles(2, false, b));
    RandomStream c(4);
    const auto ps = sample_profiles(1000, false, c);
    for (std::size_t i = 0; i < ps.size(); ++i)
        for (std::size_t j = i + 1; j < ps.size(); ++j) {
            EmitterProfile q = ps[j];
            q.emitter_id = ps[i].emitter_id;
            EXPECT_FALSE(q == ps[i]);
        }
}

TEST(Profiles, RangesRespected) {
    RandomStream rng(5);
    const ImpairmentRanges r;
    for (const auto& p : sample_profiles(500, false, rng)) {
        EXPECT_LE(std::abs(p.iq_gain_mismatch), r.iq_gain);
        EXPECT_LE(std::abs(p.iq_phase_error_rad), r.iq_phase_rad);
        EXPECT_LE(std::abs(p.dc_offset), r.dc_magnitude);
        EXPECT_LE(std::abs(p.cfo_ppm), r.cfo_ppm);
        EXPECT_GE(p.pa_a3, r.pa_a3_lo);
        EXPECT_LE(p.pa_a3, r.pa_a3_hi);
        EXPECT_DOUBLE_EQ(p.carrier_hz, 433e6);
    }
}

TEST(Profiles, TooFewThrows) {
    RandomStream rng(1);
    EXPECT_THROW(sample_profiles(1, false, rng), Error);
}

TEST(Profiles, JsonFileRoundTrip) {
    RandomStream rng(8);
    const auto ps = sample_profiles(5, false, rng);
    const auto path = std::filesystem::temp_directory_path() / "txid_profiles_test.json";
    save_profiles(path, ps);
    EXPECT_EQ(load_profiles(path), ps);
    const auto j = nlohmann::json::parse(std::ifstream(path));
    for (const char* k : {"emitter_id", "iq_gain_mismatch", "iq_phase_error_rad", "dc_offset", "cfo_ppm",
                          "cfo_drift_ppm_per_s", "carrier_hz", "pa_a1", "pa_a3", "pa_phase3_rad_per_power",
                          "calibrated"})
        EXPECT_TRUE(j["profiles"][0].contains(k)) << k;
    std::filesystem::remove(path);
}

TEST(IqImbalance, NeutralIsIdentity) {
    const auto x = random_signal(256, 1);
    EXPECT_EQ(apply_iq_imbalance(x, neutral()), x);
}

TEST(IqImbalance, GainExample) {
    EmitterProfile p;
    p.iq_gain_mismatch = 0.1;
    const IqBuffer x(std::vector<cplx>{{1.0, 1.0}});
    const auto y = apply_iq_imbalance(x, p);
    EXPECT_NEAR(y[0].real(), 1.1, 1e-15);
    EXPECT_NEAR(y[0].imag(), 0.9, 1e-15);
}

TEST(IqImbalance, PhaseSkewFormula) {
    EmitterProfile p;
    p.iq_gain_mismatch = -0.02;
    p.iq_phase_error_rad = 0.3;
    const IqBuffer x(std::vector<cplx>{{0.5, -0.25}});
    const auto y = apply_iq_imbalance(x, p);
    EXPECT_NEAR(y[0].real(), 0.98 * 0.5, 1e-15);
    EXPECT_NEAR(y[0].imag(), 1.02 * (-0.25 * std::cos(0.3) + 0.5 * std::sin(0.3)), 1e-15);
}

TEST(IqImbalance, DcOffsetMean) {
    EmitterProfile p;
    p.dc_offset = {0.02, 0.0};
    const auto x = random_signal(100000, 2);
    const auto y = apply_iq_imbalance(x, p);
    cplx mean{};
    for (const auto& s : y) mean += s;
    mean /= static_cast<double>(y.size());
    // per-rail std of the mean: sqrt(0.5 / N)
    const double sigma = std::sqrt(0.5 / static_cast<double>(y.size()));
    EXPECT_NEAR(mean.real(), 0.02, 3 * sigma);
    EXPECT_NEAR(mean.imag(), 0.0, 3 * sigma);
}

TEST(IqImbalance, OriginPreservedWithoutDc) {
    EmitterProfile p;
    p.iq_gain_mismatch = 0.04;
    p.iq_phase_error_rad = -0.03;
    const IqBuffer x(std::vector<cplx>{{0.0, 0.0}});
    EXPECT_EQ(apply_iq_imbalance(x, p)[0], cplx{});
}

TEST(Pa, LinearIdentity) {
    const auto x = random_signal(256, 3, 0.5);
    EXPECT_EQ(apply_pa_nonlinearity(x, neutral()), x);
}

TEST(Pa, CompressionExample) {
    EmitterProfile p;
    p.pa_a3 = -0.01;
    const IqBuffer x(std::vector<cplx>{std::polar(1.0, 0.7)});
    const auto y = apply_pa_nonlinearity(x, p);
    EXPECT_NEAR(std::abs(y[0]), 0.99, 1e-15);
    EXPECT_NEAR(std::arg(y[0]), 0.7, 1e-15);
}

TEST(Pa, AnalyticDifferenceBetweenA3) {
    // Constant-modulus input r = 1 and k3 = 0: y_a - y_b = s (a3a - a3b),
    // so the mean squared difference is (a3a - a3b)^2.
    EmitterProfile a, b;
    a.pa_a3 = -0.05;
    b.pa_a3 = -0.005;
    RandomStream rng(4);
    IqBuffer x(560);
    for (auto& s : x) s = std::polar(1.0, rng.uniform(0.0, 2.0 * std::numbers::pi));
    const auto ya = apply_pa_nonlinearity(x, a), yb = apply_pa_nonlinearity(x, b);
    double msd = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) msd += std::norm(ya[i] - yb[i]);
    msd /= static_cast<double>(x.size());
    EXPECT_GT(msd, 0.0);
    EXPECT_NEAR(msd, 0.045 * 0.045, 1e-12);
}

TEST(Pa, PhaseCovariant) {
    EmitterProfile p;
    p.pa_a1 = 1.02;
    p.pa_a3 = -0.03;
    p.pa_phase3_rad_per_power = 0.04;
    const auto x = random_signal(128, 5, 0.8);
    const cplx rot = std::polar(1.0, 1.234);
    IqBuffer xr = x;
    for (auto& s : xr) s *= rot;
    const auto y = apply_pa_nonlinearity(x, p), yr = apply_pa_nonlinearity(xr, p);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(std::abs(yr[i] - y[i] * rot), 0.0, 1e-12);
}

TEST(Pa, AmPmRotation) {
    EmitterProfile p;
    p.pa_phase3_rad_per_power = 0.05;
    const IqBuffer x(std::vector<cplx>{{2.0, 0.0}});
    const auto y = apply_pa_nonlinearity(x, p);
    EXPECT_NEAR(std::arg(y[0]), 0.05 * 4.0, 1e-15);
    EXPECT_NEAR(std::abs(y[0]), 2.0, 1e-15);
}

TEST(Pa, OverdriveThrows) {
    EmitterProfile p;
    p.pa_a3 = -0.05;
    const double limit = std::sqrt(1.0 / 0.15);
    EXPECT_DOUBLE_EQ(p.pa_monotonic_limit(), limit);
    EXPECT_NO_THROW(apply_pa_nonlinearity(IqBuffer(std::vector<cplx>{{limit * 0.999, 0.0}}), p));
    try {
        apply_pa_nonlinearity(IqBuffer(std::vector<cplx>{{limit * 1.001, 0.0}}), p);
        FAIL();
    } catch (const Error& e) {
        EXPECT_STREQ(e.what(), "PA overdriven");
    }
}

TEST(Pa, OutputNeverExceedsCubicPeak) {
    EmitterProfile p;
    p.pa_a1 = 0.97;
    p.pa_a3 = -0.04;
    const double lim = p.pa_monotonic_limit();
    IqBuffer x(1001);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = {lim * static_cast<double>(i) / 1000.0, 0.0};
    const auto y = apply_pa_nonlinearity(x, p);
    for (const auto& s : y) EXPECT_LE(std::abs(s), p.pa_peak_output() * (1 + 1e-12));
}

TEST(Cfo, ZeroOffsetIdentity) {
    const auto x = random_signal(100, 6);
    EXPECT_EQ(apply_cfo(x, neutral(), 3.0), x);
}

TEST(Cfo, PhaseAdvanceOneMillisecond) {
    EmitterProfile p;
    p.cfo_ppm = 1.0;
    EXPECT_NEAR(cfo_hz(p, 0.0), 433.0, 1e-9);
    const IqBuffer x(std::vector<cplx>(5001, cplx{1.0, 0.0}));
    const auto y = apply_cfo(x, p, 0.0);
    const double expected = 2.0 * std::numbers::pi * 433.0 * 0.001;
    EXPECT_NEAR(std::arg(y[5000] * std::conj(y[0])), expected, 1e-9);
}

TEST(Cfo, DriftEvaluatedPerPacket) {
    EmitterProfile p;
    p.cfo_ppm = 1.0;
    p.cfo_drift_ppm_per_s = 0.01;
    EXPECT_NEAR(cfo_hz(p, 100.0), 433e6 * 2.0 * 1e-6, 1e-9);
}

TEST(Cfo, MagnitudePreserved) {
    EmitterProfile p;
    p.cfo_ppm = -1.7;
    const auto x = random_signal(1000, 7);
    const auto y = apply_cfo(x, p, 12.5);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(std::abs(y[i]), std::abs(x[i]), 1e-12);
}

TEST(Cfo, FftPeakOracle) {
    // Constant tone through the CFO; the FFT peak must sit within one bin of
    // the offset. Independent of the implementation's phase accumulation.
    const std::size_t n = 1u << 20;
    EmitterProfile p;
    p.cfo_ppm = 1.5;
    p.cfo_drift_ppm_per_s = 0.004;
    const double t0 = 20.0;
    const double f = 433e6 * (1.5 + 0.004 * t0) * 1e-6;
    const IqBuffer x(std::vector<cplx>(n, cplx{1.0, 0.0}));
    auto y = apply_cfo(x, p, t0);
    std::vector<cplx> spec(n);
    fftw_plan plan = fftw_plan_dft_1d(static_cast<int>(n), reinterpret_cast<fftw_complex*>(y.samples.data()),
                                      reinterpret_cast<fftw_complex*>(spec.data()), FFTW_FORWARD, FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
    std::size_t best = 0;
    for (std::size_t k = 1; k < n; ++k)
        if (std::abs(spec[k]) > std::abs(spec[best])) best = k;
    const double bin_hz = 5e6 / static_cast<double>(n);
    const double peak = (best < n / 2 ? static_cast<double>(best) : static_cast<double>(best) - n) * bin_hz;
    EXPECT_NEAR(peak, f, bin_hz);
}

TEST(Cfo, NegativeStartThrows) {
    EXPECT_THROW(apply_cfo(IqBuffer(4), neutral(), -1.0), Error);
}

TEST(Chain, NeutralIsIdentity) {
    const auto x = random_signal(1003, 8, 0.5);
    EXPECT_EQ(apply_emitter_chain(x, neutral(), 0.25), x);
}

TEST(Chain, EqualsManualComposition) {
    RandomStream rng(9);
    const auto ps = sample_profiles(4, false, rng);
    const auto x = random_signal(300, 10, 0.5);
    for (const auto& p : ps) {
        const auto manual = apply_cfo(apply_pa_nonlinearity(apply_iq_imbalance(x, p), p), p, 1.5);
        EXPECT_EQ(apply_emitter_chain(x, p, 1.5), manual);
        EXPECT_EQ(apply_emitter_chain(x, p, 1.5), apply_emitter_chain(x, p, 1.5));
    }
}

TEST(Chain, DistinctProfilesSeparate) {
    RandomStream rng(11);
    const auto ps = sample_profiles(21, false, rng);
    RandomStream prng(0);
    const auto payload = make_payload(PayloadKind::Static, 560, prng);
    std::vector<IqBuffer> out;
    for (const auto& p : ps) out.push_back(apply_emitter_chain(payload, p, 0.0));
    double min_dist = 1e9;
    for (std::size_t i = 0; i < out.size(); ++i)
        for (std::size_t j = i + 1; j < out.size(); ++j) {
            double d = 0.0;
            for (std::size_t n = 0; n < payload.size(); ++n) d += std::norm(out[i][n] - out[j][n]);
            min_dist = std::min(min_dist, std::sqrt(d / static_cast<double>(payload.size())));
        }
    EXPECT_GT(min_dist, 1e-3);
}
