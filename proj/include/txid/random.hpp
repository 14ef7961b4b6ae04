// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstdint>
#include <random>
#include <string_view>

namespace txid {

/// Seeded pseudo-random source. Every stochastic operation in the library
/// takes one of these explicitly; there is no global generator.
///
/// Child streams derived with `fork` are independent of the parent's draw
/// position, so adding draws in one subsystem never perturbs another.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed = 0) : seed_(seed), engine_(mix(seed)) {}

    std::uint64_t seed() const { return seed_; }

    RandomStream fork(std::uint64_t tag) const { return RandomStream(mix(seed_ ^ mix(tag + 0x9e3779b97f4a7c15ULL))); }

    RandomStream fork(std::string_view tag) const {
        // FNV-1a
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (char c : tag) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
        return fork(h);
    }

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }

    double normal(double mean = 0.0, double stddev = 1.0) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }

    /// Circularly-symmetric complex Gaussian with total variance `variance`.
    std::complex<double> complex_normal(double variance) {
        std::normal_distribution<double> d(0.0, std::sqrt(variance / 2.0));
        double re = d(engine_);
        double im = d(engine_);
        return {re, im};
    }

    int bit() { return static_cast<int>(engine_() >> 63); }

    std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

    std::mt19937_64& engine() { return engine_; }

private:
    static std::uint64_t mix(std::uint64_t x) {
        // splitmix64 finalizer
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

} // namespace txid
