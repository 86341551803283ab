// SPDX-License-Identifier: Apache-2.0
#pragma once

// Counter-based random numbers. Every draw is a pure function of
// (seed, stream, timestep, index), so results never depend on the order in
// which elements or trajectories are evaluated.

#include <cmath>
#include <cstdint>
#include <numbers>

#include "preditor/common.hpp"

namespace preditor {

enum class Stream : std::uint64_t {
    initial_noise = 1,
    ddim_noise = 2,
    sdedit_noise = 3,
    training = 4,
    dataset = 5,
    init_weights = 6,
    anchors = 7,
    evaluation = 8,
};

inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t counter_bits(std::uint64_t seed, Stream stream, std::uint64_t t,
                                  std::uint64_t index) {
    std::uint64_t h = mix64(seed ^ 0x243f6a8885a308d3ULL);
    h = mix64(h ^ (static_cast<std::uint64_t>(stream) * 0x13198a2e03707344ULL));
    h = mix64(h ^ (t * 0xa4093822299f31d0ULL));
    return mix64(h ^ index);
}

/// Maps 64 random bits to (0, 1]. The top bit pattern rounds to exactly 1.0
/// (probability 2^-53); log(u) stays finite, which is all Box-Muller needs.
inline double bits_to_unit(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

inline double counter_uniform(std::uint64_t seed, Stream stream, std::uint64_t t,
                              std::uint64_t index) {
    return bits_to_unit(counter_bits(seed, stream, t, index));
}

/// Standard normal via Box-Muller on two uniforms derived from one counter slot.
inline double counter_normal(std::uint64_t seed, Stream stream, std::uint64_t t,
                             std::uint64_t index) {
    const double u1 = counter_uniform(seed, stream, t, 2 * index);
    const double u2 = counter_uniform(seed, stream, t, 2 * index + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline Vector counter_normal_vector(std::uint64_t seed, Stream stream, std::uint64_t t,
                                    std::size_t n) {
    Vector v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = counter_normal(seed, stream, t, i);
    return v;
}

/// Sequential adaptor over the counter generator for loops that consume an
/// unbounded number of draws (training, dataset generation).
class CounterRng {
public:
    CounterRng(std::uint64_t seed, Stream stream, std::uint64_t lane = 0)
        : seed_(seed), stream_(stream), lane_(lane) {}

    std::uint64_t next_bits() { return counter_bits(seed_, stream_, lane_, counter_++); }
    double uniform() { return bits_to_unit(next_bits()); }

    double normal() {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_bits()) * n) >> 64);
    }

    bool bernoulli(double p) { return uniform() < p; }

private:
    std::uint64_t seed_;
    Stream stream_;
    std::uint64_t lane_;
    std::uint64_t counter_ = 0;
};

}  // namespace preditor
