// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>

#include "driftforge/common.hpp"

namespace driftforge {

inline u64 splitmix64(u64& state) {
    u64 z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// xoshiro256** seeded via splitmix64. Identical seed gives an identical
// stream of draws; streams for distinct purposes are derived with
// Rng::derive so that consumers never share a cursor.
class Rng {
public:
    explicit Rng(u64 seed) {
        u64 sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
        seed_ = seed;
    }

    u64 seed() const { return seed_; }
    u64 draws() const { return draws_; }

    u64 next_u64() {
        ++draws_;
        const u64 result = rotl(s_[1] * 5, 7) * 9;
        const u64 t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n).
    i64 uniform_int(i64 n) {
        DF_CHECK(n > 0, "uniform_int: n must be positive, got " << n);
        return static_cast<i64>(next_u64() % static_cast<u64>(n));
    }

    // Standard normal via Box-Muller (second value cached).
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        cached_ = r * std::sin(theta);
        has_cached_ = true;
        return r * std::cos(theta);
    }

    // Independent stream for a named purpose (tag chosen by the caller).
    Rng derive(u64 tag) const {
        u64 sm = seed_ ^ (0xa076'1d64'78bd'642fULL + tag * 0xe703'7ed1'a0b4'28dbULL);
        return Rng(splitmix64(sm));
    }

private:
    static u64 rotl(u64 x, int k) { return (x << k) | (x >> (64 - k)); }

    u64 s_[4]{};
    u64 seed_ = 0;
    u64 draws_ = 0;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace driftforge
