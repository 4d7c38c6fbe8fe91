// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>

namespace weightscope {

// Deterministic PRNG used for every seeded draw in the toolkit, so that
// fixtures reproduce bit-for-bit across platforms and runs:
//
//   - generator: xoshiro256** with the four state words produced by feeding
//     the 64-bit seed through splitmix64,
//   - uniforms:  (next() >> 11) * 2^-53, i.e. doubles in [0, 1),
//   - gaussians: Box-Muller on consecutive uniform pairs, cosine branch
//     first, sine branch second.
class Xoshiro256StarStar {
  public:
    explicit Xoshiro256StarStar(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& word : state_) {
            // splitmix64
            x += 0x9e3779b97f4a7c15ull;
            std::uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
            word = z ^ (z >> 31);
        }
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  private:
    static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }
    std::uint64_t state_[4];
};

// Standard normal draws in a fixed order (Box-Muller, cached second branch).
class GaussianSource {
  public:
    explicit GaussianSource(std::uint64_t seed) : rng_(seed) {}
    explicit GaussianSource(Xoshiro256StarStar rng) : rng_(rng) {}

    double next() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = rng_.uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;  // log(0) guard
        const double u2 = rng_.uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(angle);
        has_spare_ = true;
        return r * std::cos(angle);
    }

    Xoshiro256StarStar& raw() { return rng_; }

  private:
    Xoshiro256StarStar rng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace weightscope
