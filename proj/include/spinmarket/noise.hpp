// Heavy-tailed private-opinion noise.
//
// Two-sided discrete Weierstrass hierarchy: a level j >= 0 is drawn with
// geometric probability P(j) = (1 - 1/K) K^-j, the magnitude is b0 * b^j and
// the sign is +/-1 equiprobable. The complementary CDF of |eps| at b0*b^j is
// exactly K^-j, i.e. a Pareto tail with exponent ln K / ln b.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "spinmarket/errors.hpp"
#include "spinmarket/rng.hpp"

namespace spinmarket {

struct WmNoiseParams {
    double K = 5.0;   // level-probability base, > 1
    double b = 2.0;   // magnitude base, > 1
    double b0 = 0.2;  // base magnitude, > 0

    void validate() const {
        if (!(K > 1.0)) throw ConfigError("noise.K must be > 1");
        if (!(b > 1.0)) throw ConfigError("noise.b must be > 1");
        if (!(b0 > 0.0)) throw ConfigError("noise.b0 must be > 0");
    }

    // Tail exponent of P(|eps| >= x) ~ x^-beta.
    double pareto_exponent() const { return std::log(K) / std::log(b); }

    // E[eps^2] = b0^2 (1 - 1/K) / (1 - b^2/K); finite only for b^2 < K.
    bool second_moment_finite() const { return b * b < K; }
    double second_moment() const {
        return b0 * b0 * (1.0 - 1.0 / K) / (1.0 - b * b / K);
    }
};

class WmNoiseSampler {
public:
    // Levels above kMaxLevel are folded into it; P(hit) = K^-64, negligible
    // for any K > 1 of interest, but it bounds the magnitude table.
    static constexpr int kMaxLevel = 64;

    explicit WmNoiseSampler(const WmNoiseParams& params) : params_(params) {
        params_.validate();
        inv_K_ = 1.0 / params_.K;
        double mag = params_.b0;
        for (int j = 0; j <= kMaxLevel; ++j) {
            magnitude_[j] = mag;
            mag *= params_.b;
        }
    }

    const WmNoiseParams& params() const { return params_; }

    // P(level >= j) = K^-j, so the level is the number of nested thresholds
    // 1/K, 1/K^2, ... that a single uniform draw falls below.
    int level_from_uniform(double u) const {
        int j = 0;
        double t = inv_K_;
        while (u < t && j < kMaxLevel) {
            ++j;
            t *= inv_K_;
        }
        return j;
    }

    int sample_level(Rng& rng) { return level_from_uniform(rng.uniform_double()); }

    // One u64 per draw: bit 0 selects the sign, the top 53 bits form the
    // level uniform.
    double sample(Rng& rng) {
        const std::uint64_t word = rng.next_u64();
        const double u = static_cast<double>(word >> 11) * 0x1.0p-53;
        const double mag = magnitude_[level_from_uniform(u)];
        return (word & 1u) ? mag : -mag;
    }

private:
    WmNoiseParams params_;
    double inv_K_ = 0.0;
    std::array<double, kMaxLevel + 1> magnitude_{};
};

} // namespace spinmarket
