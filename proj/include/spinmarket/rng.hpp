// Deterministic PRNG used throughout the simulator.
//
// std::mt19937 + std::uniform_*_distribution produce implementation-defined
// streams, which breaks the byte-identical-output contract across toolchains.
// We use xoshiro256++ (Blackman & Vigna, public domain) seeded via splitmix64,
// with explicit bit-to-double and bounded-integer conversions so every draw is
// reproducible bit for bit.

#pragma once

#include <array>
#include <cstdint>

namespace spinmarket {

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

    // Independent stream for (seed, stream_id); used to give each replica its
    // own non-overlapping sequence.
    static Rng for_stream(std::uint64_t seed, std::uint64_t stream_id) {
        Rng r;
        r.reseed(seed + 0x9E3779B97F4A7C15ULL * (stream_id + 1));
        return r;
    }

    void reseed(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64_next(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Unbiased integer in [0, n); Lemire's multiply-with-rejection scheme.
    // For n a power of two the rejection branch never triggers.
    std::uint64_t uniform_below(std::uint64_t n) {
        unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < n) {
            const std::uint64_t threshold = (0 - n) % n;
            while (lo < threshold) {
                m = static_cast<unsigned __int128>(next_u64()) * n;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    std::array<std::uint64_t, 4> state() const { return state_; }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::array<std::uint64_t, 4> state_{};
};

} // namespace spinmarket
