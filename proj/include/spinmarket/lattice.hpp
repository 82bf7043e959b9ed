// Spin lattice and the per-drawing update rule.
//
// Agents are three-state spins s in {-1, 0, +1} on an n x n torus. One
// drawing: pick a site uniformly at random, draw a private noise term eps,
// and set the spin to sgn_Y(I + eps) where I is the coupling-weighted sum of
// the four nearest neighbors and Y = lambda * |M| is the consensus threshold.
// A round is N = n*n consecutive drawings (1 MCS/spin).

#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "spinmarket/rng.hpp"

namespace spinmarket {

using Spin = std::int8_t;

inline bool is_valid_spin(int s) { return s == -1 || s == 0 || s == 1; }

// Three-way threshold characteristic:
//   -1  for x < -Y,   0  for -Y <= x < Y,   +1  for x >= Y.
// The boundaries are intentionally asymmetric; with Y == 0 the middle band is
// empty and x == 0 maps to +1. Non-finite x is a contract violation.
inline int threshold_sign(double x, double Y) {
    assert(std::isfinite(x) && Y >= 0.0);
    if (x < -Y) return -1;
    if (x < Y) return 0;
    return 1;
}

struct CouplingSpec {
    double J = 1.0; // uniform nearest-neighbor interaction strength, > 0

    void validate() const {
        if (!(J > 0.0)) throw std::invalid_argument("coupling J must be > 0");
    }
};

enum class ThresholdFreeze {
    kDrawing, // Y uses the magnetization current at each drawing (default)
    kRound,   // Y frozen at the round-start magnetization for all N drawings
};

struct DynamicsParams {
    double lambda = 2.0; // threshold amplitude, > 0
    ThresholdFreeze freeze = ThresholdFreeze::kDrawing;

    void validate() const {
        if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be > 0");
    }
};

class LatticeState {
public:
    // Uninitialized spins; callers use random() / uniform() instead.
    explicit LatticeState(int n) : n_(n) {
        if (n < 2) throw std::invalid_argument("lattice linear size n must be >= 2");
        size_ = static_cast<std::int64_t>(n) * n;
        spins_.assign(static_cast<std::size_t>(size_), 0);
        build_neighbor_table();
    }

    // i.i.d. uniform over {-1, 0, +1} (paramagnetic start).
    static LatticeState random(int n, Rng& rng) {
        LatticeState lat(n);
        lat.randomize(rng);
        return lat;
    }

    static LatticeState uniform(int n, Spin s) {
        if (!is_valid_spin(s)) throw std::invalid_argument("spin must be in {-1,0,+1}");
        LatticeState lat(n);
        for (auto& v : lat.spins_) v = s;
        lat.sum_spins_ = static_cast<std::int64_t>(s) * lat.size_;
        return lat;
    }

    void randomize(Rng& rng) {
        std::int64_t sum = 0;
        for (auto& v : spins_) {
            v = static_cast<Spin>(static_cast<int>(rng.uniform_below(3)) - 1);
            sum += v;
        }
        sum_spins_ = sum;
    }

    int n() const { return n_; }
    std::int64_t size() const { return size_; }
    std::int64_t sum_spins() const { return sum_spins_; }
    std::int64_t drawings_done() const { return drawings_done_; }
    Spin spin(std::int64_t i) const { return spins_[static_cast<std::size_t>(i)]; }
    std::span<const Spin> spins() const { return spins_; }
    std::vector<Spin> snapshot() const { return spins_; }

    double magnetization() const {
        return static_cast<double>(sum_spins_) / static_cast<double>(size_);
    }

    // Torus neighbors of site i in order left, right, up, down. On an n=2
    // torus opposite neighbors coincide; the table keeps the multiplicity.
    std::span<const std::uint32_t, 4> neighbors(std::int64_t i) const {
        return std::span<const std::uint32_t, 4>(&neighbors_[static_cast<std::size_t>(4 * i)], 4);
    }

    // Test/diagnostic hook; keeps the cached sum consistent.
    void set_spin(std::int64_t i, Spin s) {
        if (!is_valid_spin(s)) throw std::invalid_argument("spin must be in {-1,0,+1}");
        sum_spins_ += s - spins_[static_cast<std::size_t>(i)];
        spins_[static_cast<std::size_t>(i)] = s;
    }

    std::int64_t recompute_sum() const {
        std::int64_t sum = 0;
        for (Spin v : spins_) sum += v;
        return sum;
    }

    // --- engine internals below; public so the free-function operations can
    // stay non-friend without an extra indirection.

    void apply_update(std::int64_t site, Spin new_spin) {
        auto& cell = spins_[static_cast<std::size_t>(site)];
        sum_spins_ += new_spin - cell;
        cell = new_spin;
        ++drawings_done_;
    }

private:
    void build_neighbor_table() {
        neighbors_.resize(static_cast<std::size_t>(4 * size_));
        for (int r = 0; r < n_; ++r) {
            const int up = (r == 0 ? n_ - 1 : r - 1);
            const int down = (r == n_ - 1 ? 0 : r + 1);
            for (int c = 0; c < n_; ++c) {
                const int left = (c == 0 ? n_ - 1 : c - 1);
                const int right = (c == n_ - 1 ? 0 : c + 1);
                const std::size_t base = static_cast<std::size_t>(4) * (static_cast<std::size_t>(r) * n_ + c);
                neighbors_[base + 0] = static_cast<std::uint32_t>(r * n_ + left);
                neighbors_[base + 1] = static_cast<std::uint32_t>(r * n_ + right);
                neighbors_[base + 2] = static_cast<std::uint32_t>(up * n_ + c);
                neighbors_[base + 3] = static_cast<std::uint32_t>(down * n_ + c);
            }
        }
    }

    int n_;
    std::int64_t size_ = 0;
    std::vector<Spin> spins_;
    std::vector<std::uint32_t> neighbors_;
    std::int64_t sum_spins_ = 0;
    std::int64_t drawings_done_ = 0;
};

// Local social impact I_i = J * sum of the four neighbor spins.
inline double local_impact(const LatticeState& lattice, const CouplingSpec& coupling, std::int64_t i) {
    if (i < 0 || i >= lattice.size()) throw std::out_of_range("site index out of range");
    const auto nb = lattice.neighbors(i);
    const int s = lattice.spin(nb[0]) + lattice.spin(nb[1]) + lattice.spin(nb[2]) + lattice.spin(nb[3]);
    return coupling.J * s;
}

struct DrawingRecord {
    std::int64_t site = 0;
    Spin old_spin = 0;
    Spin new_spin = 0;
};

struct RoundSummary {
    double magnetization = 0.0;
    std::int64_t opinion_changes = 0;
};

// Opinion change of one agent between consecutive updates of its spin.
struct ActivityRecord {
    std::int64_t site = 0;
    int d = 0; // s_new - s_old in {-2..+2}; d > 0 demand, d < 0 supply
};

namespace detail {

// Deterministic core of one drawing: site and noise already chosen,
// |M| supplied by the caller (current or round-frozen).
inline DrawingRecord apply_drawing(LatticeState& lattice, const DynamicsParams& params,
                                   const CouplingSpec& coupling, std::int64_t site, double eps,
                                   double abs_m) {
    const auto nb = lattice.neighbors(site);
    const int nsum = lattice.spin(nb[0]) + lattice.spin(nb[1]) + lattice.spin(nb[2]) + lattice.spin(nb[3]);
    const double x = coupling.J * nsum + eps;
    const double Y = params.lambda * abs_m;
    DrawingRecord rec;
    rec.site = site;
    rec.old_spin = lattice.spin(site);
    rec.new_spin = static_cast<Spin>(threshold_sign(x, Y));
    lattice.apply_update(site, rec.new_spin);
    return rec;
}

} // namespace detail

// One drawing with a random site and the magnetization current at call time.
// NoiseFn is any callable double(Rng&).
template <typename NoiseFn>
DrawingRecord drawing(LatticeState& lattice, const DynamicsParams& params, const CouplingSpec& coupling,
                      NoiseFn&& noise, Rng& rng) {
    const auto site = static_cast<std::int64_t>(rng.uniform_below(static_cast<std::uint64_t>(lattice.size())));
    const double eps = noise(rng);
    const double abs_m = std::abs(lattice.magnetization());
    return detail::apply_drawing(lattice, params, coupling, site, eps, abs_m);
}

// One round: exactly N drawings, sites uniform with replacement. Under
// ThresholdFreeze::kRound the threshold uses |M| at round start; the
// magnetization cache itself is always kept current. Per-drawing activity
// records (including d = 0) are appended to *activity when supplied.
template <typename NoiseFn>
RoundSummary run_round(LatticeState& lattice, const DynamicsParams& params, const CouplingSpec& coupling,
                       NoiseFn&& noise, Rng& rng, std::vector<ActivityRecord>* activity = nullptr) {
    const std::int64_t N = lattice.size();
    const double n_d = static_cast<double>(N);
    // For power-of-two N, multiplying by 1/N is exact and equals division.
    const bool pow2 = (N & (N - 1)) == 0;
    const double inv_n = 1.0 / n_d;
    const bool frozen = params.freeze == ThresholdFreeze::kRound;
    const double frozen_abs_m = std::abs(lattice.magnetization());

    RoundSummary summary;
    for (std::int64_t k = 0; k < N; ++k) {
        const auto site = static_cast<std::int64_t>(rng.uniform_below(static_cast<std::uint64_t>(N)));
        const double eps = noise(rng);
        double abs_m = frozen_abs_m;
        if (!frozen) {
            const double abs_sum = std::abs(static_cast<double>(lattice.sum_spins()));
            abs_m = pow2 ? abs_sum * inv_n : abs_sum / n_d;
        }
        const DrawingRecord rec = detail::apply_drawing(lattice, params, coupling, site, eps, abs_m);
        if (rec.new_spin != rec.old_spin) ++summary.opinion_changes;
        if (activity) activity->push_back({site, rec.new_spin - rec.old_spin});
    }
    summary.magnetization = lattice.magnetization();
    return summary;
}

} // namespace spinmarket
