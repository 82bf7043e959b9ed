// Price formation on top of lattice trajectories.
//
// The log return over a delay of tau rounds is S_tau = ED_tau / Lambda with
// excess demand ED_tau = N [M(t) - M(t - tau)]. A "day" is one tau-round
// window; prices are sampled at non-overlapping day boundaries. A fully
// ferromagnetic lattice (|M| >= m_trap) freezes the dynamics; the market
// maker breaks the trap by resetting the system to a paramagnetic state.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "spinmarket/errors.hpp"
#include "spinmarket/lattice.hpp"

namespace spinmarket {

struct MarketParams {
    double Lambda = 1024.0; // depth of market, > 0 (default N so S_tau = dM)
    std::int64_t tau = 1000; // delayed time in rounds (one trading day), >= 1
    double m_trap = 1.0;     // ferromagnetic-trap threshold on |M|, in (0, 1]

    void validate() const {
        if (!(Lambda > 0.0)) throw ConfigError("market.Lambda must be > 0");
        if (tau < 1) throw ConfigError("market.tau must be >= 1");
        if (!(m_trap > 0.0 && m_trap <= 1.0)) throw ConfigError("market.m_trap must be in (0, 1]");
    }
};

struct ResetEvent {
    std::int64_t round = 0; // measurement round index at which the trap fired
    double pre_reset_m = 0.0;
};

struct MarketSeries {
    // Magnetization history as recorded by the caller (possibly strided);
    // first entry is the round-0 anchor.
    std::vector<double> magnetization_per_round;
    std::vector<double> log_price; // one per day, index 0 = ln P0
    std::vector<double> returns;   // returns[k] = log_price[k+1] - log_price[k]
    std::vector<ResetEvent> resets;
};

// Excess demand ED = N (M_now - M_then) = sum_i [s_i(t) - s_i(t - tau)].
inline double excess_demand(double m_now, double m_then, std::int64_t n_agents) {
    return static_cast<double>(n_agents) * (m_now - m_then);
}

inline double log_return(double ed, double lambda_depth) {
    if (!(lambda_depth > 0.0)) throw ConfigError("market.Lambda must be > 0");
    return ed / lambda_depth;
}

// Samples the magnetization history every tau rounds and accumulates daily
// log prices. mag_per_round[0] is the round-0 anchor, mag_per_round[j] the
// magnetization after round j; at least 2*tau rounds are required.
MarketSeries build_price_series(std::span<const double> mag_per_round, const MarketParams& params,
                                std::int64_t n_agents, double p0 = 1.0);

// Same accumulation on pre-sampled day-boundary magnetizations (day_m[0] is
// the day-0 anchor). Used by the streaming engine, which never retains the
// full per-round history.
MarketSeries build_price_series_from_day_samples(std::span<const double> day_m, double lambda_depth,
                                                 std::int64_t n_agents, double p0 = 1.0);

// True iff |M| >= m_trap; the default m_trap = 1 means literal full alignment.
inline bool detect_trap(const LatticeState& lattice, double m_trap) {
    return std::abs(static_cast<double>(lattice.sum_spins())) >=
           m_trap * static_cast<double>(lattice.size());
}

// Exogenous market-maker intervention: redraw every spin i.i.d. uniform over
// {-1, 0, +1}. Returns the pre-reset magnetization; the caller logs the round.
inline double market_maker_reset(LatticeState& lattice, Rng& rng) {
    const double pre = lattice.magnetization();
    lattice.randomize(rng);
    return pre;
}

} // namespace spinmarket
