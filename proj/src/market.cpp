#include "spinmarket/market.hpp"

#include <cmath>
#include <stdexcept>

namespace spinmarket {

MarketSeries build_price_series_from_day_samples(std::span<const double> day_m, double lambda_depth,
                                                 std::int64_t n_agents, double p0) {
    if (!(lambda_depth > 0.0)) throw ConfigError("market.Lambda must be > 0");
    if (!(p0 > 0.0)) throw std::invalid_argument("initial price P0 must be > 0");
    if (day_m.size() < 2) throw std::invalid_argument("need at least one full day of history");

    MarketSeries series;
    series.log_price.reserve(day_m.size());
    series.returns.reserve(day_m.size() - 1);
    double ln_p = std::log(p0);
    series.log_price.push_back(ln_p);
    for (std::size_t d = 1; d < day_m.size(); ++d) {
        const double s = log_return(excess_demand(day_m[d], day_m[d - 1], n_agents), lambda_depth);
        series.returns.push_back(s);
        ln_p += s;
        series.log_price.push_back(ln_p);
    }
    return series;
}

MarketSeries build_price_series(std::span<const double> mag_per_round, const MarketParams& params,
                                std::int64_t n_agents, double p0) {
    params.validate();
    if (mag_per_round.empty()) throw std::invalid_argument("magnetization history is empty");

    const std::int64_t rounds = static_cast<std::int64_t>(mag_per_round.size()) - 1;
    if (rounds < 2 * params.tau) {
        throw std::invalid_argument("insufficient magnetization history: need at least 2*tau rounds");
    }

    const std::int64_t days = rounds / params.tau;
    std::vector<double> day_m;
    day_m.reserve(static_cast<std::size_t>(days) + 1);
    for (std::int64_t d = 0; d <= days; ++d) {
        day_m.push_back(mag_per_round[static_cast<std::size_t>(d * params.tau)]);
    }
    MarketSeries series = build_price_series_from_day_samples(day_m, params.Lambda, n_agents, p0);
    series.magnetization_per_round.assign(mag_per_round.begin(), mag_per_round.end());
    return series;
}

} // namespace spinmarket
