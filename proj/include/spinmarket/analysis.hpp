// Loss-event extraction and Tsallis q-exponential fitting.
//
// Losses are days with return < -Q. Interoccurrence times r (whole days
// between consecutive losses) are fitted with the normalized discrete
// q-exponential P(r) ∝ [1 + (q-1) β r]^(-1/(q-1)), r = 1..r_max, by least
// squares in log space over log-spaced bins. q → 1 recovers the exponential.

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "spinmarket/errors.hpp"

namespace spinmarket {

struct LossAnalysis {
    double Q = 0.0;                       // loss threshold magnitude (> 0)
    std::vector<std::int64_t> event_days; // sorted days with returns[d] < -Q
    std::vector<std::int64_t> inter_times; // diffs of event_days, each >= 1
    double R_Q = 0.0;                     // mean interoccurrence time
    std::map<std::int64_t, double> pq;    // empirical pmf of inter_times, sums to 1
};

struct QExpFit {
    double q = 1.0;                // Tsallis parameter, >= 1
    double beta_scale = 0.0;       // q-exponential rate beta(R_Q), > 0
    double q0 = 0.17;              // directional coefficient used for the q(R_Q) law
    double rms_log_residual = 0.0; // rms of log-space bin residuals
};

// Unnormalized Eq.-(6) kernel; q == 1 is the exact exponential limit and the
// near-1 regime is evaluated through log1p so the limit is continuous.
double q_exponential(double r, double q, double beta_scale);

// q(R_Q) = 1 + q0 ln(R_Q / 2); domain R_Q >= 2.
double q_of_RQ(double R_Q, double q0);

// Sum_{r=1}^{R} kernel(r; q, beta). Exact loop for small R, Euler-Maclaurin
// tail for large R (needed since r_max can reach 1e8 for heavy-tailed fits).
double qexp_prefix_sum(double q, double beta_scale, std::int64_t R);

// Events are days with returns[d] < -Q (strict). Throws
// InsufficientEventsError when fewer than 2 events are found.
LossAnalysis extract_loss_events(std::span<const double> returns, double Q);

// Threshold whose loss events occur on ~1/target_RQ of all days: with
// m = floor(D / target_RQ), Q is just below -(m-th smallest return) so that
// ties at the quantile count as events. Throws CalibrationError when the
// quantile is nonnegative, and ConfigError on a degenerate target.
double calibrate_Q(std::span<const double> returns, double target_RQ);

// Integer histogram bin [lo, hi) on the interoccurrence axis.
struct LogBin {
    std::int64_t lo = 0;
    std::int64_t hi = 0;
    std::int64_t count = 0;
};

// Geometrically spaced integer bins (unit bins at small r), adjacent bins
// merged until each holds >= min_count events.
std::vector<LogBin> make_log_bins(std::span<const std::int64_t> inter_times, std::int64_t min_count = 5,
                                  double ratio = 1.35);

// Least-squares fit of (q, beta) in log space over log-binned masses, with
// the normalization fixed by discrete summation over r = 1..10*max(r).
// Requires >= 30 samples and >= 3 usable bins.
QExpFit fit_q_exponential(const LossAnalysis& analysis, double q0 = 0.17);
QExpFit fit_inter_times(std::span<const std::int64_t> inter_times, double q0 = 0.17);

// Fit directly on pre-binned (r, mass-per-unit-r) points, e.g. from an
// interoccurrence CSV. Every point is used; weights are uniform in log space.
QExpFit fit_binned_points(std::span<const std::pair<double, double>> points, double q0 = 0.17);

// Plot-ready view of one fitted distribution: per-bin representative r,
// empirical and fitted probability mass per unit r.
struct BinnedCurvePoint {
    double r = 0.0;
    double empirical_p = 0.0;
    double fitted_p = 0.0;
};

std::vector<BinnedCurvePoint> binned_curve(const LossAnalysis& analysis, const QExpFit& fit);

// Mass-per-unit-r of the normalized discrete law over the same bins, used for
// the paper-law overlay curves.
std::vector<double> binned_model_density(std::span<const LogBin> bins, double q, double beta_scale,
                                         std::int64_t r_max);

} // namespace spinmarket
