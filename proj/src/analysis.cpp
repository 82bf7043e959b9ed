#include "spinmarket/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace spinmarket {

namespace {

constexpr std::int64_t kDirectCut = 4096;
constexpr double kTinyKernel = 1e-300;

void validate_kernel_params(double q, double beta_scale) {
    if (!(beta_scale > 0.0)) throw std::domain_error("beta_scale must be > 0");
    if (!(q >= 1.0)) throw std::domain_error("q must be >= 1 (q = 1 is the exponential limit)");
}

double kernel(double r, double q, double beta) {
    if (q == 1.0) return std::exp(-beta * r);
    return std::exp(-std::log1p((q - 1.0) * beta * r) / (q - 1.0));
}

// Geometric prefix sum_{r=1}^{R} e^(-beta r), stable for small beta.
double exp_prefix(double beta, std::int64_t R) {
    const double denom = -std::expm1(-beta);
    return std::exp(-beta) * (-std::expm1(-beta * static_cast<double>(R))) / denom;
}

// Euler-Maclaurin estimate of sum_{r=a}^{b} (1 + c r)^(-m) for integer
// a <= b, valid far from the origin where f is smooth and slowly varying.
double em_powerlaw_sum(double c, double m, double a, double b) {
    const auto f = [&](double x) { return std::exp(-m * std::log1p(c * x)); };
    const auto fp = [&](double x) { return -m * c * std::exp(-(m + 1.0) * std::log1p(c * x)); };
    const auto fppp = [&](double x) {
        return -m * (m + 1.0) * (m + 2.0) * c * c * c * std::exp(-(m + 3.0) * std::log1p(c * x));
    };
    double integral;
    if (m == 1.0) {
        integral = (std::log1p(c * b) - std::log1p(c * a)) / c;
    } else {
        integral = (std::exp((1.0 - m) * std::log1p(c * b)) - std::exp((1.0 - m) * std::log1p(c * a))) /
                   (c * (1.0 - m));
    }
    return integral + 0.5 * (f(a) + f(b)) + (fp(b) - fp(a)) / 12.0 - (fppp(b) - fppp(a)) / 720.0;
}

// Prefix sums of the kernel at several (sorted, distinct, nonnegative)
// support points, shared across one objective evaluation.
void prefix_sums_at(double q, double beta, std::span<const std::int64_t> points, std::vector<double>& out) {
    out.assign(points.size(), 0.0);
    if (points.empty()) return;

    if (q == 1.0) {
        for (std::size_t i = 0; i < points.size(); ++i) {
            out[i] = points[i] <= 0 ? 0.0 : exp_prefix(beta, points[i]);
        }
        return;
    }

    const double c = (q - 1.0) * beta;
    const double m = 1.0 / (q - 1.0);
    const std::int64_t max_point = points.back();
    const std::int64_t direct_end = std::min(max_point, kDirectCut);

    double running = 0.0;
    std::size_t idx = 0;
    while (idx < points.size() && points[idx] <= 0) out[idx++] = 0.0;

    std::int64_t r = 1;
    for (; r <= direct_end; ++r) {
        const double k = kernel(static_cast<double>(r), q, beta);
        running += k;
        while (idx < points.size() && points[idx] == r) out[idx++] = running;
        // Once the kernel underflows the remaining tail is numerically zero.
        if (k < kTinyKernel) break;
    }
    for (; idx < points.size(); ++idx) {
        const std::int64_t p = points[idx];
        if (p <= r) {
            out[idx] = running; // inside the truncated region
        } else {
            out[idx] = running + em_powerlaw_sum(c, m, static_cast<double>(r) + 1.0, static_cast<double>(p));
        }
    }
}

} // namespace

double q_exponential(double r, double q, double beta_scale) {
    validate_kernel_params(q, beta_scale);
    if (!(r >= 0.0)) throw std::domain_error("r must be >= 0");
    const double bracket = 1.0 + (q - 1.0) * beta_scale * r;
    if (!(bracket > 0.0)) throw std::domain_error("q-exponential bracket must be positive");
    return kernel(r, q, beta_scale);
}

double q_of_RQ(double R_Q, double q0) {
    if (!(R_Q >= 2.0)) throw std::domain_error("q(R_Q) law requires R_Q >= 2");
    return 1.0 + q0 * std::log(R_Q / 2.0);
}

double qexp_prefix_sum(double q, double beta_scale, std::int64_t R) {
    validate_kernel_params(q, beta_scale);
    if (R <= 0) return 0.0;
    std::vector<double> out;
    const std::int64_t pts[1] = {R};
    prefix_sums_at(q, beta_scale, pts, out);
    return out[0];
}

LossAnalysis extract_loss_events(std::span<const double> returns, double Q) {
    if (!(Q > 0.0)) throw std::invalid_argument("loss threshold Q must be > 0");
    LossAnalysis out;
    out.Q = Q;
    for (std::int64_t d = 0; d < static_cast<std::int64_t>(returns.size()); ++d) {
        if (returns[static_cast<std::size_t>(d)] < -Q) out.event_days.push_back(d);
    }
    if (out.event_days.size() < 2) {
        throw InsufficientEventsError(
            "insufficient loss events below -Q: found " + std::to_string(out.event_days.size()) +
                ", need at least 2",
            out.event_days.size());
    }
    out.inter_times.reserve(out.event_days.size() - 1);
    double sum = 0.0;
    for (std::size_t k = 1; k < out.event_days.size(); ++k) {
        const std::int64_t r = out.event_days[k] - out.event_days[k - 1];
        out.inter_times.push_back(r);
        sum += static_cast<double>(r);
    }
    out.R_Q = sum / static_cast<double>(out.inter_times.size());
    const double w = 1.0 / static_cast<double>(out.inter_times.size());
    for (const std::int64_t r : out.inter_times) out.pq[r] += w;
    return out;
}

double calibrate_Q(std::span<const double> returns, double target_RQ) {
    if (returns.empty()) throw std::invalid_argument("returns sequence is empty");
    if (!(target_RQ >= 1.0)) throw ConfigError("analysis.target_RQ must be >= 1");
    const auto days = static_cast<double>(returns.size());
    const auto m = static_cast<std::int64_t>(std::floor(days / target_RQ));
    if (m < 1) {
        throw ConfigError("target_RQ " + std::to_string(target_RQ) +
                          " admits no loss threshold for " + std::to_string(returns.size()) + " days");
    }
    std::vector<double> sorted(returns.begin(), returns.end());
    std::nth_element(sorted.begin(), sorted.begin() + (m - 1), sorted.end());
    const double v = sorted[static_cast<std::size_t>(m - 1)];
    // Q sits just below -v so ties at the quantile stay inside the event set.
    const double Q = -std::nextafter(v, std::numeric_limits<double>::infinity());
    if (!(Q > 0.0)) {
        std::size_t negatives = 0;
        for (const double x : returns) negatives += (x < 0.0);
        throw CalibrationError("loss quantile for target_RQ " + std::to_string(target_RQ) +
                                   " is nonnegative; the return distribution lacks enough losses",
                               negatives);
    }
    return Q;
}

std::vector<LogBin> make_log_bins(std::span<const std::int64_t> inter_times, std::int64_t min_count,
                                  double ratio) {
    std::vector<LogBin> merged;
    if (inter_times.empty()) return merged;
    std::vector<std::int64_t> sorted(inter_times.begin(), inter_times.end());
    std::sort(sorted.begin(), sorted.end());
    const std::int64_t r_max = sorted.back();

    std::vector<std::int64_t> edges;
    for (std::int64_t e = 1; e <= r_max;) {
        edges.push_back(e);
        e = std::max(e + 1, static_cast<std::int64_t>(std::ceil(static_cast<double>(e) * ratio)));
    }
    edges.push_back(r_max + 1);

    LogBin pending{edges[0], edges[0], 0};
    for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
        const auto lo_it = std::lower_bound(sorted.begin(), sorted.end(), edges[k]);
        const auto hi_it = std::lower_bound(sorted.begin(), sorted.end(), edges[k + 1]);
        pending.hi = edges[k + 1];
        pending.count += static_cast<std::int64_t>(hi_it - lo_it);
        if (pending.count >= min_count) {
            merged.push_back(pending);
            pending = LogBin{edges[k + 1], edges[k + 1], 0};
        }
    }
    if (pending.count > 0) {
        if (!merged.empty()) {
            merged.back().hi = pending.hi;
            merged.back().count += pending.count;
        } else {
            merged.push_back(pending);
        }
    }
    return merged;
}

namespace {

// Log-space SSE between empirical and model bin masses for one (q, beta).
class BinObjective {
public:
    BinObjective(std::span<const LogBin> bins, double n_samples, std::int64_t r_max)
        : bins_(bins.begin(), bins.end()), n_samples_(n_samples), r_max_(r_max) {
        for (const auto& b : bins_) {
            points_.push_back(b.lo - 1);
            points_.push_back(b.hi - 1);
        }
        points_.push_back(r_max_);
        std::sort(points_.begin(), points_.end());
        points_.erase(std::unique(points_.begin(), points_.end()), points_.end());
    }

    std::size_t n_bins() const { return bins_.size(); }

    double operator()(double q, double beta) const {
        prefix_sums_at(q, beta, points_, scratch_);
        const double total = sum_at(r_max_);
        if (!(total > 0.0)) return std::numeric_limits<double>::infinity();
        double sse = 0.0;
        for (const auto& b : bins_) {
            const double model_mass = (sum_at(b.hi - 1) - sum_at(b.lo - 1)) / total;
            if (!(model_mass > 0.0)) return std::numeric_limits<double>::infinity();
            const double emp_mass = static_cast<double>(b.count) / n_samples_;
            const double resid = std::log(emp_mass) - std::log(model_mass);
            sse += resid * resid;
        }
        return sse;
    }

private:
    double sum_at(std::int64_t p) const {
        const auto it = std::lower_bound(points_.begin(), points_.end(), p);
        return scratch_[static_cast<std::size_t>(it - points_.begin())];
    }

    std::vector<LogBin> bins_;
    double n_samples_;
    std::int64_t r_max_;
    std::vector<std::int64_t> points_;
    mutable std::vector<double> scratch_;
};

struct GridPoint {
    double q = 1.0;
    double log_beta = 0.0;
    double sse = std::numeric_limits<double>::infinity();
};

constexpr double kQLo = 1.0;
constexpr double kQHi = 2.5;
constexpr double kLogBetaLo = -9.2103403719761836; // ln 1e-4
constexpr double kLogBetaHi = 2.302585092994046;   // ln 10

template <typename Fn>
GridPoint grid_scan(const Fn& objective, double q_lo, double q_hi, int nq, double lb_lo, double lb_hi,
                    int nb) {
    GridPoint best;
    for (int i = 0; i < nq; ++i) {
        const double q = q_lo + (q_hi - q_lo) * i / (nq - 1);
        for (int j = 0; j < nb; ++j) {
            const double lb = lb_lo + (lb_hi - lb_lo) * j / (nb - 1);
            const double sse = objective(q, std::exp(lb));
            if (sse < best.sse) best = {q, lb, sse};
        }
    }
    return best;
}

// Deterministic coarse-to-fine grid minimization over (q, ln beta). The
// objective is smooth and cheap, so three zoom levels reach ~1e-3 precision
// in q without the fragility of a free-form simplex.
template <typename Fn>
GridPoint grid_zoom_minimize(const Fn& objective) {
    GridPoint best = grid_scan(objective, kQLo, kQHi, 31, kLogBetaLo, kLogBetaHi, 41);
    double dq = (kQHi - kQLo) / 30.0;
    double dlb = (kLogBetaHi - kLogBetaLo) / 40.0;
    for (int level = 0; level < 3; ++level) {
        const double q_lo = std::max(kQLo, best.q - 1.5 * dq);
        const double q_hi = std::min(kQHi, best.q + 1.5 * dq);
        const double lb_lo = std::max(kLogBetaLo, best.log_beta - 1.5 * dlb);
        const double lb_hi = std::min(kLogBetaHi, best.log_beta + 1.5 * dlb);
        best = grid_scan(objective, q_lo, q_hi, 21, lb_lo, lb_hi, 21);
        dq = (q_hi - q_lo) / 20.0;
        dlb = (lb_hi - lb_lo) / 20.0;
    }
    return best;
}

} // namespace

QExpFit fit_inter_times(std::span<const std::int64_t> inter_times, double q0) {
    if (inter_times.size() < 30) {
        throw InsufficientEventsError("q-exponential fit needs >= 30 interoccurrence samples, got " +
                                          std::to_string(inter_times.size()),
                                      inter_times.size());
    }
    const auto bins = make_log_bins(inter_times);
    if (bins.size() < 3) {
        throw FitError("degenerate binning: only " + std::to_string(bins.size()) +
                       " usable bins (need >= 3)");
    }
    const std::int64_t r_obs_max = *std::max_element(inter_times.begin(), inter_times.end());
    const BinObjective objective(bins, static_cast<double>(inter_times.size()), 10 * r_obs_max);
    const GridPoint best = grid_zoom_minimize(objective);

    QExpFit fit;
    fit.q = best.q;
    fit.beta_scale = std::exp(best.log_beta);
    fit.q0 = q0;
    fit.rms_log_residual = std::sqrt(best.sse / static_cast<double>(objective.n_bins()));
    return fit;
}

QExpFit fit_q_exponential(const LossAnalysis& analysis, double q0) {
    return fit_inter_times(analysis.inter_times, q0);
}

QExpFit fit_binned_points(std::span<const std::pair<double, double>> points, double q0) {
    std::vector<std::pair<double, double>> usable;
    for (const auto& [r, p] : points) {
        if (r >= 1.0 && p > 0.0) usable.push_back({r, p});
    }
    if (usable.size() < 3) {
        throw InsufficientEventsError("binned q-exponential fit needs >= 3 positive points, got " +
                                          std::to_string(usable.size()),
                                      usable.size());
    }
    double r_max_obs = 1.0;
    for (const auto& [r, p] : usable) r_max_obs = std::max(r_max_obs, r);
    const auto r_max = static_cast<std::int64_t>(10.0 * r_max_obs);

    const auto objective = [&](double q, double beta) {
        const double total = qexp_prefix_sum(q, beta, r_max);
        if (!(total > 0.0)) return std::numeric_limits<double>::infinity();
        double sse = 0.0;
        for (const auto& [r, p] : usable) {
            const double model = kernel(r, q, beta) / total;
            if (!(model > 0.0)) return std::numeric_limits<double>::infinity();
            const double resid = std::log(p) - std::log(model);
            sse += resid * resid;
        }
        return sse;
    };
    const GridPoint best = grid_zoom_minimize(objective);

    QExpFit fit;
    fit.q = best.q;
    fit.beta_scale = std::exp(best.log_beta);
    fit.q0 = q0;
    fit.rms_log_residual = std::sqrt(best.sse / static_cast<double>(usable.size()));
    return fit;
}

std::vector<double> binned_model_density(std::span<const LogBin> bins, double q, double beta_scale,
                                         std::int64_t r_max) {
    validate_kernel_params(q, beta_scale);
    const double total = qexp_prefix_sum(q, beta_scale, r_max);
    std::vector<double> out;
    out.reserve(bins.size());
    for (const auto& b : bins) {
        const double mass =
            (qexp_prefix_sum(q, beta_scale, b.hi - 1) - qexp_prefix_sum(q, beta_scale, b.lo - 1)) / total;
        out.push_back(mass / static_cast<double>(b.hi - b.lo));
    }
    return out;
}

std::vector<BinnedCurvePoint> binned_curve(const LossAnalysis& analysis, const QExpFit& fit) {
    const auto bins = make_log_bins(analysis.inter_times);
    const std::int64_t r_obs_max =
        *std::max_element(analysis.inter_times.begin(), analysis.inter_times.end());
    const auto fitted = binned_model_density(bins, fit.q, fit.beta_scale, 10 * r_obs_max);

    std::vector<BinnedCurvePoint> out;
    out.reserve(bins.size());
    const double n = static_cast<double>(analysis.inter_times.size());
    for (std::size_t i = 0; i < bins.size(); ++i) {
        BinnedCurvePoint pt;
        // Geometric mean of the integers covered by the bin.
        pt.r = std::sqrt(static_cast<double>(bins[i].lo) * static_cast<double>(bins[i].hi - 1));
        const double width = static_cast<double>(bins[i].hi - bins[i].lo);
        pt.empirical_p = static_cast<double>(bins[i].count) / (n * width);
        pt.fitted_p = fitted[i];
        out.push_back(pt);
    }
    return out;
}

} // namespace spinmarket
