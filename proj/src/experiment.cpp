#include "spinmarket/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <memory>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "spinmarket/io.hpp"

namespace spinmarket {

const double kPaperBetaPlateau = 0.20;

std::string format_rq_label(double target_RQ) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", target_RQ);
    return buf;
}

std::string code_version() {
#ifdef SPINMARKET_VERSION
    return "spinmarket " SPINMARKET_VERSION;
#else
    return "spinmarket (unversioned)";
#endif
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

double parse_real(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing characters");
        return x;
    } catch (const std::exception&) {
        throw ConfigError(key + ": cannot parse '" + value + "' as a real number");
    }
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const std::int64_t x = std::stoll(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing characters");
        return x;
    } catch (const std::exception&) {
        throw ConfigError(key + ": cannot parse '" + value + "' as an integer");
    }
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const std::uint64_t x = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing characters");
        return x;
    } catch (const std::exception&) {
        throw ConfigError(key + ": cannot parse '" + value + "' as an unsigned integer");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "on") return true;
    if (value == "false" || value == "0" || value == "off") return false;
    throw ConfigError(key + ": cannot parse '" + value + "' as a boolean");
}

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

} // namespace

void ExperimentConfig::apply_key_value(const std::string& key, const std::string& value) {
    if (key == "model.n") {
        n = static_cast<int>(parse_int(key, value));
    } else if (key == "model.J") {
        J = parse_real(key, value);
    } else if (key == "model.lambda") {
        lambda = parse_real(key, value);
    } else if (key == "noise.K") {
        noise.K = parse_real(key, value);
    } else if (key == "noise.b") {
        noise.b = parse_real(key, value);
    } else if (key == "noise.b0") {
        noise.b0 = parse_real(key, value);
    } else if (key == "market.Lambda") {
        if (value == "auto") {
            Lambda.reset();
        } else {
            Lambda = parse_real(key, value);
        }
    } else if (key == "market.tau") {
        tau = parse_int(key, value);
    } else if (key == "market.m_trap") {
        m_trap = parse_real(key, value);
    } else if (key == "market.threshold_freeze") {
        if (value == "drawing") {
            threshold_freeze = ThresholdFreeze::kDrawing;
        } else if (value == "round") {
            threshold_freeze = ThresholdFreeze::kRound;
        } else {
            throw ConfigError("market.threshold_freeze must be 'drawing' or 'round', got '" + value + "'");
        }
    } else if (key == "run.warmup_rounds") {
        warmup_rounds = parse_int(key, value);
    } else if (key == "run.total_days") {
        total_days = parse_int(key, value);
    } else if (key == "run.seed") {
        seed = parse_uint(key, value);
    } else if (key == "run.replicas") {
        replicas = static_cast<int>(parse_int(key, value));
    } else if (key == "run.record_activity") {
        record_activity = parse_bool(key, value);
    } else if (key == "analysis.target_RQ") {
        std::vector<double> targets;
        std::stringstream ss(value);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (!item.empty()) targets.push_back(parse_real(key, item));
        }
        if (targets.empty()) throw ConfigError("analysis.target_RQ: empty list");
        target_RQ = std::move(targets);
    } else if (key == "analysis.q0") {
        q0 = parse_real(key, value);
    } else if (key == "output.dir") {
        output_dir = value;
    } else if (key == "output.rounds_stride") {
        rounds_stride = parse_int(key, value);
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

std::map<std::string, std::string> ExperimentConfig::to_key_values() const {
    std::map<std::string, std::string> kv;
    kv["model.n"] = std::to_string(n);
    kv["model.J"] = format_real(J);
    kv["model.lambda"] = format_real(lambda);
    kv["noise.K"] = format_real(noise.K);
    kv["noise.b"] = format_real(noise.b);
    kv["noise.b0"] = format_real(noise.b0);
    kv["market.Lambda"] = Lambda ? format_real(*Lambda) : std::string("auto");
    kv["market.tau"] = std::to_string(tau);
    kv["market.m_trap"] = format_real(m_trap);
    kv["market.threshold_freeze"] = threshold_freeze == ThresholdFreeze::kRound ? "round" : "drawing";
    kv["run.warmup_rounds"] = std::to_string(warmup_rounds);
    kv["run.total_days"] = std::to_string(total_days);
    kv["run.seed"] = std::to_string(seed);
    kv["run.replicas"] = std::to_string(replicas);
    kv["run.record_activity"] = record_activity ? "true" : "false";
    std::string targets;
    for (std::size_t i = 0; i < target_RQ.size(); ++i) {
        if (i) targets += ',';
        targets += format_real(target_RQ[i]);
    }
    kv["analysis.target_RQ"] = targets;
    kv["analysis.q0"] = format_real(q0);
    kv["output.dir"] = output_dir;
    kv["output.rounds_stride"] = std::to_string(rounds_stride);
    return kv;
}

void ExperimentConfig::validate(std::vector<std::string>* warnings) const {
    std::vector<std::string> violations;
    if (n < 2) violations.push_back("model.n must be >= 2");
    if (!(J > 0.0)) violations.push_back("model.J must be > 0");
    if (!(lambda > 0.0)) violations.push_back("model.lambda must be > 0");
    if (!(noise.K > 1.0)) violations.push_back("noise.K must be > 1");
    if (!(noise.b > 1.0)) violations.push_back("noise.b must be > 1");
    if (!(noise.b0 > 0.0)) violations.push_back("noise.b0 must be > 0");
    if (Lambda && !(*Lambda > 0.0)) violations.push_back("market.Lambda must be > 0");
    if (tau < 1) violations.push_back("market.tau must be >= 1");
    if (!(m_trap > 0.0 && m_trap <= 1.0)) violations.push_back("market.m_trap must be in (0, 1]");
    if (warmup_rounds < 0) violations.push_back("run.warmup_rounds must be >= 0");
    if (total_days < 1) violations.push_back("run.total_days must be >= 1");
    if (replicas < 1) violations.push_back("run.replicas must be >= 1");
    if (target_RQ.empty()) violations.push_back("analysis.target_RQ must be nonempty");
    for (const double t : target_RQ) {
        if (!(t >= 1.0)) {
            violations.push_back("analysis.target_RQ entries must be >= 1 (got " + format_rq_label(t) + ")");
            break;
        }
    }
    if (!std::isfinite(q0)) violations.push_back("analysis.q0 must be finite");
    if (output_dir.empty()) violations.push_back("output.dir must be nonempty");
    if (rounds_stride < 1) violations.push_back("output.rounds_stride must be >= 1");

    if (!violations.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& v : violations) msg += "\n  - " + v;
        throw ConfigError(msg);
    }

    if (warnings) {
        const double pareto = noise.pareto_exponent();
        if (pareto <= 2.0) {
            warnings->push_back("noise: Pareto exponent ln(K)/ln(b) = " + format_real(pareto) +
                                " <= 2 (infinite-variance regime); run proceeds");
        }
    }
}

ExperimentConfig load_config(const std::optional<std::filesystem::path>& path,
                             std::vector<std::string>* warnings) {
    ExperimentConfig cfg;
    if (path) {
        std::ifstream in(*path);
        if (!in) throw ConfigError("cannot open config file: " + path->string());
        if (path->extension() == ".json") {
            nlohmann::json j;
            try {
                in >> j;
            } catch (const std::exception& e) {
                throw ConfigError("config parse error in " + path->string() + ": " + e.what());
            }
            if (!j.contains("config") || !j["config"].is_object()) {
                throw ConfigError(path->string() + ": manifest lacks a 'config' object");
            }
            for (const auto& [key, value] : j["config"].items()) {
                cfg.apply_key_value(key, value.get<std::string>());
            }
        } else {
            std::string line;
            int line_no = 0;
            while (std::getline(in, line)) {
                ++line_no;
                const auto hash = line.find('#');
                if (hash != std::string::npos) line = line.substr(0, hash);
                line = trim(line);
                if (line.empty()) continue;
                const auto eq = line.find('=');
                if (eq == std::string::npos) {
                    throw ConfigError(path->string() + ":" + std::to_string(line_no) +
                                      ": expected 'key = value', got '" + line + "'");
                }
                cfg.apply_key_value(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
            }
        }
    }
    cfg.validate(warnings);
    return cfg;
}

// ---------------------------------------------------------------------------
// Analysis stage (shared by simulate and analyze)

namespace {

std::string annotate(int replica, const std::string& stage, double target, const std::string& what) {
    return "replica " + std::to_string(replica) + ", stage " + stage +
           " (R_Q=" + format_rq_label(target) + "): " + what;
}

// Calibrate, extract, fit and persist one interoccurrence CSV per target.
// Insufficient-events and degenerate-fit failures are recorded, not thrown.
std::vector<RqResult> run_analysis_stage(std::span<const double> returns,
                                         const std::vector<double>& targets, double q0,
                                         const std::filesystem::path& dir, int replica,
                                         std::vector<std::string>* warnings) {
    std::vector<RqResult> results;
    for (const double target : targets) {
        RqResult res;
        res.target_RQ = target;
        std::string stage = "calibrate_Q";
        try {
            const double Q = calibrate_Q(returns, target);
            stage = "extract_loss_events";
            res.analysis = extract_loss_events(returns, Q);
            if (std::abs(res.analysis.R_Q - target) > 0.15 * target && warnings) {
                warnings->push_back(annotate(replica, "calibration check", target,
                                             "empirical R_Q " + format_real(res.analysis.R_Q) +
                                                 " deviates more than 15% from target"));
            }
            stage = "fit_q_exponential";
            res.fit = fit_q_exponential(res.analysis, q0);
            res.ok = true;
        } catch (const InsufficientEventsError& e) {
            res.error = annotate(replica, stage, target, e.what());
        } catch (const FitError& e) {
            res.error = annotate(replica, stage, target, e.what());
        } catch (const ConfigError& e) {
            res.error = annotate(replica, stage, target, e.what());
        }

        CsvWriter csv(dir / ("interoccurrence_RQ" + format_rq_label(target) + ".csv"),
                      "r,empirical_P,fitted_P");
        if (res.ok) {
            for (const auto& pt : binned_curve(res.analysis, res.fit)) {
                csv.row(pt.r, pt.empirical_p, pt.fitted_p);
            }
        } else if (warnings) {
            warnings->push_back(res.error);
        }
        results.push_back(std::move(res));
    }

    CsvWriter fits(dir / "fits.csv", "R_Q,Q,q_fit,beta_fit,rms_log_residual,n_events");
    for (const auto& res : results) {
        if (!res.ok) continue;
        fits.row(res.target_RQ, res.analysis.Q, res.fit.q, res.fit.beta_scale, res.fit.rms_log_residual,
                 static_cast<std::int64_t>(res.analysis.event_days.size()));
    }
    return results;
}

// ---------------------------------------------------------------------------
// Replica simulation

ReplicaResult simulate_replica(const ExperimentConfig& cfg, int replica,
                               const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);

    ReplicaResult result;
    result.replica = replica;
    result.dir = dir;

    Rng rng = Rng::for_stream(cfg.seed, static_cast<std::uint64_t>(replica));
    LatticeState lattice = LatticeState::random(cfg.n, rng);
    WmNoiseSampler noise(cfg.noise);
    const DynamicsParams dyn{cfg.lambda, cfg.threshold_freeze};
    const CouplingSpec coupling{cfg.J};
    auto noise_fn = [&noise](Rng& r) { return noise.sample(r); };

    // Warmup rounds are discarded; traps are still broken so the measurement
    // phase never starts frozen, but those resets are not logged.
    for (std::int64_t k = 0; k < cfg.warmup_rounds; ++k) {
        run_round(lattice, dyn, coupling, noise_fn, rng);
        if (detect_trap(lattice, cfg.m_trap)) market_maker_reset(lattice, rng);
    }

    const std::int64_t total_rounds = cfg.total_days * cfg.tau;
    CsvWriter rounds_csv(dir / "rounds.csv", "round,M");
    std::unique_ptr<CsvWriter> activity_csv;
    std::vector<ActivityRecord> activity;
    if (cfg.record_activity) {
        activity_csv = std::make_unique<CsvWriter>(dir / "activity.csv", "round,site,d");
    }

    std::vector<double> day_m;
    day_m.reserve(static_cast<std::size_t>(cfg.total_days) + 1);

    const double m0 = lattice.magnetization();
    rounds_csv.row(std::int64_t{0}, m0);
    result.series.magnetization_per_round.push_back(m0);
    day_m.push_back(m0);

    for (std::int64_t round = 1; round <= total_rounds; ++round) {
        activity.clear();
        const RoundSummary summary = run_round(lattice, dyn, coupling, noise_fn, rng,
                                               cfg.record_activity ? &activity : nullptr);
        if (activity_csv) {
            for (const auto& rec : activity) {
                activity_csv->row(round, rec.site, rec.d);
            }
        }
        // End-of-round bookkeeping happens on the pre-reset state: the rounds
        // row and any day sample record the trapped magnetization, then the
        // market maker intervenes. A reset jump therefore lands in the next
        // day's return.
        if (round % cfg.rounds_stride == 0) {
            rounds_csv.row(round, summary.magnetization);
            result.series.magnetization_per_round.push_back(summary.magnetization);
        }
        if (round % cfg.tau == 0) day_m.push_back(summary.magnetization);
        if (detect_trap(lattice, cfg.m_trap)) {
            const double pre = market_maker_reset(lattice, rng);
            result.series.resets.push_back({round, pre});
        }
    }

    const MarketSeries priced =
        build_price_series_from_day_samples(day_m, cfg.market_depth(), lattice.size(), 1.0);
    result.series.log_price = priced.log_price;
    result.series.returns = priced.returns;
    result.resets = static_cast<std::int64_t>(result.series.resets.size());

    {
        CsvWriter daily(dir / "daily.csv", "day,ln_price,return");
        daily.row(std::int64_t{0}, result.series.log_price[0], "");
        for (std::size_t d = 1; d < result.series.log_price.size(); ++d) {
            daily.row(static_cast<std::int64_t>(d), result.series.log_price[d],
                      result.series.returns[d - 1]);
        }
        CsvWriter resets_csv(dir / "resets.csv", "round,pre_reset_M");
        for (const auto& ev : result.series.resets) {
            resets_csv.row(ev.round, ev.pre_reset_m);
        }
    }

    result.rq = run_analysis_stage(result.series.returns, cfg.target_RQ, cfg.q0, dir, replica,
                                   &result.warnings);
    return result;
}

} // namespace

AnalysisOutput analyze_returns(std::span<const double> returns, const std::vector<double>& target_RQ,
                               double q0, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    AnalysisOutput out;
    out.rq = run_analysis_stage(returns, target_RQ, q0, out_dir, 0, &out.warnings);
    return out;
}

// ---------------------------------------------------------------------------
// Bundle orchestration

namespace {

void write_manifest(const ExperimentBundle& bundle) {
    nlohmann::json j;
    j["config"] = bundle.config.to_key_values();
    j["seed"] = bundle.config.seed;
    j["code_version"] = code_version();
    j["wall_time_seconds"] = bundle.wall_seconds;
    j["warnings"] = bundle.warnings;
    j["replicas"] = nlohmann::json::array();
    for (const auto& rep : bundle.replicas) {
        nlohmann::json r;
        r["replica"] = rep.replica;
        r["dir"] = std::filesystem::relative(rep.dir, bundle.out_dir).string();
        r["days"] = rep.series.returns.size();
        r["resets"] = rep.resets;
        r["warnings"] = rep.warnings;
        r["rq"] = nlohmann::json::array();
        for (const auto& res : rep.rq) {
            nlohmann::json q;
            q["target_RQ"] = res.target_RQ;
            q["ok"] = res.ok;
            if (res.ok) {
                q["Q"] = res.analysis.Q;
                q["empirical_RQ"] = res.analysis.R_Q;
                q["n_events"] = res.analysis.event_days.size();
                q["q_fit"] = res.fit.q;
                q["beta_fit"] = res.fit.beta_scale;
                q["rms_log_residual"] = res.fit.rms_log_residual;
            } else {
                q["error"] = res.error;
            }
            r["rq"].push_back(std::move(q));
        }
        j["replicas"].push_back(std::move(r));
    }
    std::ofstream out(bundle.out_dir / "manifest.json", std::ios::binary | std::ios::trunc);
    out << j.dump(2) << '\n';
}

} // namespace

ExperimentBundle run_experiment(const ExperimentConfig& config, bool force_sequential) {
    const auto t0 = std::chrono::steady_clock::now();

    ExperimentBundle bundle;
    bundle.config = config;
    config.validate(&bundle.warnings);
    bundle.out_dir = config.output_dir;
    std::filesystem::create_directories(bundle.out_dir);

    const int n_replicas = config.replicas;
    bundle.replicas.resize(static_cast<std::size_t>(n_replicas));

    const auto replica_dir = [&](int r) {
        if (n_replicas == 1) return bundle.out_dir;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "replica_%02d", r);
        return bundle.out_dir / buf;
    };

    if (n_replicas == 1 || force_sequential) {
        for (int r = 0; r < n_replicas; ++r) {
            try {
                bundle.replicas[static_cast<std::size_t>(r)] = simulate_replica(config, r, replica_dir(r));
            } catch (const std::exception& e) {
                throw std::runtime_error("replica " + std::to_string(r) + ", stage simulate: " + e.what());
            }
        }
    } else {
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_replicas));
        std::vector<std::thread> workers;
        workers.reserve(static_cast<std::size_t>(n_replicas));
        for (int r = 0; r < n_replicas; ++r) {
            workers.emplace_back([&, r] {
                try {
                    bundle.replicas[static_cast<std::size_t>(r)] =
                        simulate_replica(config, r, replica_dir(r));
                } catch (...) {
                    errors[static_cast<std::size_t>(r)] = std::current_exception();
                }
            });
        }
        for (auto& w : workers) w.join();
        for (int r = 0; r < n_replicas; ++r) {
            if (errors[static_cast<std::size_t>(r)]) {
                try {
                    std::rethrow_exception(errors[static_cast<std::size_t>(r)]);
                } catch (const std::exception& e) {
                    throw std::runtime_error("replica " + std::to_string(r) +
                                             ", stage simulate: " + e.what());
                }
            }
        }
    }

    for (const auto& rep : bundle.replicas) {
        for (const auto& w : rep.warnings) bundle.warnings.push_back(w);
    }

    bundle.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(bundle);
    return bundle;
}

void write_figure_data(const std::filesystem::path& path, std::span<const RqResult> results, double q0,
                       std::vector<std::string>* warnings) {
    std::vector<const RqResult*> sorted;
    for (const auto& res : results) sorted.push_back(&res);
    std::sort(sorted.begin(), sorted.end(),
              [](const RqResult* a, const RqResult* b) { return a->target_RQ < b->target_RQ; });

    CsvWriter csv(path, "R_Q,r,empirical_P,fitted_P,paper_law_P");
    for (const RqResult* res : sorted) {
        if (!res->ok) {
            if (warnings) {
                warnings->push_back("figure_data: skipping R_Q=" + format_rq_label(res->target_RQ) +
                                    " (no fit)");
            }
            continue;
        }
        const auto bins = make_log_bins(res->analysis.inter_times);
        const auto curve = binned_curve(res->analysis, res->fit);
        const std::int64_t r_obs_max =
            *std::max_element(res->analysis.inter_times.begin(), res->analysis.inter_times.end());

        std::vector<double> paper_law;
        bool have_paper_law = res->target_RQ >= 2.0;
        if (have_paper_law) {
            paper_law = binned_model_density(bins, q_of_RQ(res->target_RQ, q0), kPaperBetaPlateau,
                                             10 * r_obs_max);
        } else if (warnings) {
            warnings->push_back("figure_data: R_Q=" + format_rq_label(res->target_RQ) +
                                " < 2, paper-law overlay undefined");
        }
        for (std::size_t i = 0; i < curve.size(); ++i) {
            if (have_paper_law) {
                csv.row(res->target_RQ, curve[i].r, curve[i].empirical_p, curve[i].fitted_p,
                        paper_law[i]);
            } else {
                csv.row(res->target_RQ, curve[i].r, curve[i].empirical_p, curve[i].fitted_p, "");
            }
        }
    }
}

std::vector<std::filesystem::path> emit_plot_data(const ExperimentBundle& bundle,
                                                  std::vector<std::string>* warnings) {
    std::vector<std::filesystem::path> paths;
    for (const auto& rep : bundle.replicas) {
        const auto path = rep.dir / "figure_data.csv";
        write_figure_data(path, rep.rq, bundle.config.q0, warnings);
        paths.push_back(path);
    }
    return paths;
}

} // namespace spinmarket
