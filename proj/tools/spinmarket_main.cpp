// spinmarket CLI: simulate | analyze | fit | config-check.
//
// Exit codes: 0 success, 2 configuration error, 3 insufficient loss events,
// 1 anything else.

#include <cstdlib>
#include <deque>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spinmarket/experiment.hpp"
#include "spinmarket/io.hpp"

namespace {

using spinmarket::ExperimentConfig;

struct CommonOpts {
    std::optional<std::string> config_path;
    // Flag values are kept as strings and funneled through the same
    // key=value parser as config files, so constraint messages match.
    // deque: the CLI11 callbacks hold references into it.
    std::deque<std::pair<std::string, std::optional<std::string>>> overrides;

    void add_flags(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "flat key=value config file (or a manifest.json)");
        add(cmd, "--n", "model.n", "lattice linear size");
        add(cmd, "--J", "model.J", "coupling strength");
        add(cmd, "--lambda", "model.lambda", "threshold amplitude");
        add(cmd, "--K", "noise.K", "noise level-probability base");
        add(cmd, "--b", "noise.b", "noise magnitude base");
        add(cmd, "--b0", "noise.b0", "noise base magnitude");
        add(cmd, "--Lambda", "market.Lambda", "depth of market ('auto' = N)");
        add(cmd, "--tau", "market.tau", "rounds per trading day");
        add(cmd, "--m-trap", "market.m_trap", "|M| threshold for the ferromagnetic trap");
        add(cmd, "--threshold-freeze", "market.threshold_freeze", "'drawing' or 'round'");
        add(cmd, "--warmup", "run.warmup_rounds", "discarded equilibration rounds");
        add(cmd, "--days", "run.total_days", "simulated trading days");
        add(cmd, "--seed", "run.seed", "master RNG seed");
        add(cmd, "--replicas", "run.replicas", "independent replicas");
        add(cmd, "--record-activity", "run.record_activity", "emit per-drawing activity.csv");
        add(cmd, "--target-rq", "analysis.target_RQ", "comma list of target R_Q values");
        add(cmd, "--q0", "analysis.q0", "directional coefficient of the q(R_Q) law");
        add(cmd, "--out", "output.dir", "output directory (flag > $SPINMARKET_OUT > config)");
        add(cmd, "--rounds-stride", "output.rounds_stride", "emit every k-th rounds.csv row");
    }

    ExperimentConfig resolve(std::vector<std::string>* warnings) const {
        ExperimentConfig cfg = spinmarket::load_config(
            config_path ? std::optional<std::filesystem::path>(*config_path) : std::nullopt, nullptr);
        if (const char* env_out = std::getenv("SPINMARKET_OUT"); env_out && *env_out) {
            cfg.apply_key_value("output.dir", env_out);
        }
        for (const auto& [key, value] : overrides) {
            if (value) cfg.apply_key_value(key, *value);
        }
        cfg.validate(warnings);
        return cfg;
    }

private:
    void add(CLI::App* cmd, const std::string& flag, const std::string& key, const std::string& desc) {
        overrides.push_back({key, std::nullopt});
        auto& slot = overrides.back().second;
        cmd->add_option_function<std::string>(
               flag, [&slot](const std::string& v) { slot = v; }, desc + " [" + key + "]")
            ->expected(1);
    }
};

void print_warnings(const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

void print_rq_results(const std::vector<spinmarket::RqResult>& results) {
    for (const auto& res : results) {
        std::cout << "  R_Q=" << spinmarket::format_rq_label(res.target_RQ) << ": ";
        if (res.ok) {
            std::cout << "Q=" << spinmarket::format_real(res.analysis.Q) << " q=" << res.fit.q
                      << " beta=" << res.fit.beta_scale << " rms=" << res.fit.rms_log_residual
                      << " events=" << res.analysis.event_days.size()
                      << " empirical_RQ=" << res.analysis.R_Q << '\n';
        } else {
            std::cout << "no fit (" << res.error << ")\n";
        }
    }
}

// All-targets-failed runs exit with the insufficient-events code.
int analysis_exit_code(const std::vector<spinmarket::RqResult>& results) {
    for (const auto& res : results) {
        if (res.ok) return 0;
    }
    return results.empty() ? 0 : 3;
}

int cmd_simulate(const CommonOpts& opts, bool sequential) {
    std::vector<std::string> warnings;
    ExperimentConfig cfg = opts.resolve(&warnings);
    print_warnings(warnings);

    spinmarket::ExperimentBundle bundle = spinmarket::run_experiment(cfg, sequential);
    std::vector<std::string> plot_warnings;
    spinmarket::emit_plot_data(bundle, &plot_warnings);
    print_warnings(plot_warnings);

    std::cout << "wrote " << bundle.out_dir.string() << " (" << bundle.replicas.size()
              << (bundle.replicas.size() == 1 ? " replica, " : " replicas, ")
              << spinmarket::format_real(bundle.wall_seconds) << " s)\n";
    std::vector<spinmarket::RqResult> all;
    for (const auto& rep : bundle.replicas) {
        std::cout << "replica " << rep.replica << ": days=" << rep.series.returns.size()
                  << " resets=" << rep.resets << '\n';
        print_rq_results(rep.rq);
        for (const auto& res : rep.rq) all.push_back(res);
    }
    return analysis_exit_code(all);
}

int cmd_analyze(const CommonOpts& opts, const std::string& daily_path) {
    std::vector<std::string> warnings;
    ExperimentConfig cfg = opts.resolve(&warnings);
    print_warnings(warnings);

    const auto rows = spinmarket::read_daily_csv(daily_path);
    std::vector<double> returns;
    for (const auto& row : rows) {
        if (row.has_return) returns.push_back(row.ret);
    }
    spinmarket::AnalysisOutput out =
        spinmarket::analyze_returns(returns, cfg.target_RQ, cfg.q0, cfg.output_dir);
    std::vector<std::string> fig_warnings;
    spinmarket::write_figure_data(std::filesystem::path(cfg.output_dir) / "figure_data.csv", out.rq,
                                  cfg.q0, &fig_warnings);
    print_warnings(out.warnings);
    print_warnings(fig_warnings);

    std::cout << "analyzed " << returns.size() << " daily returns from " << daily_path << '\n';
    print_rq_results(out.rq);
    return analysis_exit_code(out.rq);
}

int cmd_fit(const std::string& input_path, double q0) {
    const auto csv = spinmarket::read_numeric_csv(input_path);
    spinmarket::QExpFit fit;
    std::size_t n_used = 0;

    const bool binned = csv.header.size() >= 2 && csv.header[0] == "r" && csv.header[1] == "empirical_P";
    if (binned) {
        std::vector<std::pair<double, double>> points;
        for (const auto& row : csv.rows) {
            if (row.size() >= 2 && row[0] == row[0] && row[1] == row[1]) points.push_back({row[0], row[1]});
        }
        n_used = points.size();
        fit = spinmarket::fit_binned_points(points, q0);
    } else if (csv.header.size() == 1 && (csv.header[0] == "r" || csv.header[0] == "inter_time")) {
        std::vector<std::int64_t> samples;
        for (const auto& row : csv.rows) {
            if (!row.empty() && row[0] == row[0]) samples.push_back(static_cast<std::int64_t>(row[0]));
        }
        n_used = samples.size();
        fit = spinmarket::fit_inter_times(samples, q0);
    } else {
        throw std::runtime_error(input_path +
                                 ": expected header 'r' (raw samples) or 'r,empirical_P[,...]' (binned)");
    }

    std::cout << "q=" << spinmarket::format_real(fit.q)
              << " beta=" << spinmarket::format_real(fit.beta_scale)
              << " rms_log_residual=" << spinmarket::format_real(fit.rms_log_residual) << " n=" << n_used
              << (binned ? " (binned)\n" : " (raw samples)\n");
    return 0;
}

int cmd_config_check(const CommonOpts& opts) {
    std::vector<std::string> warnings;
    ExperimentConfig cfg = opts.resolve(&warnings);
    for (const auto& [key, value] : cfg.to_key_values()) {
        std::cout << key << " = " << value << '\n';
    }
    std::cout << "# derived: N = " << cfg.n_agents() << ", market depth = " << cfg.market_depth()
              << ", Pareto exponent = " << spinmarket::format_real(cfg.noise.pareto_exponent()) << '\n';
    print_warnings(warnings);
    std::cout << "config OK\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"three-state threshold market simulator and interoccurrence-time analyzer"};
    app.require_subcommand(1);

    CommonOpts sim_opts;
    bool sequential = false;
    auto* simulate = app.add_subcommand("simulate", "run the full experiment pipeline");
    sim_opts.add_flags(simulate);
    simulate->add_flag("--sequential", sequential, "run replicas sequentially even when > 1");

    CommonOpts analyze_opts;
    std::string daily_path;
    auto* analyze = app.add_subcommand("analyze", "re-run loss analysis on a stored daily.csv");
    analyze_opts.add_flags(analyze);
    analyze->add_option("--daily", daily_path, "path to daily.csv")->required();

    std::string fit_input;
    double fit_q0 = 0.17;
    auto* fit = app.add_subcommand("fit", "fit a q-exponential to an interoccurrence CSV");
    fit->add_option("--input", fit_input, "CSV of raw inter_times ('r') or binned 'r,empirical_P'")
        ->required();
    fit->add_option("--q0", fit_q0, "directional coefficient echoed into the fit record");

    CommonOpts check_opts;
    auto* check = app.add_subcommand("config-check", "validate and print the resolved configuration");
    check_opts.add_flags(check);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (simulate->parsed()) return cmd_simulate(sim_opts, sequential);
        if (analyze->parsed()) return cmd_analyze(analyze_opts, daily_path);
        if (fit->parsed()) return cmd_fit(fit_input, fit_q0);
        if (check->parsed()) return cmd_config_check(check_opts);
    } catch (const spinmarket::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const spinmarket::InsufficientEventsError& e) {
        std::cerr << "insufficient events: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
