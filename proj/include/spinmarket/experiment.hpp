// Experiment orchestration: configuration, replica execution, persistence.
//
// One experiment = replicas x (init -> warmup -> total_days * tau rounds with
// per-round trap checks) -> daily price series -> per-target-R_Q loss
// analysis and q-exponential fits, all CSVs plus a manifest. Fully
// deterministic given (config, seed); each replica draws from its own RNG
// stream so parallel and sequential execution produce identical bytes.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spinmarket/analysis.hpp"
#include "spinmarket/lattice.hpp"
#include "spinmarket/market.hpp"
#include "spinmarket/noise.hpp"

namespace spinmarket {

struct ExperimentConfig {
    // model
    int n = 32;
    double J = 1.0;
    double lambda = 2.0;
    // noise
    WmNoiseParams noise;
    // market; Lambda unset means "depth of market = N"
    std::optional<double> Lambda;
    std::int64_t tau = 1000;
    double m_trap = 1.0;
    ThresholdFreeze threshold_freeze = ThresholdFreeze::kDrawing;
    // run
    std::int64_t warmup_rounds = 100;
    std::int64_t total_days = 20000;
    std::uint64_t seed = 1;
    int replicas = 1;
    bool record_activity = false;
    // analysis
    std::vector<double> target_RQ = {2, 5, 10, 30, 70};
    double q0 = 0.17;
    // output
    std::string output_dir = "out";
    std::int64_t rounds_stride = 1; // emit every k-th row of rounds.csv

    std::int64_t n_agents() const { return static_cast<std::int64_t>(n) * n; }
    double market_depth() const { return Lambda ? *Lambda : static_cast<double>(n_agents()); }

    // Throws ConfigError listing every violated constraint; appends
    // non-fatal diagnostics (e.g. infinite-variance noise) to *warnings.
    void validate(std::vector<std::string>* warnings = nullptr) const;

    // Flat key=value view, reloadable via apply_key_value().
    std::map<std::string, std::string> to_key_values() const;
    void apply_key_value(const std::string& key, const std::string& value);
};

// Reads a flat key=value config file ('#' comments), or the "config" object
// of a manifest.json when the path ends in .json. A nullopt path yields the
// defaults. Validation happens here; warnings are appended when requested.
ExperimentConfig load_config(const std::optional<std::filesystem::path>& path,
                             std::vector<std::string>* warnings = nullptr);

struct RqResult {
    double target_RQ = 0.0;
    bool ok = false;
    std::string error; // set when !ok
    LossAnalysis analysis;
    QExpFit fit;
};

struct ReplicaResult {
    int replica = 0;
    std::filesystem::path dir;
    MarketSeries series;
    std::int64_t resets = 0;
    std::vector<RqResult> rq;
    std::vector<std::string> warnings;
};

struct ExperimentBundle {
    ExperimentConfig config;
    std::filesystem::path out_dir;
    std::vector<ReplicaResult> replicas;
    std::vector<std::string> warnings;
    double wall_seconds = 0.0;
};

// Runs the full experiment and writes rounds/daily/resets/interoccurrence/
// fits CSVs plus manifest.json under config.output_dir (per-replica
// subdirectories when replicas > 1). Analysis-stage insufficient-events
// failures are recorded per target rather than aborting the run; all other
// errors propagate annotated with replica and stage.
ExperimentBundle run_experiment(const ExperimentConfig& config, bool force_sequential = false);

// Writes figure_data.csv (R_Q, r, empirical_P, fitted_P, paper_law_P) per
// replica; rows grouped by R_Q ascending, r ascending. Missing fits are
// skipped with a warning. Returns the paths written.
std::vector<std::filesystem::path> emit_plot_data(const ExperimentBundle& bundle,
                                                  std::vector<std::string>* warnings = nullptr);

// Single-output core of emit_plot_data, reused by the analyze verb.
void write_figure_data(const std::filesystem::path& path, std::span<const RqResult> results, double q0,
                       std::vector<std::string>* warnings = nullptr);

// Re-runs the analysis stage on stored daily returns (the `analyze` verb).
struct AnalysisOutput {
    std::vector<RqResult> rq;
    std::vector<std::string> warnings;
};
AnalysisOutput analyze_returns(std::span<const double> returns, const std::vector<double>& target_RQ,
                               double q0, const std::filesystem::path& out_dir);

extern const double kPaperBetaPlateau; // beta(R_Q) plateau used for overlay curves

std::string format_rq_label(double target_RQ);
std::string code_version();

} // namespace spinmarket
