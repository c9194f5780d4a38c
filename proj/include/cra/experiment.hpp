#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "cra/deep.hpp"
#include "cra/learning.hpp"

namespace cra {

enum class Algorithm { qlearn, cql, crm, dqn, dqn_crm, dqn_cql };
std::string_view to_string(Algorithm a);
Algorithm parse_algorithm(std::string_view name);
bool is_deep(Algorithm a);

/// One experiment file (see README for the format). Relative paths are
/// resolved against the directory of the file they appear in.
struct ExperimentConfig {
  std::string name = "experiment";
  Algorithm algorithm = Algorithm::cql;
  std::vector<std::uint64_t> seeds;
  std::string output;

  std::string env = "letter";
  EnvConfig env_config;
  std::string layout;

  std::string machine_file;
  std::string generator;
  double fail_reward = 0.0;
  /// Per-N mode: one policy per listed N, trained one after another.
  std::vector<int> ns;
  std::map<std::string, std::string> binding;

  LearnParams learn;
  DeepParams deep;
  bool single_precision = false;
  std::string checkpoint;
};

ExperimentConfig parse_config(std::string_view text, const std::string& base_dir = ".");
ExperimentConfig load_config(const std::string& path);
/// Every setting with its effective value, in a fixed order.
std::string serialize_config(const ExperimentConfig& config);
std::string config_hash(const ExperimentConfig& config);

/// The machine of a run with the given fixed N (0: none).
CountingRewardAutomaton build_machine(const ExperimentConfig& config, int n);
std::unique_ptr<Environment> build_environment(const ExperimentConfig& config, int n);

struct SeedOutcome {
  std::uint64_t seed = 0;
  std::string csv;
  std::string error;
  double wall_seconds = 0.0;
  std::map<std::string, std::string> summary;
};

struct RunOutput {
  std::string csv;
  std::string manifest;
  std::vector<SeedOutcome> seeds;

  bool ok() const;
};

inline constexpr std::string_view kCurveHeader =
    "seed,n,episode,steps,samples,mean_return,success_rate";

/// Runs every seed on up to `threads` workers. CSV rows are merged in seed
/// order, so the CSV does not depend on the thread count.
RunOutput run_experiment(const ExperimentConfig& config, unsigned threads);
/// CRA_THREADS when set, otherwise the hardware concurrency.
unsigned worker_threads();

// ---------------------------------------------------------------------------
// Machine complexity

struct ComplexityRow {
  int n = 0;
  Complexity cra;
  Complexity rm;
};

/// task ∈ {letter, office}; throws bad_config for n_max < 1.
std::vector<ComplexityRow> complexity_table(std::string_view task, int n_max);
std::string format_complexity(const std::vector<ComplexityRow>& rows);

struct AffineFit {
  double intercept = 0.0;
  double slope = 0.0;
  double r2 = 0.0;
};
/// Least squares y ≈ intercept + slope·x. R² is 1 for a perfect fit
/// (including constant data).
AffineFit affine_fit(const std::vector<double>& x, const std::vector<double>& y);

// ---------------------------------------------------------------------------
// Result files

struct CurveRow {
  std::string seed;
  std::string n;
  std::int64_t episode = 0;
  std::int64_t steps = 0;
  std::int64_t samples = 0;
  double mean_return = 0.0;
  double success_rate = 0.0;
};

/// Throws syntax on a bad header or row.
std::vector<CurveRow> parse_curve_csv(std::string_view text);

/// Sample mean and variance (n − 1 denominator, 0 for a single value).
struct Moments {
  std::size_t count = 0;
  double mean = 0.0;
  double variance = 0.0;
};
Moments moments(const std::vector<double>& values);
double median(std::vector<double> values);

struct ReportOptions {
  double threshold = 0.95;
  int window = 10;
};
/// Curve table (mean/variance per evaluation index), per-N samples to solve
/// and per-seed totals across N. Each block is a CSV with its own header,
/// blocks separated by a blank line.
std::string make_report(const std::vector<std::pair<std::string, std::vector<CurveRow>>>& files,
                        const ReportOptions& options);

struct SeriesPoint {
  double x = 0.0;
  double mean = 0.0;
  double variance = 0.0;
};
/// Mean and variance across seeds at each evaluation index of the seeds'
/// row sequences; x is the mean cumulative sample count there.
std::vector<SeriesPoint> aggregate_curve(const std::vector<CurveRow>& rows, bool success_rate);

struct PlotSeries {
  std::string label;
  std::vector<SeriesPoint> points;
};
/// Mean line with a ±1 standard deviation band per series.
std::string render_svg(const std::vector<PlotSeries>& series, const std::string& title,
                       const std::string& y_label);

}  // namespace cra
