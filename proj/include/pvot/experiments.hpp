#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "pvot/config.hpp"

namespace pvot::experiments {

struct McRow {
  std::string method;
  std::string dgp;
  std::size_t n = 0;
  double level = 0.0;
  double freq = 0.0;
  double se = 0.0;
  /// Replications that produced a decision.
  std::size_t reps = 0;
  std::size_t failures = 0;
};

struct McSummary {
  std::vector<McRow> rows;
  std::uint64_t seed = 0;
  std::string config_hash;
  double wall_seconds = 0.0;
  /// Largest failed fraction over the (dgp, n) cells.
  double worst_failure_rate = 0.0;
  bool unreliable() const;
};

/// Cells with more than this fraction of failed replications make a run unreliable.
inline constexpr double kMaxFailureRate = 0.01;

/// Rejection frequencies of PVOT, randomized, bootstrap sup/ave and ICM over
/// the configured regression DGPs and sample sizes.
McSummary run_mc_funcform(const ExperimentConfig& config);

/// GARCH effects study: PVOT, sup, ave and randomized on simulated p-values,
/// plus size-adjusted rows ("<method>_size_adjusted") whose critical values are
/// empirical quantiles of the delta = 0 scores. Uses config.grid.
McSummary run_mc_garch(const ExperimentConfig& config);

struct PowerRow {
  std::string method;
  double level = 0.0;
  double b = 0.0;
  double power = 0.0;
  double se = 0.0;
};

struct PowerCurves {
  std::vector<PowerRow> rows;
  std::uint64_t seed = 0;
  std::string config_hash;
  double wall_seconds = 0.0;
};

inline constexpr double kIcmVarianceIntegral = 2.3645;

/// Local asymptotic power from simulated limit processes, drift b * exp(lambda^2).
PowerCurves run_local_power(const ExperimentConfig& config);

struct LabeledPath {
  std::string label;
  std::vector<double> lambda;
  std::vector<double> stat;
  std::vector<double> pvalue;
};

struct PathSummaryRow {
  std::string label;
  double level = 0.0;
  double occupation_time = 0.0;
  bool reject = false;
};

struct PathsOutput {
  std::vector<LabeledPath> paths;
  std::vector<PathSummaryRow> summary;
  std::uint64_t seed = 0;
  std::string config_hash;
  double wall_seconds = 0.0;
};

/// One drawn sample per regression DGP (config.grid) and per GARCH delta
/// (config.garch_grid), with the asymptotic or simulated p-value path of each.
PathsOutput emit_pvalue_paths(const ExperimentConfig& config);

/// "<n>-th smallest" order statistic with n = ceil((1 - level) * count), clamped to [1, count].
double upper_quantile(std::vector<double> values, double level);

void write_mc_csv(std::ostream& out, const McSummary& summary);
void write_power_csv(std::ostream& out, const PowerCurves& curves);
void write_path_csv(std::ostream& out, const LabeledPath& path, const std::string& config_hash, std::uint64_t seed);
void write_paths_summary_csv(std::ostream& out, const PathsOutput& output);

/// Writes the run's CSV files into `dir` and returns their paths.
std::vector<std::filesystem::path> write_outputs(const std::filesystem::path& dir, const McSummary& summary);
std::vector<std::filesystem::path> write_outputs(const std::filesystem::path& dir, const PowerCurves& curves);
std::vector<std::filesystem::path> write_outputs(const std::filesystem::path& dir, const PathsOutput& output);

/// manifest.ini: a [manifest] block followed by the canonical config, so the
/// file can be passed back through --config to rerun.
void write_manifest(const std::filesystem::path& dir, const ExperimentConfig& config, const std::string& command,
                    double wall_seconds);

}  // namespace pvot::experiments
