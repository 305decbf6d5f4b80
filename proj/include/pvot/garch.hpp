#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "pvot/grid.hpp"
#include "pvot/pvot.hpp"
#include "pvot/random.hpp"

namespace pvot::garch {

struct Bounds {
  double lower = 0.0;
  double upper = 1.0;

  double clamp(double v) const { return v < lower ? lower : (v > upper ? upper : v); }
  bool contains(double v) const { return v >= lower && v <= upper; }
};

/// Box for (omega, delta) plus the admissible range of the imputed lambda.
struct GarchSpace {
  Bounds omega{0.001, 2.0};
  Bounds delta{0.0, 0.99};
  Bounds lambda{0.0, 0.99};

  void validate() const;
};

/// sum_t { ln sigma2_t + y_t^2 / sigma2_t } with
/// sigma2_t = omega + delta y_{t-1}^2 + lambda sigma2_{t-1}, sigma2_0 = omega/(1-lambda), y_0 = 0.
double garch_objective(std::span<const double> y, double omega, double delta, double lambda);

struct QmlOptions {
  std::size_t starts = 3;
  std::size_t max_iterations = 500;
  double tolerance = 1e-4;
  double fd_step = 1e-6;
};

enum class StopReason { Gradient, Step, IterationLimit, Stalled };
std::string_view to_string(StopReason reason);

struct QmlFit {
  double omega_hat = 0.0;
  double delta_hat = 0.0;
  double lambda = 0.0;
  double objective = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
  StopReason stop = StopReason::IterationLimit;
};

/// Multi-start projected quasi-Newton fit; the best converged start wins.
/// Throws NoConvergence when no start converges.
QmlFit qml_fit(std::span<const double> y, double lambda, const GarchSpace& space, RandomStream& rng,
               const QmlOptions& options = {});

/// Same search, but returns the best start even when none converged.
QmlFit qml_fit_best_effort(std::span<const double> y, double lambda, const GarchSpace& space, RandomStream& rng,
                           const QmlOptions& options = {});

struct GarchPathResult {
  StatPath path;
  std::vector<QmlFit> fits;
  std::size_t failures = 0;
};

inline constexpr double kMaxFailedFraction = 0.05;

/// T(lambda) = n * delta_hat(lambda)^2. Grid point g uses rng.derive(g).
/// Non-converged points keep their best iterate and are counted; more than
/// 5% of them throws PathUnreliable.
GarchPathResult garch_stat_path(std::span<const double> y, const NuisanceGrid& grid, const GarchSpace& space,
                                const RandomStream& rng, const QmlOptions& options = {});

/// Simulated draws of T(lambda) = (max{0, z(lambda)})^2 under the null,
/// z(lambda) = (1 - lambda^2) sum_{j=0}^{R} lambda^j Z_j.
struct NullReferenceTable {
  NuisanceGrid grid;
  std::size_t truncation = 0;
  std::size_t replicates = 0;
  Eigen::MatrixXd draws;  // replicates x grid size
};

inline constexpr std::size_t kFullTruncation = 25000;
inline constexpr std::size_t kFullReplicates = 10000;

/// Raw Gaussian draws z(lambda); replicate i uses one sequence Z_{0..R} from
/// rng.derive(i), shared across every lambda.
Eigen::MatrixXd simulate_kernel_draws(const NuisanceGrid& grid, std::size_t truncation, std::size_t replicates,
                                      const RandomStream& rng, std::size_t threads = 1);

NullReferenceTable simulate_null_reference(const NuisanceGrid& grid, std::size_t truncation,
                                           std::size_t replicates, const RandomStream& rng,
                                           std::size_t threads = 1);

/// Stream used for reference tables so a table is a function of (grid, R, M, seed).
RandomStream reference_stream(std::uint64_t seed);

PValuePath sim_pvalue_path(const StatPath& path, const NullReferenceTable& table);
double sim_pvalue_transform(const StatPath& path, const NullReferenceTable& table, Transform transform);

/// Disk cache: <dir>/ref_<key>.csv (row = replicate, column = grid point) and
/// a <dir>/ref_<key>.meta sidecar with grid, R, M and seed.
std::string reference_cache_key(const NuisanceGrid& grid, std::size_t truncation, std::size_t replicates,
                                std::uint64_t seed);
void save_reference_table(const std::filesystem::path& dir, const NullReferenceTable& table, std::uint64_t seed);
std::optional<NullReferenceTable> load_reference_table(const std::filesystem::path& dir, const NuisanceGrid& grid,
                                                       std::size_t truncation, std::size_t replicates,
                                                       std::uint64_t seed);

/// Loads a cached table or simulates and stores it. `dir` may be empty (no cache).
NullReferenceTable cached_reference_table(const std::filesystem::path& dir, const NuisanceGrid& grid,
                                          std::size_t truncation, std::size_t replicates, std::uint64_t seed,
                                          std::size_t threads, bool* cache_hit = nullptr);

}  // namespace pvot::garch
