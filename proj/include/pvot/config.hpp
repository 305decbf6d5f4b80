#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pvot/dgp.hpp"
#include "pvot/garch.hpp"
#include "pvot/grid.hpp"

namespace pvot {

enum class ExperimentKind { LocalPower, McFuncform, McGarch, PValuePaths };

std::string_view to_string(ExperimentKind kind);
std::optional<ExperimentKind> parse_experiment(std::string_view name);

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::McFuncform;
  std::string preset;
  std::uint64_t seed = 42;
  std::size_t replications = 1000;
  std::vector<std::size_t> sample_sizes{100, 250, 500};
  std::vector<double> levels{0.01, 0.05, 0.10};
  GridSpec grid;

  // local_power
  std::vector<double> drift_values;
  std::size_t process_length = 2000;

  // mc_funcform (and the funcform half of pvalue_paths)
  std::vector<dgp::DgpKind> dgps{dgp::DgpKind::IidLinear, dgp::DgpKind::IidQuadratic, dgp::DgpKind::Ar1,
                                 dgp::DgpKind::Setar};
  /// 0 disables the bootstrap sup/ave tests.
  std::size_t bootstrap_replicates = 1000;

  // mc_garch (and the garch half of pvalue_paths)
  std::vector<double> garch_deltas{0.0, 0.3};
  double garch_omega = 1.0;
  double garch_lambda = 0.6;
  std::size_t reference_truncation = 5000;
  std::size_t reference_replicates = 2000;
  std::size_t qml_starts = 3;
  garch::GarchSpace space;
  GridSpec garch_grid{0.01, 0.99, 1.0, 50};

  // Execution settings; they never change results and are not hashed.
  std::size_t threads = 1;
  std::filesystem::path cache_dir;

  /// Throws InvalidArgument on violated invariants (replications >= 100, levels in (0,1), ...).
  void validate() const;
};

/// Names: desk-local-power, full-local-power, desk-funcform, full-funcform,
/// desk-garch, full-garch, desk-paths.
std::vector<std::string> preset_names();
ExperimentConfig preset_config(std::string_view name);

/// Flat "section.key" -> value view of a key/value file with [section] headers.
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

/// Applies "section.key" = value assignments; unknown keys throw InvalidArgument
/// naming the key. Keys under [manifest] are ignored so manifests can be replayed.
void apply_settings(ExperimentConfig& config, const std::map<std::string, std::string>& settings);

/// Precedence: overrides > file > preset defaults. The preset comes from the
/// overrides, then `preset_flag`, then the file, then `fallback_preset`.
ExperimentConfig resolve_config(const std::string& fallback_preset, const std::optional<std::string>& preset_flag,
                                const std::optional<std::filesystem::path>& file,
                                const std::map<std::string, std::string>& overrides);

/// Canonical key/value rendering; loading it back reproduces the config.
std::string to_ini(const ExperimentConfig& config);
std::string config_hash(const ExperimentConfig& config);

std::vector<double> parse_real_list(std::string_view text);

}  // namespace pvot
