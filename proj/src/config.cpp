#include "pvot/config.hpp"

#include <charconv>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "pvot/csv.hpp"
#include "pvot/error.hpp"
#include "pvot/hash.hpp"

namespace pvot {

namespace {

double parse_real(std::string_view key, std::string_view text) {
  const auto trimmed = csv::trim(text);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(trimmed.data(), trimmed.data() + trimmed.size(), value);
  if (ec != std::errc() || ptr != trimmed.data() + trimmed.size() || trimmed.empty()) {
    throw Error(ErrorKind::InvalidArgument, fmt::format("{}: '{}' is not a number", key, text));
  }
  return value;
}

std::uint64_t parse_unsigned(std::string_view key, std::string_view text) {
  const auto trimmed = csv::trim(text);
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(trimmed.data(), trimmed.data() + trimmed.size(), value);
  if (ec != std::errc() || ptr != trimmed.data() + trimmed.size() || trimmed.empty()) {
    throw Error(ErrorKind::InvalidArgument, fmt::format("{}: '{}' is not a nonnegative integer", key, text));
  }
  return value;
}

// A blank value is an empty list, which is how to_ini writes one.
std::vector<double> parse_reals(std::string_view key, std::string_view text) {
  std::vector<double> out;
  if (csv::trim(text).empty()) return out;
  for (const auto& token : csv::split(text)) out.push_back(parse_real(key, token));
  return out;
}

std::vector<std::size_t> parse_sizes(std::string_view key, std::string_view text) {
  std::vector<std::size_t> out;
  if (csv::trim(text).empty()) return out;
  for (const auto& token : csv::split(text)) out.push_back(parse_unsigned(key, token));
  return out;
}

std::string join_reals(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + csv::format_shortest(values[i]);
  return out;
}

std::string join_sizes(const std::vector<std::size_t>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + std::to_string(values[i]);
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"experiment.kind",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         const auto kind = parse_experiment(csv::trim(v));
         if (!kind) throw Error(ErrorKind::InvalidArgument, fmt::format("{}: unknown experiment '{}'", k, v));
         c.experiment = *kind;
       }},
      {"experiment.preset", [](ExperimentConfig& c, const std::string&, const std::string& v) {
         c.preset = std::string(csv::trim(v));
       }},
      {"experiment.seed",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.seed = parse_unsigned(k, v); }},
      {"experiment.replications",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.replications = parse_unsigned(k, v); }},
      {"experiment.n",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.sample_sizes = parse_sizes(k, v); }},
      {"experiment.levels",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.levels = parse_reals(k, v); }},
      {"grid.lower", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.grid.lower = parse_real(k, v); }},
      {"grid.upper", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.grid.upper = parse_real(k, v); }},
      {"grid.coarseness",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.grid.coarseness = parse_real(k, v); }},
      {"grid.points",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.grid.points = parse_unsigned(k, v); }},
      {"local_power.length",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.process_length = parse_unsigned(k, v); }},
      {"local_power.drift",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.drift_values = parse_reals(k, v); }},
      {"funcform.dgps",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.dgps.clear();
         for (const auto& name : csv::split(v)) {
           const auto kind = dgp::parse_kind(name);
           if (!kind || *kind == dgp::DgpKind::Garch) {
             throw Error(ErrorKind::InvalidArgument, fmt::format("{}: unknown regression DGP '{}'", k, name));
           }
           c.dgps.push_back(*kind);
         }
       }},
      {"funcform.bootstrap",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.bootstrap_replicates = parse_unsigned(k, v);
       }},
      {"garch.deltas",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.garch_deltas = parse_reals(k, v); }},
      {"garch.omega", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.garch_omega = parse_real(k, v); }},
      {"garch.lambda",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.garch_lambda = parse_real(k, v); }},
      {"garch.truncation",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.reference_truncation = parse_unsigned(k, v);
       }},
      {"garch.reference_draws",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.reference_replicates = parse_unsigned(k, v);
       }},
      {"garch.starts",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.qml_starts = parse_unsigned(k, v); }},
      {"garch.omega_lower",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.space.omega.lower = parse_real(k, v); }},
      {"garch.omega_upper",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.space.omega.upper = parse_real(k, v); }},
      {"garch.delta_upper",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.space.delta.upper = parse_real(k, v); }},
      {"garch.grid_lower",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.garch_grid.lower = parse_real(k, v); }},
      {"garch.grid_upper",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.garch_grid.upper = parse_real(k, v); }},
      {"garch.grid_coarseness",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.garch_grid.coarseness = parse_real(k, v);
       }},
      {"garch.grid_points",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.garch_grid.points = parse_unsigned(k, v);
       }},
  };
  return table;
}

std::vector<double> desk_drifts() {
  return {0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.5, 3.0, 3.5, 4.0, 5.0, 6.0, 7.0};
}

}  // namespace

std::vector<double> parse_real_list(std::string_view text) { return parse_reals("list", text); }

std::string_view to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::LocalPower: return "local_power";
    case ExperimentKind::McFuncform: return "mc_funcform";
    case ExperimentKind::McGarch: return "mc_garch";
    case ExperimentKind::PValuePaths: return "pvalue_paths";
  }
  return "unknown";
}

std::optional<ExperimentKind> parse_experiment(std::string_view name) {
  for (auto kind : {ExperimentKind::LocalPower, ExperimentKind::McFuncform, ExperimentKind::McGarch,
                    ExperimentKind::PValuePaths}) {
    if (to_string(kind) == name) return kind;
  }
  return std::nullopt;
}

void ExperimentConfig::validate() const {
  const auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidArgument, msg); };
  if (experiment != ExperimentKind::PValuePaths && replications < 100) {
    fail(fmt::format("experiment.replications = {} < 100", replications));
  }
  if (levels.empty()) fail("experiment.levels is empty");
  for (double a : levels) {
    if (!(a > 0.0 && a < 1.0)) fail(fmt::format("experiment.levels: {} outside (0, 1)", a));
  }
  if (experiment != ExperimentKind::LocalPower) {
    if (sample_sizes.empty()) fail("experiment.n is empty");
    for (auto n : sample_sizes) {
      if (n < 10) fail(fmt::format("experiment.n: {} < 10", n));
    }
  }
  if (!(grid.lower < grid.upper)) fail("grid.lower must be below grid.upper");
  if (grid.points == 0 && !(grid.coarseness > 0.0)) fail("grid.coarseness must be positive");
  switch (experiment) {
    case ExperimentKind::LocalPower:
      if (drift_values.empty()) fail("local_power.drift is empty");
      if (process_length < 10) fail("local_power.length < 10");
      break;
    case ExperimentKind::McFuncform:
    case ExperimentKind::PValuePaths:
      if (dgps.empty() && experiment == ExperimentKind::McFuncform) fail("funcform.dgps is empty");
      if (bootstrap_replicates != 0 && bootstrap_replicates < 100) fail("funcform.bootstrap must be 0 or >= 100");
      if (experiment == ExperimentKind::McFuncform) break;
      [[fallthrough]];
    case ExperimentKind::McGarch:
      for (double d : garch_deltas) {
        if (!(d >= 0.0 && d < 1.0)) fail(fmt::format("garch.deltas: {} outside [0, 1)", d));
      }
      if (reference_truncation < 1000) fail("garch.truncation < 1000");
      if (reference_replicates < 500) fail("garch.reference_draws < 500");
      if (qml_starts == 0) fail("garch.starts must be >= 1");
      space.validate();
      break;
  }
  if (threads == 0) fail("threads must be >= 1");
}

std::vector<std::string> preset_names() {
  return {"desk-local-power", "full-local-power", "desk-funcform", "full-funcform",
          "desk-garch",       "full-garch",       "desk-paths"};
}

ExperimentConfig preset_config(std::string_view name) {
  ExperimentConfig c;
  c.preset = std::string(name);
  if (name == "desk-local-power" || name == "full-local-power") {
    const bool full = name == "full-local-power";
    c.experiment = ExperimentKind::LocalPower;
    c.replications = full ? 100000 : 2000;
    c.process_length = full ? 100000 : 2000;
    c.grid = GridSpec{0.0, 1.0, 1.0, full ? std::size_t{1000} : std::size_t{200}};
    c.drift_values = desk_drifts();
    c.sample_sizes = {};
  } else if (name == "desk-funcform" || name == "full-funcform") {
    const bool full = name == "full-funcform";
    c.experiment = ExperimentKind::McFuncform;
    c.replications = full ? 10000 : 1000;
    c.grid = GridSpec{0.0001, 1.0, full ? 100.0 : 10.0, 0};
  } else if (name == "desk-garch" || name == "full-garch") {
    const bool full = name == "full-garch";
    c.experiment = ExperimentKind::McGarch;
    c.replications = full ? 10000 : 250;
    c.grid = full ? GridSpec{0.01, 0.99, 1.0, 0} : GridSpec{0.01, 0.99, 1.0, 50};
    c.reference_truncation = full ? garch::kFullTruncation : 5000;
    c.reference_replicates = full ? garch::kFullReplicates : 2000;
  } else if (name == "desk-paths") {
    c.experiment = ExperimentKind::PValuePaths;
    c.sample_sizes = {250};
    c.grid = GridSpec{0.0001, 1.0, 100.0, 0};
    c.garch_grid = GridSpec{0.01, 0.99, 1.0, 0};
  } else {
    throw Error(ErrorKind::InvalidArgument, fmt::format("unknown preset '{}'", name));
  }
  return c;
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorKind::Io, fmt::format("config file '{}' does not exist", path.string()));
  }
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(ErrorKind::InvalidArgument, fmt::format("config file '{}': {}", path.string(), e.message()));
  }
  std::map<std::string, std::string> flat;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      flat[section] = body.data();
      continue;
    }
    for (const auto& [key, value] : body) flat[section + "." + key] = value.data();
  }
  return flat;
}

void apply_settings(ExperimentConfig& config, const std::map<std::string, std::string>& settings) {
  const auto& table = setters();
  for (const auto& [key, value] : settings) {
    if (key.rfind("manifest.", 0) == 0) continue;
    const auto it = table.find(key);
    if (it == table.end()) throw Error(ErrorKind::InvalidArgument, fmt::format("unknown config key '{}'", key));
    it->second(config, key, value);
  }
}

ExperimentConfig resolve_config(const std::string& fallback_preset, const std::optional<std::string>& preset_flag,
                                const std::optional<std::filesystem::path>& file,
                                const std::map<std::string, std::string>& overrides) {
  std::map<std::string, std::string> file_settings;
  if (file) file_settings = read_config_file(*file);
  std::string preset = fallback_preset;
  if (const auto it = file_settings.find("experiment.preset"); it != file_settings.end()) preset = it->second;
  if (preset_flag) preset = *preset_flag;
  if (const auto it = overrides.find("experiment.preset"); it != overrides.end()) preset = it->second;

  ExperimentConfig config = preset_config(csv::trim(preset));
  apply_settings(config, file_settings);
  apply_settings(config, overrides);
  config.preset = std::string(csv::trim(preset));
  config.validate();
  return config;
}

std::string to_ini(const ExperimentConfig& c) {
  std::ostringstream out;
  std::vector<std::string> dgps;
  for (auto k : c.dgps) dgps.emplace_back(dgp::to_string(k));
  std::string dgp_list;
  for (std::size_t i = 0; i < dgps.size(); ++i) dgp_list += (i ? "," : "") + dgps[i];

  out << "[experiment]\n";
  out << "kind = " << to_string(c.experiment) << '\n';
  out << "preset = " << c.preset << '\n';
  out << "seed = " << c.seed << '\n';
  out << "replications = " << c.replications << '\n';
  out << "n = " << join_sizes(c.sample_sizes) << '\n';
  out << "levels = " << join_reals(c.levels) << '\n';
  out << "\n[grid]\n";
  out << "lower = " << csv::format_shortest(c.grid.lower) << '\n';
  out << "upper = " << csv::format_shortest(c.grid.upper) << '\n';
  out << "coarseness = " << csv::format_shortest(c.grid.coarseness) << '\n';
  out << "points = " << c.grid.points << '\n';
  out << "\n[local_power]\n";
  out << "length = " << c.process_length << '\n';
  out << "drift = " << join_reals(c.drift_values) << '\n';
  out << "\n[funcform]\n";
  out << "dgps = " << dgp_list << '\n';
  out << "bootstrap = " << c.bootstrap_replicates << '\n';
  out << "\n[garch]\n";
  out << "deltas = " << join_reals(c.garch_deltas) << '\n';
  out << "omega = " << csv::format_shortest(c.garch_omega) << '\n';
  out << "lambda = " << csv::format_shortest(c.garch_lambda) << '\n';
  out << "truncation = " << c.reference_truncation << '\n';
  out << "reference_draws = " << c.reference_replicates << '\n';
  out << "starts = " << c.qml_starts << '\n';
  out << "omega_lower = " << csv::format_shortest(c.space.omega.lower) << '\n';
  out << "omega_upper = " << csv::format_shortest(c.space.omega.upper) << '\n';
  out << "delta_upper = " << csv::format_shortest(c.space.delta.upper) << '\n';
  out << "grid_lower = " << csv::format_shortest(c.garch_grid.lower) << '\n';
  out << "grid_upper = " << csv::format_shortest(c.garch_grid.upper) << '\n';
  out << "grid_coarseness = " << csv::format_shortest(c.garch_grid.coarseness) << '\n';
  out << "grid_points = " << c.garch_grid.points << '\n';
  return out.str();
}

std::string config_hash(const ExperimentConfig& config) { return hex64(fnv1a64(to_ini(config))); }

}  // namespace pvot
