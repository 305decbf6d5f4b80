#include "pvot/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "pvot/config.hpp"
#include "pvot/csv.hpp"
#include "pvot/dgp.hpp"
#include "pvot/error.hpp"
#include "pvot/experiments.hpp"
#include "pvot/funcform.hpp"
#include "pvot/garch.hpp"
#include "pvot/parallel.hpp"
#include "pvot/pvot.hpp"
#include "pvot/structural_break.hpp"

namespace pvot::cli {

namespace {

constexpr std::uint64_t kTestTask = 0x74657374ULL;

// Raised for problems with the invocation itself (exit status 1).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string data;
  std::string levels;
  std::string grid;
  std::optional<std::string> preset;
  std::optional<std::uint64_t> seed;
  std::size_t threads = default_threads();
  std::string out = "results";
  std::string cache;
  std::optional<std::string> config;
  std::vector<std::string> sets;
  std::size_t bootstrap = funcform::kDefaultBootstrapReplicates;
  std::size_t truncation = 5000;
  std::size_t draws = 2000;
  std::size_t n = 250;
  std::string cache_action;
};

std::string invocation_text(int argc, const char* const* argv) {
  std::string text;
  for (int i = 0; i < argc; ++i) text += (i ? " " : "") + std::string(argv[i]);
  return text;
}

std::filesystem::path cache_dir(const Options& o) {
  if (!o.cache.empty()) return o.cache;
  if (const char* env = std::getenv("PVOT_CACHE_DIR"); env && *env) return env;
  return {};
}

std::vector<double> levels_or(const Options& o, std::vector<double> fallback) {
  if (o.levels.empty()) return fallback;
  try {
    auto levels = parse_real_list(o.levels);
    for (double a : levels) {
      if (!(a > 0.0 && a < 1.0)) throw UsageError(fmt::format("--levels: {} is outside (0, 1)", a));
    }
    if (levels.empty()) throw UsageError("--levels is empty");
    return levels;
  } catch (const Error& e) {
    throw UsageError(fmt::format("--levels '{}': {}", o.levels, e.what()));
  }
}

GridSpec grid_or(const Options& o, GridSpec fallback) {
  if (o.grid.empty()) return fallback;
  const auto parts = csv::split(o.grid, ':');
  if (parts.size() != 3) throw UsageError(fmt::format("--grid '{}': expected lower:upper:coarseness", o.grid));
  double values[3];
  for (std::size_t i = 0; i < 3; ++i) {
    std::vector<double> list;
    try {
      list = parse_real_list(parts[i]);
    } catch (const Error&) {
    }
    if (list.size() != 1) throw UsageError(fmt::format("--grid '{}': '{}' is not a number", o.grid, parts[i]));
    values[i] = list[0];
  }
  GridSpec spec{values[0], values[1], values[2], 0};
  if (!(spec.lower < spec.upper) || !(spec.coarseness > 0.0)) {
    throw UsageError(fmt::format("--grid '{}': need lower < upper and coarseness > 0", o.grid));
  }
  return spec;
}

std::map<std::string, std::string> collect_overrides(const Options& o) {
  std::map<std::string, std::string> overrides;
  for (const auto& item : o.sets) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError(fmt::format("--set '{}': expected section.key=value", item));
    overrides[std::string(csv::trim(item.substr(0, eq)))] = std::string(csv::trim(item.substr(eq + 1)));
  }
  if (o.seed) overrides["experiment.seed"] = std::to_string(*o.seed);
  if (!o.levels.empty()) overrides["experiment.levels"] = o.levels;
  if (!o.grid.empty()) {
    const GridSpec g = grid_or(o, {});
    overrides["grid.lower"] = csv::format_shortest(g.lower);
    overrides["grid.upper"] = csv::format_shortest(g.upper);
    overrides["grid.coarseness"] = csv::format_shortest(g.coarseness);
    overrides["grid.points"] = "0";
  }
  return overrides;
}

ExperimentConfig build_config(const Options& o, const std::string& fallback_preset) {
  ExperimentConfig config;
  try {
    std::optional<std::filesystem::path> file;
    if (o.config) file = *o.config;
    config = resolve_config(fallback_preset, o.preset, file, collect_overrides(o));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::InvalidArgument) throw UsageError(e.what());
    throw;
  }
  config.threads = std::max<std::size_t>(1, o.threads);
  config.cache_dir = cache_dir(o);
  return config;
}

void print_report(std::ostream& out, const std::string& label, const PvotReport& r) {
  const auto show = [](double v) { return std::isnan(v) ? std::string("-") : fmt::format("{:.6g}", v); };
  out << fmt::format("{:<12} {:<11} level={:<5} occupation={:<10} stat={:<10} p={:<10} crit={:<10} {}\n", label,
                     to_string(r.method), csv::format_shortest(r.level), show(r.occupation_time), show(r.statistic),
                     show(r.pvalue), show(r.critical_value), r.reject ? "REJECT" : "fail to reject");
}

void write_reports_csv(const std::filesystem::path& dir, const std::vector<PvotReport>& reports) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "reports.csv", std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, fmt::format("cannot write '{}'", (dir / "reports.csv").string()));
  out << "method,level,occupation_time,statistic,pvalue,critical_value,reject\n";
  for (const auto& r : reports) {
    out << to_string(r.method) << ',' << csv::format_shortest(r.level) << ',' << csv::format_double(r.occupation_time)
        << ',' << csv::format_double(r.statistic) << ',' << csv::format_double(r.pvalue) << ','
        << csv::format_double(r.critical_value) << ',' << (r.reject ? 1 : 0) << '\n';
  }
}

void write_path_csv(const std::filesystem::path& dir, const StatPath& stat, const PValuePath& p) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "pvalue_path.csv", std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, fmt::format("cannot write '{}'", (dir / "pvalue_path.csv").string()));
  out << "lambda,stat,pvalue\n";
  for (std::size_t g = 0; g < p.size(); ++g) {
    out << csv::format_double(p.grid()[g]) << ',' << csv::format_double(stat[g]) << ',' << csv::format_double(p[g])
        << '\n';
  }
}

void write_test_manifest(const std::filesystem::path& dir, const std::string& command, std::uint64_t seed,
                         const std::vector<std::pair<std::string, std::string>>& settings, double wall_seconds) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "manifest.ini", std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, fmt::format("cannot write '{}'", (dir / "manifest.ini").string()));
  out << "[manifest]\n";
  out << "version = " << PVOT_VERSION << '\n';
  out << "seed = " << seed << '\n';
  out << "wall_seconds = " << fmt::format("{:.3f}", wall_seconds) << '\n';
  out << "command = " << command << '\n';
  for (const auto& [k, v] : settings) out << k << " = " << v << '\n';
}

dgp::Sample load_data(const Options& o) {
  if (o.data.empty()) throw UsageError("--data is required");
  if (!std::filesystem::exists(o.data)) {
    throw Error(ErrorKind::Io, fmt::format("data file '{}' does not exist", o.data));
  }
  return dgp::read_sample_csv(o.data);
}

std::string grid_text(const GridSpec& g) {
  return fmt::format("{}:{}:{}", csv::format_shortest(g.lower), csv::format_shortest(g.upper),
                     csv::format_shortest(g.coarseness));
}

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

int run_test_funcform(const Options& o, const std::string& command, std::ostream& out) {
  const auto start = Clock::now();
  const auto levels = levels_or(o, {0.01, 0.05, 0.10});
  const GridSpec gspec = grid_or(o, GridSpec{0.0001, 1.0, 100.0, 0});
  const dgp::Sample sample = load_data(o);
  const std::uint64_t seed = o.seed.value_or(42);
  if (o.bootstrap != 0 && o.bootstrap < 100) throw UsageError("--bootstrap must be 0 or >= 100");
  if (sample.k() == 0) throw UsageError(fmt::format("'{}' has no regressor columns x1..", o.data));

  const NuisanceGrid grid = make_grid(gspec, sample.n());
  const funcform::LsFit fit = funcform::ols_fit(sample);
  const funcform::LmResult lm = funcform::lm_stat_path(sample, fit, grid);
  const PValuePath p = funcform::asym_pvalue_path(lm.path);
  const RandomStream base = make_stream(seed, kTestTask);
  RandomStream pick_rng = base.derive(1);
  const std::size_t star = pick_randomized(grid, pick_rng);
  funcform::BootstrapPValues boot;
  if (o.bootstrap > 0) boot = funcform::wild_bootstrap_pvalues(lm.context, fit, o.bootstrap, base.derive(2));

  out << fmt::format("test-funcform: n={} grid points={} lambda*={}\n", sample.n(), grid.size(),
                     csv::format_shortest(grid[star]));
  std::vector<PvotReport> reports;
  for (double a : levels) {
    PvotReport pv = pvot_decide(occupation_time(p, a), a);
    reports.push_back(pv);
    PvotReport rnd{Method::Randomized, a};
    rnd.statistic = lm.path[star];
    rnd.pvalue = p[star];
    rnd.reject = rnd.pvalue < a;
    reports.push_back(rnd);
    if (o.bootstrap > 0) {
      PvotReport sup{Method::Sup, a};
      sup.statistic = smooth_sup(lm.path);
      sup.pvalue = boot.sup;
      sup.reject = boot.sup < a;
      reports.push_back(sup);
      PvotReport ave{Method::Ave, a};
      ave.statistic = smooth_ave(lm.path);
      ave.pvalue = boot.ave;
      ave.reject = boot.ave < a;
      reports.push_back(ave);
    }
    if (funcform::icm_supports(a)) reports.push_back(funcform::icm_test(lm.context, a));
  }
  for (const auto& r : reports) print_report(out, "funcform", r);
  write_path_csv(o.out, lm.path, p);
  write_reports_csv(o.out, reports);
  write_test_manifest(o.out, command, seed,
                      {{"data", o.data}, {"grid", grid_text(gspec)}, {"bootstrap", std::to_string(o.bootstrap)}},
                      seconds_since(start));
  return kExitOk;
}

int run_test_garch(const Options& o, const std::string& command, std::ostream& out) {
  const auto start = Clock::now();
  const auto levels = levels_or(o, {0.01, 0.05, 0.10});
  const GridSpec gspec = grid_or(o, GridSpec{0.01, 0.99, 1.0, 0});
  const dgp::Sample sample = load_data(o);
  const std::uint64_t seed = o.seed.value_or(42);
  if (o.truncation < 1000 || o.draws < 500) throw UsageError("--truncation must be >= 1000 and --draws >= 500");

  const NuisanceGrid grid = make_grid(gspec, sample.n());
  bool hit = false;
  const auto table = garch::cached_reference_table(cache_dir(o), grid, o.truncation, o.draws, seed,
                                                   std::max<std::size_t>(1, o.threads), &hit);
  const std::span<const double> y(sample.y.data(), static_cast<std::size_t>(sample.y.size()));
  const RandomStream base = make_stream(seed, kTestTask);
  const auto fit = garch::garch_stat_path(y, grid, garch::GarchSpace{}, base.derive(1));
  const PValuePath p = garch::sim_pvalue_path(fit.path, table);
  RandomStream pick_rng = base.derive(2);
  const std::size_t star = pick_randomized(grid, pick_rng);
  const double p_sup = garch::sim_pvalue_transform(fit.path, table, Transform::Sup);
  const double p_ave = garch::sim_pvalue_transform(fit.path, table, Transform::Ave);

  out << fmt::format("test-garch: n={} grid points={} reference table {} (R={}, M={}) lambda*={} failed fits={}\n",
                     sample.n(), grid.size(), hit ? "loaded from cache" : "simulated", o.truncation, o.draws,
                     csv::format_shortest(grid[star]), fit.failures);
  std::vector<PvotReport> reports;
  for (double a : levels) {
    reports.push_back(pvot_decide(occupation_time(p, a), a));
    PvotReport sup{Method::Sup, a};
    sup.statistic = smooth_sup(fit.path);
    sup.pvalue = p_sup;
    sup.reject = p_sup < a;
    reports.push_back(sup);
    PvotReport ave{Method::Ave, a};
    ave.statistic = smooth_ave(fit.path);
    ave.pvalue = p_ave;
    ave.reject = p_ave < a;
    reports.push_back(ave);
    PvotReport rnd{Method::Randomized, a};
    rnd.statistic = fit.path[star];
    rnd.pvalue = p[star];
    rnd.reject = rnd.pvalue < a;
    reports.push_back(rnd);
  }
  for (const auto& r : reports) print_report(out, "garch", r);
  write_path_csv(o.out, fit.path, p);
  write_reports_csv(o.out, reports);
  write_test_manifest(o.out, command, seed,
                      {{"data", o.data},
                       {"grid", grid_text(gspec)},
                       {"truncation", std::to_string(o.truncation)},
                       {"reference_draws", std::to_string(o.draws)}},
                      seconds_since(start));
  return kExitOk;
}

int run_test_break(const Options& o, const std::string& command, std::ostream& out) {
  const auto start = Clock::now();
  const auto levels = levels_or(o, {0.01, 0.05, 0.10});
  const GridSpec gspec = grid_or(o, GridSpec{0.15, 0.85, 1.0, 0});
  const dgp::Sample sample = load_data(o);
  const std::uint64_t seed = o.seed.value_or(42);
  if (sample.k() == 0) throw UsageError(fmt::format("'{}' has no regressor columns x1..", o.data));

  const NuisanceGrid grid = make_grid(gspec, sample.n());
  const StatPath path = brk::break_wald_path(sample, grid);
  const PValuePath p = brk::break_pvalue_path(path, static_cast<int>(sample.k()));
  RandomStream pick_rng = make_stream(seed, kTestTask).derive(1);
  const std::size_t star = pick_randomized(grid, pick_rng);

  out << fmt::format("test-break: n={} k={} grid points={} lambda*={}\n", sample.n(), sample.k(), grid.size(),
                     csv::format_shortest(grid[star]));
  std::vector<PvotReport> reports;
  for (double a : levels) {
    reports.push_back(pvot_decide(occupation_time(p, a), a));
    PvotReport rnd{Method::Randomized, a};
    rnd.statistic = path[star];
    rnd.pvalue = p[star];
    rnd.reject = rnd.pvalue < a;
    reports.push_back(rnd);
  }
  for (const auto& r : reports) print_report(out, "break", r);
  write_path_csv(o.out, path, p);
  write_reports_csv(o.out, reports);
  write_test_manifest(o.out, command, seed, {{"data", o.data}, {"grid", grid_text(gspec)}}, seconds_since(start));
  return kExitOk;
}

int run_mc(const Options& o, const std::string& command, std::ostream& out) {
  const ExperimentConfig config = build_config(o, "desk-funcform");
  experiments::McSummary summary;
  if (config.experiment == ExperimentKind::McFuncform) {
    summary = experiments::run_mc_funcform(config);
  } else if (config.experiment == ExperimentKind::McGarch) {
    summary = experiments::run_mc_garch(config);
  } else {
    throw UsageError(fmt::format("mc needs a mc_funcform or mc_garch config, got '{}'", to_string(config.experiment)));
  }
  for (const auto& file : experiments::write_outputs(o.out, summary)) out << "wrote " << file.string() << '\n';
  experiments::write_manifest(o.out, config, command, summary.wall_seconds);
  out << fmt::format("{} rows, config hash {}, {:.1f} s\n", summary.rows.size(), summary.config_hash,
                     summary.wall_seconds);
  if (summary.unreliable()) {
    throw Error(ErrorKind::ExperimentUnreliable,
                fmt::format("{:.2f}% of replications failed in the worst cell (limit {:.0f}%)",
                            100.0 * summary.worst_failure_rate, 100.0 * experiments::kMaxFailureRate));
  }
  return kExitOk;
}

int run_local_power(const Options& o, const std::string& command, std::ostream& out) {
  const ExperimentConfig config = build_config(o, "desk-local-power");
  if (config.experiment != ExperimentKind::LocalPower) {
    throw UsageError(fmt::format("local-power needs a local_power config, got '{}'", to_string(config.experiment)));
  }
  const auto curves = experiments::run_local_power(config);
  for (const auto& file : experiments::write_outputs(o.out, curves)) out << "wrote " << file.string() << '\n';
  experiments::write_manifest(o.out, config, command, curves.wall_seconds);
  out << fmt::format("{} rows, config hash {}, {:.1f} s\n", curves.rows.size(), curves.config_hash,
                     curves.wall_seconds);
  return kExitOk;
}

int run_paths(const Options& o, const std::string& command, std::ostream& out) {
  const ExperimentConfig config = build_config(o, "desk-paths");
  const auto output = experiments::emit_pvalue_paths(config);
  for (const auto& file : experiments::write_outputs(o.out, output)) out << "wrote " << file.string() << '\n';
  experiments::write_manifest(o.out, config, command, output.wall_seconds);
  for (const auto& r : output.summary) {
    out << fmt::format("{:<16} level={:<5} occupation={:<8.4f} {}\n", r.label, csv::format_shortest(r.level),
                       r.occupation_time, r.reject ? "REJECT" : "fail to reject");
  }
  return kExitOk;
}

int run_cache(const Options& o, std::ostream& out) {
  const auto dir = cache_dir(o);
  if (dir.empty()) throw UsageError("cache needs --cache or PVOT_CACHE_DIR");
  if (o.cache_action == "list") {
    if (!std::filesystem::exists(dir)) return kExitOk;
    std::vector<std::filesystem::path> metas;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      const auto name = entry.path().filename().string();
      if (name.rfind("ref_", 0) == 0 && entry.path().extension() == ".meta") metas.push_back(entry.path());
    }
    std::sort(metas.begin(), metas.end());
    for (const auto& m : metas) {
      std::ifstream in(m);
      std::string line, joined;
      while (std::getline(in, line)) joined += (joined.empty() ? "" : " ") + line;
      out << m.stem().string() << ": " << joined << '\n';
    }
    return kExitOk;
  }
  if (o.cache_action == "clear") {
    std::size_t removed = 0;
    if (std::filesystem::exists(dir)) {
      std::vector<std::filesystem::path> doomed;
      for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().filename().string().rfind("ref_", 0) == 0) doomed.push_back(entry.path());
      }
      for (const auto& p : doomed) removed += std::filesystem::remove(p) ? 1 : 0;
    }
    out << "removed " << removed << " files from " << dir.string() << '\n';
    return kExitOk;
  }
  // build
  const GridSpec gspec = grid_or(o, GridSpec{0.01, 0.99, 1.0, 0});
  if (o.truncation < 1000 || o.draws < 500) throw UsageError("--truncation must be >= 1000 and --draws >= 500");
  const NuisanceGrid grid = make_grid(gspec, o.n);
  bool hit = false;
  const std::uint64_t seed = o.seed.value_or(42);
  garch::cached_reference_table(dir, grid, o.truncation, o.draws, seed, std::max<std::size_t>(1, o.threads), &hit);
  out << (hit ? "already cached: " : "built: ") << "ref_"
      << garch::reference_cache_key(grid, o.truncation, o.draws, seed) << '\n';
  return kExitOk;
}

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--seed", o.seed, "Master seed; all randomness derives from it");
  cmd->add_option("--threads", o.threads, "Worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
  cmd->add_option("--out", o.out, "Output directory")->capture_default_str();
  cmd->add_option("--cache", o.cache, "Reference-table cache directory (default: $PVOT_CACHE_DIR)");
  cmd->add_option("--levels", o.levels, "Comma-separated significance levels");
  cmd->add_option("--grid", o.grid, "Nuisance grid as lower:upper:coarseness");
}

void add_experiment(CLI::App* cmd, Options& o) {
  add_common(cmd, o);
  cmd->add_option("--preset", o.preset, "Preset name");
  cmd->add_option("--config", o.config, "Configuration file with [section] key = value entries");
  cmd->add_option("--set", o.sets, "Override section.key=value (repeatable)");
}

}  // namespace

int parse_and_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"p-value occupation time tests and experiments", "pvot"};
  app.set_version_flag("--version", PVOT_VERSION);
  app.require_subcommand(1, 1);

  auto* tf = app.add_subcommand("test-funcform", "Functional form test on a data file (t,y,x1..)");
  add_common(tf, o);
  tf->add_option("--data", o.data, "Sample CSV")->required();
  tf->add_option("--bootstrap", o.bootstrap, "Wild bootstrap replicates, 0 disables")->capture_default_str();

  auto* tg = app.add_subcommand("test-garch", "GARCH effects test on a data file (t,y)");
  add_common(tg, o);
  tg->add_option("--data", o.data, "Sample CSV")->required();
  tg->add_option("--truncation", o.truncation, "Kernel series truncation")->capture_default_str();
  tg->add_option("--draws", o.draws, "Reference table replicates")->capture_default_str();

  auto* tb = app.add_subcommand("test-break", "Structural break test on a data file (t,y,x1..)");
  add_common(tb, o);
  tb->add_option("--data", o.data, "Sample CSV")->required();

  auto* mc = app.add_subcommand("mc", "Monte Carlo rejection frequencies (mc_funcform or mc_garch)");
  add_experiment(mc, o);
  auto* lp = app.add_subcommand("local-power", "Local asymptotic power curves");
  add_experiment(lp, o);
  auto* pa = app.add_subcommand("paths", "Example p-value paths");
  add_experiment(pa, o);

  auto* cache = app.add_subcommand("cache", "Manage the reference-table cache");
  cache->add_option("action", o.cache_action, "list, clear or build")
      ->required()
      ->check(CLI::IsMember({"list", "clear", "build"}));
  add_common(cache, o);
  cache->add_option("--n", o.n, "Sample size the grid is built for")->capture_default_str();
  cache->add_option("--truncation", o.truncation, "Kernel series truncation")->capture_default_str();
  cache->add_option("--draws", o.draws, "Reference table replicates")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const std::string command = invocation_text(argc, argv);
  try {
    if (tf->parsed()) return run_test_funcform(o, command, out);
    if (tg->parsed()) return run_test_garch(o, command, out);
    if (tb->parsed()) return run_test_break(o, command, out);
    if (mc->parsed()) return run_mc(o, command, out);
    if (lp->parsed()) return run_local_power(o, command, out);
    if (pa->parsed()) return run_paths(o, command, out);
    return run_cache(o, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::ExperimentUnreliable ? kExitUnreliable : kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace pvot::cli
