#include "pvot/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <ostream>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "pvot/csv.hpp"
#include "pvot/dgp.hpp"
#include "pvot/error.hpp"
#include "pvot/funcform.hpp"
#include "pvot/garch.hpp"
#include "pvot/parallel.hpp"
#include "pvot/pvot.hpp"
#include "pvot/random.hpp"

namespace pvot::experiments {

namespace {

// Task-id tags keep the stream trees of different studies apart.
constexpr std::uint64_t kTagFuncform = 0x66756e63666f726dULL;
constexpr std::uint64_t kTagGarch = 0x6761726368ULL;
constexpr std::uint64_t kTagLocalPower = 0x6c6f63706f776572ULL;
constexpr std::uint64_t kTagPaths = 0x7061746873ULL;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

RandomStream replication_stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t cell, std::uint64_t rep) {
  return make_stream(seed, combine_ids(tag, combine_ids(cell, rep)));
}

double binomial_se(double freq, std::size_t reps) {
  if (reps == 0) return 0.0;
  return std::sqrt(freq * (1.0 - freq) / static_cast<double>(reps));
}

// Per replication: one rejection flag per (method, level) slot, or a failure.
struct RepOutcome {
  bool failed = false;
  std::vector<std::uint8_t> reject;
  // Scores for size adjustment (larger = more evidence against the null).
  std::vector<double> score;
};

struct CellRows {
  std::vector<std::string> methods;
  std::vector<double> levels;
  // slot(method, level) is valid only when usable(method, level).
  std::vector<std::vector<bool>> usable;
};

void summarize_cell(const std::vector<RepOutcome>& outcomes, const CellRows& layout, const std::string& dgp_label,
                    std::size_t n, McSummary& summary) {
  std::size_t failures = 0;
  for (const auto& o : outcomes) failures += o.failed ? 1 : 0;
  const std::size_t reps = outcomes.size() - failures;
  if (!outcomes.empty()) {
    summary.worst_failure_rate = std::max(summary.worst_failure_rate,
                                          static_cast<double>(failures) / static_cast<double>(outcomes.size()));
  }
  const std::size_t levels = layout.levels.size();
  for (std::size_t m = 0; m < layout.methods.size(); ++m) {
    for (std::size_t l = 0; l < levels; ++l) {
      if (!layout.usable[m][l]) continue;
      std::size_t hits = 0;
      for (const auto& o : outcomes) {
        if (!o.failed && o.reject[m * levels + l]) ++hits;
      }
      McRow row;
      row.method = layout.methods[m];
      row.dgp = dgp_label;
      row.n = n;
      row.level = layout.levels[l];
      row.reps = reps;
      row.failures = failures;
      row.freq = reps ? static_cast<double>(hits) / static_cast<double>(reps) : 0.0;
      row.se = binomial_se(row.freq, reps);
      summary.rows.push_back(std::move(row));
    }
  }
}

std::string delta_label(double delta) { return "garch_d" + csv::format_shortest(delta); }

void write_header_comment(std::ostream& out, const std::string& hash, std::uint64_t seed) {
  out << "# config_hash=" << hash << " seed=" << seed << '\n';
}

std::filesystem::path write_file(const std::filesystem::path& dir, const std::string& name,
                                 const std::function<void(std::ostream&)>& body) {
  std::filesystem::create_directories(dir);
  const auto path = dir / name;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, fmt::format("cannot write '{}'", path.string()));
  body(out);
  out.flush();
  if (!out) throw Error(ErrorKind::Io, fmt::format("failed writing '{}'", path.string()));
  return path;
}

}  // namespace

bool McSummary::unreliable() const { return worst_failure_rate > kMaxFailureRate; }

double upper_quantile(std::vector<double> values, double level) {
  if (values.empty()) throw Error(ErrorKind::EmptyReference, "quantile of an empty sample");
  const auto count = values.size();
  auto rank = static_cast<std::size_t>(std::ceil((1.0 - level) * static_cast<double>(count) - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, count);
  auto nth = values.begin() + static_cast<std::ptrdiff_t>(rank - 1);
  std::nth_element(values.begin(), nth, values.end());
  return *nth;
}

McSummary run_mc_funcform(const ExperimentConfig& config) {
  if (config.experiment != ExperimentKind::McFuncform) {
    throw Error(ErrorKind::InvalidArgument, "run_mc_funcform needs a mc_funcform config");
  }
  config.validate();
  const auto start = Clock::now();
  McSummary summary;
  summary.seed = config.seed;
  summary.config_hash = config_hash(config);

  const bool bootstrap = config.bootstrap_replicates > 0;
  CellRows layout;
  layout.levels = config.levels;
  layout.methods = {"pvot", "randomized"};
  if (bootstrap) {
    layout.methods.emplace_back("sup");
    layout.methods.emplace_back("ave");
  }
  layout.methods.emplace_back("icm");
  for (const auto& m : layout.methods) {
    std::vector<bool> ok;
    for (double a : layout.levels) ok.push_back(m != "icm" || funcform::icm_supports(a));
    layout.usable.push_back(ok);
  }
  const std::size_t L = layout.levels.size();
  const std::size_t M = layout.methods.size();

  for (std::size_t d = 0; d < config.dgps.size(); ++d) {
    const auto spec = dgp::make_spec(config.dgps[d]);
    dgp::validate(spec);
    for (std::size_t ni = 0; ni < config.sample_sizes.size(); ++ni) {
      const std::size_t n = config.sample_sizes[ni];
      const NuisanceGrid grid = make_grid(config.grid, n);
      const std::uint64_t cell = combine_ids(d, n);
      std::vector<RepOutcome> outcomes(config.replications);

      parallel_for(config.replications, config.threads, [&](std::size_t r) {
        RepOutcome& out = outcomes[r];
        out.reject.assign(M * L, 0);
        const RandomStream base = replication_stream(config.seed, kTagFuncform, cell, r);
        try {
          RandomStream data_rng = base.derive(0);
          RandomStream pick_rng = base.derive(1);
          const dgp::Sample sample = dgp::gen_sample(spec, n, data_rng);
          const funcform::LsFit fit = funcform::ols_fit(sample);
          const funcform::LmResult lm = funcform::lm_stat_path(sample, fit, grid);
          const PValuePath p = funcform::asym_pvalue_path(lm.path);
          const double p_star = p[pick_randomized(grid, pick_rng)];
          funcform::BootstrapPValues boot;
          if (bootstrap) {
            boot = funcform::wild_bootstrap_pvalues(lm.context, fit, config.bootstrap_replicates, base.derive(2));
          }
          for (std::size_t l = 0; l < L; ++l) {
            const double a = layout.levels[l];
            std::size_t m = 0;
            out.reject[m++ * L + l] = pvot_decide(occupation_time(p, a), a).reject;
            out.reject[m++ * L + l] = p_star < a;
            if (bootstrap) {
              out.reject[m++ * L + l] = boot.sup < a;
              out.reject[m++ * L + l] = boot.ave < a;
            }
            if (funcform::icm_supports(a)) out.reject[m * L + l] = funcform::icm_test(lm.context, a).reject;
          }
        } catch (const Error&) {
          out.failed = true;
        }
      });
      summarize_cell(outcomes, layout, std::string(dgp::to_string(config.dgps[d])), n, summary);
    }
  }
  summary.wall_seconds = seconds_since(start);
  return summary;
}

McSummary run_mc_garch(const ExperimentConfig& config) {
  if (config.experiment != ExperimentKind::McGarch) {
    throw Error(ErrorKind::InvalidArgument, "run_mc_garch needs a mc_garch config");
  }
  config.validate();
  const auto start = Clock::now();
  McSummary summary;
  summary.seed = config.seed;
  summary.config_hash = config_hash(config);

  CellRows layout;
  layout.levels = config.levels;
  layout.methods = {"pvot", "sup", "ave", "randomized"};
  layout.usable.assign(layout.methods.size(), std::vector<bool>(layout.levels.size(), true));
  const std::size_t L = layout.levels.size();
  const std::size_t M = layout.methods.size();

  garch::QmlOptions options;
  options.starts = config.qml_starts;

  for (std::size_t ni = 0; ni < config.sample_sizes.size(); ++ni) {
    const std::size_t n = config.sample_sizes[ni];
    const NuisanceGrid grid = make_grid(config.grid, n);
    const garch::NullReferenceTable table =
        garch::cached_reference_table(config.cache_dir, grid, config.reference_truncation,
                                      config.reference_replicates, config.seed, config.threads);

    std::vector<std::vector<RepOutcome>> cells;
    for (std::size_t d = 0; d < config.garch_deltas.size(); ++d) {
      const auto spec = dgp::make_spec(
          dgp::DgpKind::Garch,
          {{"omega", config.garch_omega}, {"delta", config.garch_deltas[d]}, {"lambda", config.garch_lambda}});
      dgp::validate(spec);
      const std::uint64_t cell = combine_ids(d, n);
      std::vector<RepOutcome> outcomes(config.replications);

      parallel_for(config.replications, config.threads, [&](std::size_t r) {
        RepOutcome& out = outcomes[r];
        out.reject.assign(M * L, 0);
        out.score.assign(M * L, 0.0);
        const RandomStream base = replication_stream(config.seed, kTagGarch, cell, r);
        try {
          RandomStream data_rng = base.derive(0);
          RandomStream pick_rng = base.derive(2);
          const dgp::Sample sample = dgp::gen_garch(spec, n, data_rng);
          const std::span<const double> y(sample.y.data(), static_cast<std::size_t>(sample.y.size()));
          const garch::GarchPathResult fit = garch::garch_stat_path(y, grid, config.space, base.derive(1), options);
          const PValuePath p = garch::sim_pvalue_path(fit.path, table);
          const double p_sup = garch::sim_pvalue_transform(fit.path, table, Transform::Sup);
          const double p_ave = garch::sim_pvalue_transform(fit.path, table, Transform::Ave);
          const double p_star = p[pick_randomized(grid, pick_rng)];
          // Sup and ave are scored on the statistic itself: their simulated
          // p-values pile up at zero when the test is oversized.
          const double sup_stat = smooth_sup(fit.path);
          const double ave_stat = smooth_ave(fit.path);
          for (std::size_t l = 0; l < L; ++l) {
            const double a = layout.levels[l];
            const double ot = occupation_time(p, a);
            const double scores[] = {ot, sup_stat, ave_stat, -p_star};
            const bool rejects[] = {pvot_decide(ot, a).reject, p_sup < a, p_ave < a, p_star < a};
            for (std::size_t m = 0; m < M; ++m) {
              out.reject[m * L + l] = rejects[m];
              out.score[m * L + l] = scores[m];
            }
          }
        } catch (const Error&) {
          out.failed = true;
        }
      });
      summarize_cell(outcomes, layout, delta_label(config.garch_deltas[d]), n, summary);
      cells.push_back(std::move(outcomes));
    }

    // Size-adjusted power: critical values are empirical quantiles of the
    // scores from the delta = 0 cell at the same n.
    const auto null_it = std::find(config.garch_deltas.begin(), config.garch_deltas.end(), 0.0);
    if (null_it == config.garch_deltas.end()) continue;
    const auto& null_cell = cells[static_cast<std::size_t>(null_it - config.garch_deltas.begin())];
    CellRows adjusted = layout;
    for (auto& m : adjusted.methods) m += "_size_adjusted";
    std::vector<double> critical(M * L, 0.0);
    bool have_null = false;
    for (std::size_t s = 0; s < M * L; ++s) {
      std::vector<double> scores;
      for (const auto& o : null_cell) {
        if (!o.failed) scores.push_back(o.score[s]);
      }
      if (scores.empty()) break;
      have_null = true;
      critical[s] = upper_quantile(std::move(scores), layout.levels[s % L]);
    }
    if (!have_null) continue;
    for (std::size_t d = 0; d < cells.size(); ++d) {
      std::vector<RepOutcome> rescored = cells[d];
      for (auto& o : rescored) {
        if (o.failed) continue;
        for (std::size_t s = 0; s < M * L; ++s) o.reject[s] = o.score[s] > critical[s];
      }
      summarize_cell(rescored, adjusted, delta_label(config.garch_deltas[d]), n, summary);
    }
  }
  summary.wall_seconds = seconds_since(start);
  return summary;
}

PowerCurves run_local_power(const ExperimentConfig& config) {
  if (config.experiment != ExperimentKind::LocalPower) {
    throw Error(ErrorKind::InvalidArgument, "run_local_power needs a local_power config");
  }
  config.validate();
  const auto start = Clock::now();
  PowerCurves curves;
  curves.seed = config.seed;
  curves.config_hash = config_hash(config);

  const std::size_t T = config.process_length;
  const std::size_t R = config.replications;
  const NuisanceGrid grid = make_grid(config.grid, T);
  const std::size_t G = grid.size();
  const std::size_t B = config.drift_values.size();
  const std::size_t L = config.levels.size();

  Eigen::ArrayXd lambda(static_cast<Eigen::Index>(G));
  for (std::size_t g = 0; g < G; ++g) lambda[static_cast<Eigen::Index>(g)] = grid[g];
  const Eigen::ArrayXd drift_shape = lambda.square().exp();
  const Eigen::ArrayXd centering = (-lambda.square()).exp();
  const double inv_root_t = 1.0 / std::sqrt(static_cast<double>(T));

  // Per replicate and drift: ave, sup, randomized p-value, icm integral and
  // one occupation time per level.
  const std::size_t width = 4 + L;
  std::vector<double> results(R * B * width);

  parallel_for(R, config.threads, [&](std::size_t i) {
    RandomStream base = make_stream(config.seed, combine_ids(kTagLocalPower, i));
    RandomStream data_rng = base.derive(0);
    RandomStream pick_rng = base.derive(1);
    Eigen::ArrayXd eps(static_cast<Eigen::Index>(T));
    Eigen::ArrayXd x(static_cast<Eigen::Index>(T));
    for (Eigen::Index t = 0; t < eps.size(); ++t) {
      eps[t] = data_rng.normal();
      x[t] = data_rng.normal();
    }
    Eigen::ArrayXd z(static_cast<Eigen::Index>(G));
    for (Eigen::Index g = 0; g < z.size(); ++g) z[g] = (eps * (lambda[g] * x).exp()).sum() * inv_root_t;
    const Eigen::ArrayXd zc = z * centering;
    const std::size_t star = pick_randomized(grid, pick_rng);

    for (std::size_t b = 0; b < B; ++b) {
      const Eigen::ArrayXd shift = config.drift_values[b] * drift_shape;
      const Eigen::ArrayXd stat = (zc + shift).square();
      double* row = &results[(i * B + b) * width];
      row[0] = stat.mean();
      row[1] = stat.maxCoeff();
      row[2] = chi2_upper_tail(stat[static_cast<Eigen::Index>(star)], 1);
      row[3] = (z + shift).square().mean();
      std::vector<double> p(G);
      for (std::size_t g = 0; g < G; ++g) p[g] = chi2_upper_tail(stat[static_cast<Eigen::Index>(g)], 1);
      const PValuePath path(grid, std::move(p));
      for (std::size_t l = 0; l < L; ++l) row[4 + l] = occupation_time(path, config.levels[l]);
    }
  });

  const auto at = [&](std::size_t i, std::size_t b, std::size_t c) { return results[(i * B + b) * width + c]; };
  const auto null_it = std::find(config.drift_values.begin(), config.drift_values.end(), 0.0);
  if (null_it == config.drift_values.end()) {
    throw Error(ErrorKind::InvalidArgument, "local_power.drift must include 0 for the ave/sup critical values");
  }
  const auto b0 = static_cast<std::size_t>(null_it - config.drift_values.begin());

  const auto push = [&](const char* method, double level, double b, std::size_t hits) {
    const double power = static_cast<double>(hits) / static_cast<double>(R);
    curves.rows.push_back({method, level, b, power, binomial_se(power, R)});
  };

  for (std::size_t l = 0; l < L; ++l) {
    const double a = config.levels[l];
    std::vector<double> ave0(R), sup0(R);
    for (std::size_t i = 0; i < R; ++i) {
      ave0[i] = at(i, b0, 0);
      sup0[i] = at(i, b0, 1);
    }
    const double c_ave = upper_quantile(std::move(ave0), a);
    const double c_sup = upper_quantile(std::move(sup0), a);
    const bool icm = funcform::icm_supports(a);
    const double c_icm = icm ? kIcmVarianceIntegral * funcform::icm_bound(a) : 0.0;

    for (std::size_t b = 0; b < B; ++b) {
      std::size_t pvot = 0, ave = 0, sup = 0, rnd = 0, icm_hits = 0;
      for (std::size_t i = 0; i < R; ++i) {
        pvot += at(i, b, 4 + l) > a ? 1 : 0;
        ave += at(i, b, 0) > c_ave ? 1 : 0;
        sup += at(i, b, 1) > c_sup ? 1 : 0;
        rnd += at(i, b, 2) < a ? 1 : 0;
        icm_hits += at(i, b, 3) > c_icm ? 1 : 0;
      }
      const double drift = config.drift_values[b];
      push("pvot", a, drift, pvot);
      push("ave", a, drift, ave);
      push("sup", a, drift, sup);
      push("randomized", a, drift, rnd);
      if (icm) push("icm", a, drift, icm_hits);
    }
  }
  curves.wall_seconds = seconds_since(start);
  return curves;
}

PathsOutput emit_pvalue_paths(const ExperimentConfig& config) {
  config.validate();
  const auto start = Clock::now();
  PathsOutput output;
  output.seed = config.seed;
  output.config_hash = config_hash(config);
  if (config.sample_sizes.empty()) throw Error(ErrorKind::InvalidArgument, "experiment.n is empty");
  const std::size_t n = config.sample_sizes.front();

  const auto record = [&](std::string label, const StatPath& stat, const PValuePath& p) {
    LabeledPath path;
    path.label = std::move(label);
    for (std::size_t g = 0; g < p.size(); ++g) {
      path.lambda.push_back(p.grid()[g]);
      path.stat.push_back(stat[g]);
      path.pvalue.push_back(p[g]);
    }
    for (double a : config.levels) {
      const double ot = occupation_time(p, a);
      output.summary.push_back({path.label, a, ot, pvot_decide(ot, a).reject});
    }
    output.paths.push_back(std::move(path));
  };

  const NuisanceGrid grid = make_grid(config.grid, n);
  for (std::size_t d = 0; d < config.dgps.size(); ++d) {
    const auto spec = dgp::make_spec(config.dgps[d]);
    dgp::validate(spec);
    RandomStream rng = make_stream(config.seed, combine_ids(kTagPaths, d));
    const dgp::Sample sample = dgp::gen_sample(spec, n, rng);
    const funcform::LsFit fit = funcform::ols_fit(sample);
    const funcform::LmResult lm = funcform::lm_stat_path(sample, fit, grid);
    record(std::string(dgp::to_string(config.dgps[d])), lm.path, funcform::asym_pvalue_path(lm.path));
  }

  if (!config.garch_deltas.empty()) {
    const NuisanceGrid ggrid = make_grid(config.garch_grid, n);
    const garch::NullReferenceTable table =
        garch::cached_reference_table(config.cache_dir, ggrid, config.reference_truncation,
                                      config.reference_replicates, config.seed, config.threads);
    garch::QmlOptions options;
    options.starts = config.qml_starts;
    for (std::size_t d = 0; d < config.garch_deltas.size(); ++d) {
      const auto spec = dgp::make_spec(
          dgp::DgpKind::Garch,
          {{"omega", config.garch_omega}, {"delta", config.garch_deltas[d]}, {"lambda", config.garch_lambda}});
      dgp::validate(spec);
      const RandomStream base = make_stream(config.seed, combine_ids(kTagPaths, combine_ids(kTagGarch, d)));
      RandomStream data_rng = base.derive(0);
      const dgp::Sample sample = dgp::gen_garch(spec, n, data_rng);
      const std::span<const double> y(sample.y.data(), static_cast<std::size_t>(sample.y.size()));
      const auto fit = garch::garch_stat_path(y, ggrid, config.space, base.derive(1), options);
      record(delta_label(config.garch_deltas[d]), fit.path, garch::sim_pvalue_path(fit.path, table));
    }
  }
  output.wall_seconds = seconds_since(start);
  return output;
}

void write_mc_csv(std::ostream& out, const McSummary& summary) {
  write_header_comment(out, summary.config_hash, summary.seed);
  out << "method,dgp,n,level,freq,se,reps,failures\n";
  for (const auto& r : summary.rows) {
    out << r.method << ',' << r.dgp << ',' << r.n << ',' << csv::format_shortest(r.level) << ','
        << csv::format_double(r.freq) << ',' << csv::format_double(r.se) << ',' << r.reps << ',' << r.failures
        << '\n';
  }
}

void write_power_csv(std::ostream& out, const PowerCurves& curves) {
  write_header_comment(out, curves.config_hash, curves.seed);
  out << "method,level,b,power,se\n";
  for (const auto& r : curves.rows) {
    out << r.method << ',' << csv::format_shortest(r.level) << ',' << csv::format_shortest(r.b) << ','
        << csv::format_double(r.power) << ',' << csv::format_double(r.se) << '\n';
  }
}

void write_path_csv(std::ostream& out, const LabeledPath& path, const std::string& config_hash, std::uint64_t seed) {
  write_header_comment(out, config_hash, seed);
  out << "lambda,stat,pvalue\n";
  for (std::size_t g = 0; g < path.lambda.size(); ++g) {
    out << csv::format_double(path.lambda[g]) << ',' << csv::format_double(path.stat[g]) << ','
        << csv::format_double(path.pvalue[g]) << '\n';
  }
}

void write_paths_summary_csv(std::ostream& out, const PathsOutput& output) {
  write_header_comment(out, output.config_hash, output.seed);
  out << "dgp,level,occupation_time,reject\n";
  for (const auto& r : output.summary) {
    out << r.label << ',' << csv::format_shortest(r.level) << ',' << csv::format_double(r.occupation_time) << ','
        << (r.reject ? 1 : 0) << '\n';
  }
}

std::vector<std::filesystem::path> write_outputs(const std::filesystem::path& dir, const McSummary& summary) {
  return {write_file(dir, "mc_summary.csv", [&](std::ostream& out) { write_mc_csv(out, summary); })};
}

std::vector<std::filesystem::path> write_outputs(const std::filesystem::path& dir, const PowerCurves& curves) {
  return {write_file(dir, "power_curves.csv", [&](std::ostream& out) { write_power_csv(out, curves); })};
}

std::vector<std::filesystem::path> write_outputs(const std::filesystem::path& dir, const PathsOutput& output) {
  std::vector<std::filesystem::path> files;
  for (const auto& path : output.paths) {
    files.push_back(write_file(dir, "paths_" + path.label + ".csv", [&](std::ostream& out) {
      write_path_csv(out, path, output.config_hash, output.seed);
    }));
  }
  files.push_back(write_file(dir, "paths_summary.csv", [&](std::ostream& out) { write_paths_summary_csv(out, output); }));
  return files;
}

void write_manifest(const std::filesystem::path& dir, const ExperimentConfig& config, const std::string& command,
                    double wall_seconds) {
  write_file(dir, "manifest.ini", [&](std::ostream& out) {
    out << "[manifest]\n";
    out << "config_hash = " << config_hash(config) << '\n';
    out << "version = " << PVOT_VERSION << '\n';
    out << "seed = " << config.seed << '\n';
    out << "threads = " << config.threads << '\n';
    out << "wall_seconds = " << fmt::format("{:.3f}", wall_seconds) << '\n';
    out << "command = " << command << "\n\n";
    out << to_ini(config);
  });
}

}  // namespace pvot::experiments
