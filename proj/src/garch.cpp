#include "pvot/garch.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>

#include "pvot/csv.hpp"
#include "pvot/error.hpp"
#include "pvot/hash.hpp"
#include "pvot/parallel.hpp"

namespace pvot::garch {

namespace {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

constexpr std::uint64_t kReferenceTask = 0x7265666572656e63ULL;

struct Box {
  Vec2 lower;
  Vec2 upper;

  Vec2 project(const Vec2& x) const { return x.cwiseMax(lower).cwiseMin(upper); }
};

/// Projected BFGS on a 2-D box with finite-difference gradients.
class ProjectedQuasiNewton {
 public:
  ProjectedQuasiNewton(std::span<const double> y, double lambda, const Box& box, const QmlOptions& options)
      : y_(y), lambda_(lambda), box_(box), options_(options) {}

  QmlFit run(const Vec2& start) {
    Vec2 x = box_.project(start);
    double f = value(x);
    Vec2 g = gradient(x, f);
    Mat2 h = Mat2::Identity();
    bool scaled = false;

    QmlFit fit;
    fit.lambda = lambda_;
    std::size_t iter = 0;
    for (; iter < options_.max_iterations; ++iter) {
      if (projected_gradient_norm(x, g) < options_.tolerance) {
        fit.converged = true;
        fit.stop = StopReason::Gradient;
        break;
      }
      const auto free = free_mask(x, g);
      Vec2 d = direction(h, g, free);
      if (!(g.dot(d) < 0.0)) {
        h.setIdentity();
        scaled = false;
        d = direction(h, g, free);
      }
      double t = scaled ? 1.0 : initial_step(d);
      const double t0 = t;
      Vec2 x_new = x;
      double f_new = f;
      bool accepted = false;
      for (int k = 0; k < 60; ++k) {
        x_new = box_.project(x + t * d);
        f_new = value(x_new);
        if (f_new <= f + 1e-4 * g.dot(x_new - x) && f_new <= f) {
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      if (!accepted || (x_new - x).lpNorm<Eigen::Infinity>() == 0.0) {
        if (scaled || !h.isIdentity()) {
          h.setIdentity();
          scaled = false;
          continue;
        }
        fit.stop = StopReason::Stalled;
        break;
      }
      const Vec2 s = x_new - x;
      const Vec2 g_new = gradient(x_new, f_new);
      const Vec2 yk = g_new - g;
      const double sy = s.dot(yk);
      if (sy > 1e-12 * s.norm() * yk.norm()) {
        if (!scaled) {
          h = Mat2::Identity() * (sy / yk.squaredNorm());
          scaled = true;
        }
        const double rho = 1.0 / sy;
        const Mat2 left = Mat2::Identity() - rho * s * yk.transpose();
        h = left * h * left.transpose() + rho * s * s.transpose();
      }
      x = x_new;
      f = f_new;
      g = g_new;
      if (t == t0 && s.lpNorm<Eigen::Infinity>() < options_.tolerance) {
        fit.converged = true;
        fit.stop = StopReason::Step;
        ++iter;
        break;
      }
    }
    fit.iterations = iter;
    fit.omega_hat = x(0);
    fit.delta_hat = x(1);
    fit.objective = f;
    return fit;
  }

 private:
  double value(const Vec2& x) const { return garch_objective(y_, x(0), x(1), lambda_); }

  // Central differences inside the box; second-order one-sided at a bound.
  Vec2 gradient(const Vec2& x, double fx) const {
    Vec2 g;
    for (int i = 0; i < 2; ++i) {
      const double h = options_.fd_step * std::max(1.0, std::abs(x(i)));
      Vec2 a = x;
      Vec2 b = x;
      if (x(i) - h >= box_.lower(i) && x(i) + h <= box_.upper(i)) {
        a(i) += h;
        b(i) -= h;
        g(i) = (value(a) - value(b)) / (2.0 * h);
      } else if (x(i) - h < box_.lower(i)) {
        a(i) += h;
        b(i) += 2.0 * h;
        g(i) = (-3.0 * fx + 4.0 * value(a) - value(b)) / (2.0 * h);
      } else {
        a(i) -= h;
        b(i) -= 2.0 * h;
        g(i) = (3.0 * fx - 4.0 * value(a) + value(b)) / (2.0 * h);
      }
    }
    return g;
  }

  double projected_gradient_norm(const Vec2& x, const Vec2& g) const {
    return (box_.project(x - g) - x).lpNorm<Eigen::Infinity>();
  }

  std::array<bool, 2> free_mask(const Vec2& x, const Vec2& g) const {
    std::array<bool, 2> free{};
    for (int i = 0; i < 2; ++i) {
      const bool at_lower = x(i) <= box_.lower(i) && g(i) > 0.0;
      const bool at_upper = x(i) >= box_.upper(i) && g(i) < 0.0;
      free[static_cast<std::size_t>(i)] = !(at_lower || at_upper);
    }
    return free;
  }

  static Vec2 direction(const Mat2& h, const Vec2& g, const std::array<bool, 2>& free) {
    if (free[0] && free[1]) return -h * g;
    Vec2 d = Vec2::Zero();
    for (int i = 0; i < 2; ++i) {
      if (free[static_cast<std::size_t>(i)]) d(i) = -h(i, i) * g(i);
    }
    return d;
  }

  // Unscaled first step: move at most a tenth of the box width.
  double initial_step(const Vec2& d) const {
    const double width = (box_.upper - box_.lower).minCoeff();
    const double dn = d.lpNorm<Eigen::Infinity>();
    return dn > 0.0 ? std::min(1.0, 0.1 * width / dn) : 1.0;
  }

  std::span<const double> y_;
  double lambda_;
  Box box_;
  QmlOptions options_;
};

QmlFit best_of_starts(std::span<const double> y, double lambda, const GarchSpace& space, RandomStream& rng,
                      const QmlOptions& options) {
  space.validate();
  if (y.size() < 10) throw Error(ErrorKind::InvalidArgument, fmt::format("QML needs n >= 10, got {}", y.size()));
  if (!space.lambda.contains(lambda)) {
    throw Error(ErrorKind::InvalidArgument, fmt::format("lambda = {} outside the admissible range", lambda));
  }
  if (options.starts == 0) throw Error(ErrorKind::InvalidArgument, "QML needs at least one start");
  const Box box{Vec2(space.omega.lower, space.delta.lower), Vec2(space.omega.upper, space.delta.upper)};
  ProjectedQuasiNewton solver(y, lambda, box, options);

  std::optional<QmlFit> best;
  for (std::size_t s = 0; s < options.starts; ++s) {
    const Vec2 start(space.omega.lower + rng.uniform() * (space.omega.upper - space.omega.lower),
                     space.delta.lower + rng.uniform() * (space.delta.upper - space.delta.lower));
    const QmlFit fit = solver.run(start);
    const bool better = !best || (fit.converged && !best->converged) ||
                        (fit.converged == best->converged && fit.objective < best->objective);
    if (better) best = fit;
  }
  return *best;
}

}  // namespace

void GarchSpace::validate() const {
  const auto check = [](const Bounds& b, const char* name) {
    if (!std::isfinite(b.lower) || !std::isfinite(b.upper) || !(b.lower < b.upper)) {
      throw Error(ErrorKind::InvalidArgument, fmt::format("{} bounds [{}, {}] are invalid", name, b.lower, b.upper));
    }
  };
  check(omega, "omega");
  check(delta, "delta");
  check(lambda, "lambda");
  if (!(omega.lower > 0.0)) throw Error(ErrorKind::InvalidArgument, "omega lower bound must be positive");
  if (delta.lower != 0.0) throw Error(ErrorKind::InvalidArgument, "delta lower bound must be exactly 0");
  if (!(delta.upper < 1.0) || !(lambda.upper < 1.0) || lambda.lower < 0.0) {
    throw Error(ErrorKind::InvalidArgument, "delta and lambda must stay inside [0, 1)");
  }
}

std::string_view to_string(StopReason reason) {
  switch (reason) {
    case StopReason::Gradient: return "gradient";
    case StopReason::Step: return "step";
    case StopReason::IterationLimit: return "iteration_limit";
    case StopReason::Stalled: return "stalled";
  }
  return "unknown";
}

double garch_objective(std::span<const double> y, double omega, double delta, double lambda) {
  double sigma2 = omega / (1.0 - lambda);
  double prev_y2 = 0.0;
  double sum = 0.0;
  for (double v : y) {
    sigma2 = omega + delta * prev_y2 + lambda * sigma2;
    const double y2 = v * v;
    sum += std::log(sigma2) + y2 / sigma2;
    prev_y2 = y2;
  }
  return sum;
}

QmlFit qml_fit_best_effort(std::span<const double> y, double lambda, const GarchSpace& space, RandomStream& rng,
                           const QmlOptions& options) {
  return best_of_starts(y, lambda, space, rng, options);
}

QmlFit qml_fit(std::span<const double> y, double lambda, const GarchSpace& space, RandomStream& rng,
               const QmlOptions& options) {
  QmlFit fit = best_of_starts(y, lambda, space, rng, options);
  if (!fit.converged) {
    throw Error(ErrorKind::NoConvergence,
                fmt::format("no QML start converged at lambda = {} (last stop: {})", lambda, to_string(fit.stop)));
  }
  return fit;
}

GarchPathResult garch_stat_path(std::span<const double> y, const NuisanceGrid& grid, const GarchSpace& space,
                                const RandomStream& rng, const QmlOptions& options) {
  if (grid.lower() < space.lambda.lower || grid.upper() > space.lambda.upper) {
    throw Error(ErrorKind::InvalidArgument, "grid extends outside the lambda bounds");
  }
  const double n = static_cast<double>(y.size());
  std::vector<QmlFit> fits;
  fits.reserve(grid.size());
  std::vector<double> values(grid.size());
  std::size_t failures = 0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    auto stream = rng.derive(g);
    fits.push_back(qml_fit_best_effort(y, grid[g], space, stream, options));
    if (!fits.back().converged) ++failures;
    values[g] = n * fits.back().delta_hat * fits.back().delta_hat;
  }
  if (static_cast<double>(failures) > kMaxFailedFraction * static_cast<double>(grid.size())) {
    throw Error(ErrorKind::PathUnreliable,
                fmt::format("QML failed at {} of {} grid points", failures, grid.size()));
  }
  return GarchPathResult{StatPath(grid, std::move(values)), std::move(fits), failures};
}

Eigen::MatrixXd simulate_kernel_draws(const NuisanceGrid& grid, std::size_t truncation, std::size_t replicates,
                                      const RandomStream& rng, std::size_t threads) {
  const auto g = static_cast<Eigen::Index>(grid.size());
  const Eigen::ArrayXd lambda = Eigen::Map<const Eigen::ArrayXd>(grid.points().data(), g);
  const Eigen::ArrayXd scale = 1.0 - lambda.square();
  Eigen::MatrixXd draws(static_cast<Eigen::Index>(replicates), g);
  parallel_for(replicates, threads, [&](std::size_t i) {
    auto stream = rng.derive(i);
    std::vector<double> z(truncation + 1);
    for (auto& v : z) v = stream.normal();
    // Horner from the highest power down, vectorized across the grid.
    Eigen::ArrayXd acc = Eigen::ArrayXd::Constant(g, z[truncation]);
    for (std::size_t j = truncation; j-- > 0;) acc = acc * lambda + z[j];
    draws.row(static_cast<Eigen::Index>(i)) = (scale * acc).matrix().transpose();
  });
  return draws;
}

NullReferenceTable simulate_null_reference(const NuisanceGrid& grid, std::size_t truncation,
                                           std::size_t replicates, const RandomStream& rng, std::size_t threads) {
  if (truncation < 1000) throw Error(ErrorKind::InvalidArgument, fmt::format("truncation {} < 1000", truncation));
  if (replicates < 500) throw Error(ErrorKind::InvalidArgument, fmt::format("replicates {} < 500", replicates));
  NullReferenceTable table{grid, truncation, replicates, simulate_kernel_draws(grid, truncation, replicates, rng, threads)};
  table.draws = table.draws.cwiseMax(0.0).array().square().matrix();
  return table;
}

RandomStream reference_stream(std::uint64_t seed) { return make_stream(seed, kReferenceTask); }

namespace {

void require_same_grid(const StatPath& path, const NullReferenceTable& table) {
  if (!(path.grid() == table.grid)) {
    throw Error(ErrorKind::GridMismatch, "statistic path and reference table use different grids");
  }
}

}  // namespace

PValuePath sim_pvalue_path(const StatPath& path, const NullReferenceTable& table) {
  require_same_grid(path, table);
  std::vector<double> p(path.size());
  const double m = static_cast<double>(table.draws.rows());
  for (std::size_t g = 0; g < p.size(); ++g) {
    const auto column = table.draws.col(static_cast<Eigen::Index>(g));
    p[g] = static_cast<double>((column.array() > path[g]).count()) / m;
  }
  return PValuePath(path.grid(), std::move(p));
}

double sim_pvalue_transform(const StatPath& path, const NullReferenceTable& table, Transform transform) {
  require_same_grid(path, table);
  std::vector<double> reference(static_cast<std::size_t>(table.draws.rows()));
  const double cell = table.grid.cell_measure();
  for (Eigen::Index i = 0; i < table.draws.rows(); ++i) {
    reference[static_cast<std::size_t>(i)] =
        transform == Transform::Sup ? table.draws.row(i).maxCoeff() : cell * table.draws.row(i).sum();
  }
  return empirical_upper_pvalue(apply_transform(transform, path), reference);
}

namespace {

std::string meta_text(const NuisanceGrid& grid, std::size_t truncation, std::size_t replicates, std::uint64_t seed) {
  std::ostringstream out;
  out << "format=1\n";
  out << "lower=" << csv::format_double(grid.lower()) << '\n';
  out << "upper=" << csv::format_double(grid.upper()) << '\n';
  out << "points=" << grid.size() << '\n';
  out << "truncation=" << truncation << '\n';
  out << "replicates=" << replicates << '\n';
  out << "seed=" << seed << '\n';
  out << "grid=";
  for (std::size_t g = 0; g < grid.size(); ++g) out << (g ? "," : "") << csv::format_double(grid[g]);
  out << '\n';
  return out.str();
}

std::filesystem::path cache_file(const std::filesystem::path& dir, const std::string& key, const char* ext) {
  return dir / fmt::format("ref_{}.{}", key, ext);
}

}  // namespace

std::string reference_cache_key(const NuisanceGrid& grid, std::size_t truncation, std::size_t replicates,
                                std::uint64_t seed) {
  return hex64(fnv1a64(meta_text(grid, truncation, replicates, seed)));
}

void save_reference_table(const std::filesystem::path& dir, const NullReferenceTable& table, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  const auto key = reference_cache_key(table.grid, table.truncation, table.replicates, seed);
  const auto data_path = cache_file(dir, key, "csv");
  const auto tmp_path = cache_file(dir, key, "csv.tmp");
  {
    std::ofstream out(tmp_path);
    if (!out) throw Error(ErrorKind::Io, fmt::format("cannot write '{}'", tmp_path.string()));
    for (std::size_t g = 0; g < table.grid.size(); ++g) out << (g ? "," : "") << "g" << (g + 1);
    out << '\n';
    for (Eigen::Index i = 0; i < table.draws.rows(); ++i) {
      for (Eigen::Index g = 0; g < table.draws.cols(); ++g) {
        out << (g ? "," : "") << csv::format_double(table.draws(i, g));
      }
      out << '\n';
    }
  }
  std::filesystem::rename(tmp_path, data_path);
  std::ofstream meta(cache_file(dir, key, "meta"));
  if (!meta) throw Error(ErrorKind::Io, fmt::format("cannot write cache metadata in '{}'", dir.string()));
  meta << meta_text(table.grid, table.truncation, table.replicates, seed);
}

std::optional<NullReferenceTable> load_reference_table(const std::filesystem::path& dir, const NuisanceGrid& grid,
                                                       std::size_t truncation, std::size_t replicates,
                                                       std::uint64_t seed) {
  const auto key = reference_cache_key(grid, truncation, replicates, seed);
  const auto meta_path = cache_file(dir, key, "meta");
  const auto data_path = cache_file(dir, key, "csv");
  if (!std::filesystem::exists(meta_path) || !std::filesystem::exists(data_path)) return std::nullopt;
  std::ifstream meta(meta_path);
  std::stringstream stored;
  stored << meta.rdbuf();
  if (stored.str() != meta_text(grid, truncation, replicates, seed)) return std::nullopt;

  const auto table = csv::read_numeric(data_path);
  if (table.rows.size() != replicates || table.header.size() != grid.size()) {
    throw Error(ErrorKind::MalformedCsv, fmt::format("cached table '{}' has the wrong shape", data_path.string()));
  }
  NullReferenceTable out{grid, truncation, replicates,
                         Eigen::MatrixXd(static_cast<Eigen::Index>(replicates), static_cast<Eigen::Index>(grid.size()))};
  for (std::size_t i = 0; i < replicates; ++i) {
    for (std::size_t g = 0; g < grid.size(); ++g) {
      out.draws(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(g)) = table.rows[i][g];
    }
  }
  return out;
}

NullReferenceTable cached_reference_table(const std::filesystem::path& dir, const NuisanceGrid& grid,
                                          std::size_t truncation, std::size_t replicates, std::uint64_t seed,
                                          std::size_t threads, bool* cache_hit) {
  if (!dir.empty()) {
    if (auto table = load_reference_table(dir, grid, truncation, replicates, seed)) {
      if (cache_hit) *cache_hit = true;
      return std::move(*table);
    }
  }
  if (cache_hit) *cache_hit = false;
  auto table = simulate_null_reference(grid, truncation, replicates, reference_stream(seed), threads);
  if (!dir.empty()) save_reference_table(dir, table, seed);
  return table;
}

}  // namespace pvot::garch
