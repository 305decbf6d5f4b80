#include <cmath>
#include <filesystem>
#include <limits>
#include <vector>

#include <catch_amalgamated.hpp>

#include "pvot/dgp.hpp"
#include "pvot/error.hpp"
#include "pvot/garch.hpp"
#include "pvot/grid.hpp"
#include "pvot/pvot.hpp"
#include "pvot/random.hpp"

using namespace pvot;
using namespace pvot::garch;
using Catch::Matchers::WithinAbs;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no pvot::Error thrown");
  return ErrorKind::Io;
}

double objective_oracle(const std::vector<double>& y, double omega, double delta, double lambda) {
  double s2_prev = omega / (1.0 - lambda);
  double y_prev = 0.0;
  double total = 0.0;
  for (double yt : y) {
    const double s2 = omega + delta * y_prev * y_prev + lambda * s2_prev;
    total += std::log(s2) + yt * yt / s2;
    s2_prev = s2;
    y_prev = yt;
  }
  return total;
}

std::vector<double> garch_series(double delta, std::size_t n, std::uint64_t seed) {
  auto rng = make_stream(seed, 0);
  const auto s = dgp::gen_sample(dgp::make_spec(dgp::DgpKind::Garch, {{"delta", delta}}), n, rng);
  return {s.y.data(), s.y.data() + s.y.size()};
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("pvot_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("garch objective closed forms", "[garch][objective]") {
  CHECK(garch_objective(std::vector<double>{0.0}, 1.0, 0.0, 0.0) == 0.0);
  const std::vector<double> y{0.5, -1.0, 2.0, 0.1};
  double sum2 = 0.0;
  for (double v : y) sum2 += v * v;
  for (double lambda : {0.0, 0.3, 0.9}) {
    const double s2 = 1.7 / (1.0 - lambda);
    CHECK_THAT(garch_objective(y, 1.7, 0.0, lambda), WithinAbs(4.0 * std::log(s2) + sum2 / s2, 1e-12));
  }
}

TEST_CASE("garch objective matches a literal recursion", "[garch][objective][oracle]") {
  auto rng = make_stream(3, 3);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform() * 50.0);
    std::vector<double> y(n);
    for (auto& v : y) v = 2.0 * rng.normal();
    const double omega = 0.001 + 1.999 * rng.uniform();
    const double delta = 0.99 * rng.uniform();
    const double lambda = 0.99 * rng.uniform();
    const double expected = objective_oracle(y, omega, delta, lambda);
    CHECK_THAT(garch_objective(y, omega, delta, lambda), WithinAbs(expected, 1e-12 * std::max(1.0, std::abs(expected))));
  }
}

TEST_CASE("garch space validation", "[garch]") {
  GarchSpace space;
  CHECK_NOTHROW(space.validate());
  CHECK(space.omega.lower == 0.001);
  CHECK(space.omega.upper == 2.0);
  CHECK(space.delta.lower == 0.0);
  CHECK(space.delta.upper == 0.99);
  GarchSpace bad = space;
  bad.omega.lower = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = space;
  bad.delta.lower = 0.1;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = space;
  bad.delta.upper = -1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("qml recovers the null fixed point", "[garch][qml]") {
  const auto y = garch_series(0.0, 5000, 11);
  auto rng = make_stream(11, 1);
  const auto fit = qml_fit(y, 0.6, GarchSpace{}, rng);
  CHECK(fit.converged);
  CHECK(fit.lambda == 0.6);
  CHECK(std::abs(fit.delta_hat) < 0.02);
  CHECK(std::abs(fit.omega_hat - 1.0) < 0.1);
}

TEST_CASE("qml is never beaten by a grid search", "[garch][qml][oracle]") {
  const GarchSpace space;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const double delta0 = seed % 2 == 0 ? 0.0 : 0.3;
    const auto y = garch_series(delta0, 250, 100 + seed);
    for (double lambda : {0.1, 0.6}) {
      auto rng = make_stream(100 + seed, 7);
      const auto fit = qml_fit_best_effort(y, lambda, space, rng);
      REQUIRE(space.omega.contains(fit.omega_hat));
      REQUIRE(space.delta.contains(fit.delta_hat));
      CHECK_THAT(fit.objective, WithinAbs(garch_objective(y, fit.omega_hat, fit.delta_hat, lambda), 1e-9));
      double best = std::numeric_limits<double>::infinity();
      for (int i = 0; i < 50; ++i) {
        const double omega = space.omega.lower + (space.omega.upper - space.omega.lower) * i / 49.0;
        for (int j = 0; j < 50; ++j) {
          const double delta = space.delta.lower + (space.delta.upper - space.delta.lower) * j / 49.0;
          best = std::min(best, garch_objective(y, omega, delta, lambda));
        }
      }
      INFO("seed " << seed << " lambda " << lambda);
      CHECK(fit.objective <= best + 1e-6);
    }
  }
}

TEST_CASE("qml reports non-convergence", "[garch][qml]") {
  const auto y = garch_series(0.3, 300, 5);
  QmlOptions options;
  options.max_iterations = 1;
  auto rng = make_stream(5, 1);
  CHECK(kind_of([&] { qml_fit(y, 0.5, GarchSpace{}, rng, options); }) == ErrorKind::NoConvergence);
  auto rng2 = make_stream(5, 1);
  const auto best = qml_fit_best_effort(y, 0.5, GarchSpace{}, rng2, options);
  CHECK_FALSE(best.converged);
  CHECK(std::isfinite(best.objective));

  const auto grid = NuisanceGrid::from_points({0.2, 0.4, 0.6}, 0.01, 0.99);
  CHECK(kind_of([&] { garch_stat_path(y, grid, GarchSpace{}, make_stream(5, 2), options); }) ==
        ErrorKind::PathUnreliable);
}

TEST_CASE("garch statistic path", "[garch][path]") {
  const auto y = garch_series(0.0, 250, 21);
  const auto grid = make_grid(0.01, 0.99, 0.1, 250);
  const auto rng = make_stream(21, 2);
  const auto a = garch_stat_path(y, grid, GarchSpace{}, rng);
  const auto b = garch_stat_path(y, grid, GarchSpace{}, rng);
  REQUIRE(a.fits.size() == grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    REQUIRE(a.path[i] == b.path[i]);
    CHECK(a.path[i] == 250.0 * a.fits[i].delta_hat * a.fits[i].delta_hat);
    CHECK(a.fits[i].lambda == grid[i]);
    CHECK(a.path[i] >= 0.0);
  }
  CHECK(a.failures <= grid.size() / 20);
}

TEST_CASE("null reference kernel moments", "[garch][reference][montecarlo]") {
  const auto grid = NuisanceGrid::from_points({0.0, 0.2, 0.6, 0.8}, 0.0, 0.99);
  const std::size_t m = 20000;
  const auto z = simulate_kernel_draws(grid, 1000, m, make_stream(8, 8));
  REQUIRE(z.rows() == static_cast<Eigen::Index>(m));
  const auto mean = [&](Eigen::Index c) { return z.col(c).mean(); };
  const auto cov = [&](Eigen::Index a, Eigen::Index b) {
    return ((z.col(a).array() - mean(a)) * (z.col(b).array() - mean(b))).sum() / static_cast<double>(m - 1);
  };
  CHECK_THAT(cov(2, 2), WithinAbs(0.64, 0.02));
  CHECK_THAT(cov(1, 3), WithinAbs(0.96 * 0.36 / 0.84, 0.02));

  const auto table = simulate_null_reference(grid, 1000, m, make_stream(8, 8));
  CHECK(table.draws.minCoeff() >= 0.0);
  for (Eigen::Index c = 0; c < table.draws.cols(); ++c) {
    const auto col = table.draws.col(c).array();
    const double lam = grid[static_cast<std::size_t>(c)];
    const double mu = col.mean();
    const double se = std::sqrt((col - mu).square().sum() / static_cast<double>(m - 1) / static_cast<double>(m));
    INFO("lambda " << lam);
    CHECK(std::abs(mu - (1.0 - lam * lam) / 2.0) <= 3.0 * se);
    REQUIRE((table.draws.col(c).array() == z.col(c).array().max(0.0).square()).all());
  }
  CHECK_THAT(table.draws.col(0).mean(), WithinAbs(0.5, 0.03));

  CHECK(kind_of([&] { simulate_null_reference(grid, 999, 500, make_stream(1, 1)); }) == ErrorKind::InvalidArgument);
  CHECK(kind_of([&] { simulate_null_reference(grid, 1000, 499, make_stream(1, 1)); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("reference table is thread-count independent", "[garch][reference]") {
  const auto grid = make_grid(0.01, 0.99, 0.2, 250);
  const auto a = simulate_null_reference(grid, 1000, 500, reference_stream(4), 1);
  const auto b = simulate_null_reference(grid, 1000, 500, reference_stream(4), 3);
  CHECK(a.draws == b.draws);
}

TEST_CASE("simulated p-values", "[garch][pvalue]") {
  const auto grid = NuisanceGrid::from_points({0.1, 0.5, 0.9}, 0.01, 0.99);
  const auto table = simulate_null_reference(grid, 1000, 4000, make_stream(2, 2));

  const auto zero = sim_pvalue_path(StatPath(grid, {0.0, 0.0, 0.0}), table);
  for (double p : zero.values()) CHECK_THAT(p, WithinAbs(0.5, 0.03));

  const double big = table.draws.maxCoeff() + 1.0;
  const auto beyond = sim_pvalue_path(StatPath(grid, {big, big, big}), table);
  for (double p : beyond.values()) CHECK(p == 0.0);

  const auto lo = sim_pvalue_path(StatPath(grid, {0.1, 0.5, 1.0}), table);
  const auto hi = sim_pvalue_path(StatPath(grid, {0.2, 0.9, 1.0}), table);
  for (std::size_t i = 0; i < 3; ++i) CHECK(hi[i] <= lo[i]);
  CHECK(sim_pvalue_path(StatPath(grid, {0.1, 0.5, 1.0}), table).values()[1] == lo[1]);

  const double sup_zero = sim_pvalue_transform(StatPath(grid, {0.0, 0.0, 0.0}), table, Transform::Sup);
  int positive = 0;
  for (Eigen::Index r = 0; r < table.draws.rows(); ++r) positive += table.draws.row(r).maxCoeff() > 0.0 ? 1 : 0;
  CHECK(sup_zero == positive / static_cast<double>(table.draws.rows()));
  CHECK(sup_zero > 0.5);
  CHECK(sim_pvalue_transform(StatPath(grid, {big, big, big}), table, Transform::Ave) == 0.0);

  const auto other = NuisanceGrid::from_points({0.1, 0.5, 0.8}, 0.01, 0.99);
  CHECK(kind_of([&] { sim_pvalue_path(StatPath(other, {0.0, 0.0, 0.0}), table); }) == ErrorKind::GridMismatch);
  CHECK(kind_of([&] { sim_pvalue_transform(StatPath(other, {0.0, 0.0, 0.0}), table, Transform::Sup); }) ==
        ErrorKind::GridMismatch);
}

TEST_CASE("reference table disk cache", "[garch][cache]") {
  const auto dir = scratch_dir("garch_cache");
  const auto grid = make_grid(0.01, 0.99, 0.2, 250);
  bool hit = true;
  const auto first = cached_reference_table(dir, grid, 1000, 500, 9, 1, &hit);
  CHECK_FALSE(hit);
  const auto second = cached_reference_table(dir, grid, 1000, 500, 9, 1, &hit);
  CHECK(hit);
  CHECK(second.draws == first.draws);
  CHECK(second.grid == grid);

  CHECK_FALSE(load_reference_table(dir, grid, 1000, 500, 10).has_value());
  CHECK_FALSE(load_reference_table(dir, grid, 1001, 500, 9).has_value());
  CHECK(reference_cache_key(grid, 1000, 500, 9) != reference_cache_key(grid, 1000, 500, 10));

  const auto uncached = cached_reference_table({}, grid, 1000, 500, 9, 1, &hit);
  CHECK_FALSE(hit);
  CHECK(uncached.draws == first.draws);
}
