#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <catch_amalgamated.hpp>

#include "pvot/dgp.hpp"
#include "pvot/error.hpp"
#include "pvot/funcform.hpp"
#include "pvot/grid.hpp"
#include "pvot/pvot.hpp"
#include "pvot/random.hpp"

using namespace pvot;
using namespace pvot::funcform;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

dgp::Sample make_sample(std::vector<double> y, std::vector<std::vector<double>> x) {
  dgp::Sample s;
  const auto n = static_cast<Eigen::Index>(y.size());
  s.y = Eigen::Map<Eigen::VectorXd>(y.data(), n);
  s.x.resize(n, static_cast<Eigen::Index>(x.front().size()));
  for (Eigen::Index t = 0; t < n; ++t) {
    for (Eigen::Index j = 0; j < s.x.cols(); ++j) s.x(t, j) = x[static_cast<std::size_t>(t)][static_cast<std::size_t>(j)];
  }
  return s;
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no pvot::Error thrown");
  return ErrorKind::Io;
}

// Scalar-regressor LM statistic written out loop by loop.
std::vector<double> lm_oracle(const std::vector<double>& y, const std::vector<double>& x,
                              const std::vector<double>& lambdas) {
  const std::size_t n = y.size();
  double sxx = 0.0, sxy = 0.0, xbar = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    sxx += x[t] * x[t];
    sxy += x[t] * y[t];
    xbar += x[t];
  }
  xbar /= static_cast<double>(n);
  const double beta = sxy / sxx;
  const double a = sxx / static_cast<double>(n);
  std::vector<double> out;
  for (double lam : lambdas) {
    std::vector<double> f(n);
    double z = 0.0, b = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      f[t] = 1.0 / (1.0 + std::exp(lam * std::atan(x[t] - xbar)));
      const double e = y[t] - beta * x[t];
      z += e * f[t];
      b += x[t] * f[t];
    }
    z /= std::sqrt(static_cast<double>(n));
    b /= static_cast<double>(n);
    double v2 = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double e = y[t] - beta * x[t];
      const double w = f[t] - b / a * x[t];
      v2 += e * e * w * w;
    }
    v2 /= static_cast<double>(n);
    out.push_back(z * z / v2);
  }
  return out;
}

NuisanceGrid small_grid() { return NuisanceGrid::from_points({0.1, 0.5, 1.0}, 0.0, 1.0); }

}  // namespace

TEST_CASE("ols closed-form examples", "[funcform][ols]") {
  const auto exact = make_sample({2.0, -4.0, 6.0}, {{1.0}, {-2.0}, {3.0}});
  const auto fit = ols_fit(exact);
  CHECK_THAT(fit.beta(0), WithinAbs(2.0, 1e-15));
  CHECK(fit.residuals.cwiseAbs().maxCoeff() < 1e-14);

  const auto two = ols_fit(make_sample({1.0, 2.0}, {{1.0}, {1.0}}));
  CHECK_THAT(two.beta(0), WithinAbs(1.5, 1e-15));
  CHECK_THAT(two.residuals(0), WithinAbs(-0.5, 1e-15));
  CHECK_THAT(two.residuals(1), WithinAbs(0.5, 1e-15));
  CHECK_THAT(two.gram(0, 0), WithinAbs(1.0, 1e-15));
}

TEST_CASE("ols matches a Cramer's rule solve", "[funcform][ols]") {
  auto rng = make_stream(12, 0);
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 50;
    std::vector<double> y(n);
    std::vector<std::vector<double>> x(n, std::vector<double>(2));
    for (int t = 0; t < n; ++t) {
      x[t][0] = rng.normal();
      x[t][1] = 1.0 + rng.normal();
      y[t] = 0.3 * x[t][0] - 1.2 * x[t][1] + rng.normal();
    }
    double s00 = 0, s01 = 0, s11 = 0, r0 = 0, r1 = 0;
    for (int t = 0; t < n; ++t) {
      s00 += x[t][0] * x[t][0];
      s01 += x[t][0] * x[t][1];
      s11 += x[t][1] * x[t][1];
      r0 += x[t][0] * y[t];
      r1 += x[t][1] * y[t];
    }
    const double det = s00 * s11 - s01 * s01;
    const double b0 = (r0 * s11 - s01 * r1) / det;
    const double b1 = (s00 * r1 - s01 * r0) / det;

    const auto fit = ols_fit(make_sample(y, x));
    CHECK_THAT(fit.beta(0), WithinAbs(b0, 1e-10));
    CHECK_THAT(fit.beta(1), WithinAbs(b1, 1e-10));
    const Eigen::VectorXd normal_eq = make_sample(y, x).x.transpose() * fit.residuals;
    CHECK(normal_eq.cwiseAbs().maxCoeff() < 1e-8 * n);
    CHECK((fit.gram - fit.gram.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(fit.gram.llt().info() == Eigen::Success);
  }
}

TEST_CASE("ols rejects singular designs", "[funcform][ols]") {
  CHECK(kind_of([] { ols_fit(make_sample({1.0, 2.0, 3.0}, {{0.0}, {0.0}, {0.0}})); }) == ErrorKind::SingularDesign);
  CHECK(kind_of([] { ols_fit(make_sample({1.0, 2.0, 3.0}, {{1.0, 2.0}, {2.0, 4.0}, {3.0, 6.0}})); }) ==
        ErrorKind::SingularDesign);
}

TEST_CASE("weight transform", "[funcform]") {
  CHECK(weight_transform(1.7, 1.7) == 0.0);
  CHECK_THAT(weight_transform(2.0, 1.0), WithinAbs(std::numbers::pi / 4.0, 1e-15));
  for (double v : {-1e300, -5.0, 0.3, 1e12}) CHECK(std::abs(weight_transform(v, 0.0)) <= std::numbers::pi / 2.0);
}

TEST_CASE("zero residuals are a degenerate variance", "[funcform]") {
  const auto s = make_sample({2.0, -4.0, 6.0, 1.0}, {{1.0}, {-2.0}, {3.0}, {0.5}});
  const auto fit = ols_fit(s);
  CHECK(kind_of([&] { lm_stat_path(s, fit, small_grid()); }) == ErrorKind::DegenerateVariance);
}

TEST_CASE("lm statistic matches direct formula evaluation", "[funcform][oracle]") {
  const std::vector<double> lambdas{0.1, 0.5, 1.0};
  {
    const std::vector<double> y{1.0, 0.0, -1.0}, x{1.0, -1.0, 0.0};
    const auto s = make_sample(y, {{1.0}, {-1.0}, {0.0}});
    const auto result = lm_stat_path(s, ols_fit(s), small_grid());
    const auto expected = lm_oracle(y, x, lambdas);
    for (std::size_t i = 0; i < lambdas.size(); ++i) CHECK_THAT(result.path[i], WithinAbs(expected[i], 1e-10));
  }
  auto rng = make_stream(77, 0);
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 3 + static_cast<int>(rng.uniform() * 8.0);
    std::vector<double> y(n), x(n);
    std::vector<std::vector<double>> rows(n);
    for (int t = 0; t < n; ++t) {
      x[t] = rng.normal();
      y[t] = x[t] + 0.5 * x[t] * x[t] + rng.normal();
      rows[t] = {x[t]};
    }
    const auto s = make_sample(y, rows);
    const auto result = lm_stat_path(s, ols_fit(s), small_grid());
    const auto expected = lm_oracle(y, x, lambdas);
    INFO("rep " << rep << " n " << n);
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
      CHECK_THAT(result.path[i], WithinAbs(expected[i], 1e-10 * std::max(1.0, expected[i])));
      CHECK_THAT(result.path[i], WithinAbs(result.context.zhat(static_cast<Eigen::Index>(i)) *
                                               result.context.zhat(static_cast<Eigen::Index>(i)) /
                                               result.context.vhat2(static_cast<Eigen::Index>(i)),
                                           1e-12 * std::max(1.0, expected[i])));
    }
    CHECK(result.context.vhat2.minCoeff() >= 0.0);
  }
}

TEST_CASE("lm statistic is scale invariant", "[funcform]") {
  auto rng = make_stream(5, 1);
  const auto s = dgp::gen_sample(dgp::make_spec(dgp::DgpKind::IidQuadratic), 80, rng);
  auto scaled = s;
  scaled.y *= 3.5;
  const auto grid = make_grid(0.0001, 1.0, 100.0, 80);
  const auto a = lm_stat_path(s, ols_fit(s), grid);
  const auto b = lm_stat_path(scaled, ols_fit(scaled), grid);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto j = static_cast<Eigen::Index>(i);
    CHECK_THAT(b.path[i], WithinAbs(a.path[i], 1e-9 * std::max(1.0, a.path[i])));
    CHECK_THAT(b.context.zhat(j), WithinRel(3.5 * a.context.zhat(j), 1e-9));
    CHECK_THAT(b.context.vhat2(j), WithinRel(3.5 * 3.5 * a.context.vhat2(j), 1e-9));
  }
}

TEST_CASE("asymptotic p-value path", "[funcform]") {
  const auto grid = small_grid();
  const auto zero = asym_pvalue_path(StatPath(grid, {0.0, 0.0, 0.0}));
  for (double p : zero.values()) CHECK(p == 1.0);
  const auto p = asym_pvalue_path(StatPath(grid, {1.0, 3.841459, 10.0}));
  CHECK_THAT(p[1], WithinAbs(0.05, 1e-6));
  CHECK(p[0] > p[1]);
  CHECK(p[1] > p[2]);
}

TEST_CASE("pointwise chi2 rejection under the null", "[funcform][montecarlo]") {
  const auto spec = dgp::make_spec(dgp::DgpKind::IidLinear);
  const auto grid = NuisanceGrid::from_points({0.5, 1.0}, 0.0, 1.0);
  int rejects = 0;
  const int reps = 10000;
  for (int r = 0; r < reps; ++r) {
    auto rng = make_stream(2024, static_cast<std::uint64_t>(r));
    const auto s = dgp::gen_sample(spec, 500, rng);
    const auto result = lm_stat_path(s, ols_fit(s), grid);
    if (chi2_upper_tail(result.path[0], 1) < 0.05) ++rejects;
  }
  CHECK(std::abs(rejects / static_cast<double>(reps) - 0.05) < 0.007);
}

TEST_CASE("wild bootstrap reproduces an explicit replicate loop", "[funcform][bootstrap]") {
  auto data_rng = make_stream(31, 0);
  const auto s = dgp::gen_sample(dgp::make_spec(dgp::DgpKind::IidLinear), 60, data_rng);
  const auto fit = ols_fit(s);
  const auto grid = make_grid(0.0001, 1.0, 10.0, 60);
  const auto lm = lm_stat_path(s, fit, grid);
  const auto boot_rng = make_stream(31, 1);
  const std::size_t reps = 150;

  const auto n = s.y.size();
  std::vector<double> sups, aves;
  for (std::size_t r = 0; r < reps; ++r) {
    auto stream = boot_rng.derive(r);
    std::vector<double> z(static_cast<std::size_t>(n));
    for (auto& v : z) v = stream.normal();
    double sup = 0.0, ave = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      double zstar = 0.0;
      for (Eigen::Index t = 0; t < n; ++t) {
        zstar += fit.residuals(t) * lm.context.weights(t, static_cast<Eigen::Index>(i)) * z[static_cast<std::size_t>(t)];
      }
      zstar /= std::sqrt(static_cast<double>(n));
      const double stat = zstar * zstar / lm.context.vhat2(static_cast<Eigen::Index>(i));
      sup = std::max(sup, stat);
      ave += stat * grid.cell_measure();
    }
    sups.push_back(sup);
    aves.push_back(ave);
  }
  const auto p = wild_bootstrap_pvalues(lm.context, fit, reps, boot_rng);
  CHECK(p.sup == empirical_upper_pvalue(smooth_sup(lm.path), sups));
  CHECK_THAT(p.ave, WithinAbs(empirical_upper_pvalue(smooth_ave(lm.path), aves), 1.0 / reps + 1e-12));
  CHECK(wild_bootstrap_pvalue(lm.context, fit, Transform::Sup, reps, boot_rng) == p.sup);
  CHECK(wild_bootstrap_pvalues(lm.context, fit, reps, boot_rng).ave == p.ave);
}

TEST_CASE("wild bootstrap edge cases", "[funcform][bootstrap]") {
  auto data_rng = make_stream(40, 0);
  auto s = dgp::gen_sample(dgp::make_spec(dgp::DgpKind::IidQuadratic, {{"quad", 5.0}}), 200, data_rng);
  const auto fit = ols_fit(s);
  const auto lm = lm_stat_path(s, fit, make_grid(0.0001, 1.0, 10.0, 200));
  const auto rng = make_stream(40, 1);
  CHECK(kind_of([&] { wild_bootstrap_pvalues(lm.context, fit, 99, rng); }) == ErrorKind::InvalidArgument);
  // A strong quadratic term puts the observed statistic beyond every replicate.
  const auto p = wild_bootstrap_pvalues(lm.context, fit, 1000, rng);
  CHECK(p.sup == 0.0);
  CHECK(p.ave == 0.0);
}

TEST_CASE("bootstrap p-value seed variability", "[funcform][bootstrap][montecarlo]") {
  auto data_rng = make_stream(41, 0);
  const auto s = dgp::gen_sample(dgp::make_spec(dgp::DgpKind::IidLinear), 100, data_rng);
  const auto fit = ols_fit(s);
  const auto lm = lm_stat_path(s, fit, make_grid(0.0001, 1.0, 20.0, 100));
  const std::size_t reps = 1000;
  std::vector<double> ps;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    ps.push_back(wild_bootstrap_pvalue(lm.context, fit, Transform::Ave, reps, make_stream(seed, 5)));
  }
  double mean = 0.0;
  for (double p : ps) mean += p;
  mean /= static_cast<double>(ps.size());
  double var = 0.0;
  for (double p : ps) var += (p - mean) * (p - mean);
  const double sd = std::sqrt(var / static_cast<double>(ps.size() - 1));
  INFO("mean p " << mean << " sd " << sd);
  CHECK(sd <= 2.0 * std::sqrt(mean * (1.0 - mean) / reps));
}

TEST_CASE("icm bound test", "[funcform][icm]") {
  CHECK(icm_bound(0.01) == 6.81);
  CHECK(icm_bound(0.05) == 4.26);
  CHECK(icm_bound(0.10) == 3.23);
  CHECK(icm_supports(0.05));
  CHECK_FALSE(icm_supports(0.025));
  CHECK(kind_of([] { icm_bound(0.025); }) == ErrorKind::UnsupportedLevel);

  FuncformStatContext zero{small_grid(), Eigen::VectorXd::Zero(3), Eigen::VectorXd::Constant(3, 1.0),
                           Eigen::MatrixXd::Zero(4, 3)};
  for (double level : kIcmLevels) CHECK_FALSE(icm_test(zero, level).reject);
  CHECK(kind_of([&] { icm_test(zero, 0.2); }) == ErrorKind::UnsupportedLevel);

  FuncformStatContext ctx{small_grid(), Eigen::Vector3d(2.0, 1.0, 3.0), Eigen::Vector3d(1.0, 0.5, 1.5),
                          Eigen::MatrixXd::Zero(4, 3)};
  // ave(z^2) = 14/3, ave(v2) = 1
  const auto r05 = icm_test(ctx, 0.05);
  CHECK_THAT(r05.statistic, WithinAbs(14.0 / 3.0, 1e-14));
  CHECK_THAT(r05.critical_value, WithinAbs(4.26, 1e-14));
  CHECK(r05.reject);
  CHECK_FALSE(icm_test(ctx, 0.01).reject);
  CHECK(icm_test(ctx, 0.10).reject);
  CHECK(icm_test(ctx, 0.10).method == Method::Icm);
}

TEST_CASE("pvot size and power with asymptotic p-values", "[funcform][montecarlo]") {
  const auto run = [](dgp::DgpKind kind, std::size_t n, int reps) {
    int rejects = 0;
    for (int r = 0; r < reps; ++r) {
      auto rng = make_stream(99, (static_cast<std::uint64_t>(n) << 20) + static_cast<std::uint64_t>(r));
      const auto s = dgp::gen_sample(dgp::make_spec(kind), n, rng);
      const auto lm = lm_stat_path(s, ols_fit(s), make_grid(0.0001, 1.0, 10.0, n));
      if (pvot_decide(occupation_time(asym_pvalue_path(lm.path), 0.05), 0.05).reject) ++rejects;
    }
    return rejects / static_cast<double>(reps);
  };
  const int reps = 1000;
  const double size = run(dgp::DgpKind::IidLinear, 100, reps);
  CHECK(size <= 0.05 + 3.0 * std::sqrt(0.05 * 0.95 / reps));

  const double p100 = run(dgp::DgpKind::IidQuadratic, 100, 400);
  const double p250 = run(dgp::DgpKind::IidQuadratic, 250, 400);
  const double p500 = run(dgp::DgpKind::IidQuadratic, 500, 400);
  INFO(p100 << " " << p250 << " " << p500);
  CHECK(p100 < p250);
  CHECK(p250 < p500);
}
