#include "pvot/funcform.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <fmt/format.h>

#include "pvot/error.hpp"

namespace pvot::funcform {

namespace {

constexpr Eigen::Index kBootstrapBlock = 64;

Eigen::VectorXd grid_vector(const NuisanceGrid& grid) {
  return Eigen::Map<const Eigen::VectorXd>(grid.points().data(), static_cast<Eigen::Index>(grid.size()));
}

}  // namespace

LsFit ols_fit(const dgp::Sample& sample) {
  const auto n = static_cast<Eigen::Index>(sample.n());
  const auto k = static_cast<Eigen::Index>(sample.k());
  if (k == 0) throw Error(ErrorKind::InvalidArgument, "least squares needs at least one regressor");
  if (n <= k) throw Error(ErrorKind::InvalidArgument, fmt::format("least squares needs n > k (n = {}, k = {})", n, k));

  LsFit fit;
  fit.gram = sample.x.transpose() * sample.x / static_cast<double>(n);
  Eigen::LLT<Eigen::MatrixXd> llt(fit.gram);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-12)) {
    throw Error(ErrorKind::SingularDesign, "regressor gram matrix is singular");
  }
  fit.beta = llt.solve(sample.x.transpose() * sample.y / static_cast<double>(n));
  fit.residuals = sample.y - sample.x * fit.beta;
  return fit;
}

double weight_transform(double x, double x_mean) { return std::atan(x - x_mean); }

LmResult lm_stat_path(const dgp::Sample& sample, const LsFit& fit, const NuisanceGrid& grid,
                      std::size_t weight_column) {
  const auto n = static_cast<Eigen::Index>(sample.n());
  if (fit.residuals.size() != n || fit.beta.size() != static_cast<Eigen::Index>(sample.k())) {
    throw Error(ErrorKind::InvalidArgument, "least squares fit does not match the sample");
  }
  if (weight_column >= sample.k()) {
    throw Error(ErrorKind::InvalidArgument, fmt::format("weight column {} out of range", weight_column));
  }
  const double nd = static_cast<double>(n);
  const auto column = sample.x.col(static_cast<Eigen::Index>(weight_column));
  const double mean = column.mean();
  Eigen::VectorXd psi(n);
  for (Eigen::Index t = 0; t < n; ++t) psi(t) = weight_transform(column(t), mean);

  // F(t, g) = 1 / (1 + exp(lambda_g * psi_t))
  const Eigen::MatrixXd logistic = ((psi * grid_vector(grid).transpose()).array().exp() + 1.0).inverse().matrix();

  FuncformStatContext context{grid, {}, {}, {}};
  context.zhat = logistic.transpose() * fit.residuals / std::sqrt(nd);
  const Eigen::MatrixXd b = sample.x.transpose() * logistic / nd;
  const Eigen::MatrixXd projection = fit.gram.llt().solve(b);
  context.weights = logistic - sample.x * projection;
  const Eigen::VectorXd e2 = fit.residuals.array().square().matrix();
  context.vhat2 = context.weights.array().square().matrix().transpose() * e2 / nd;

  std::vector<double> values(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const auto gi = static_cast<Eigen::Index>(g);
    const double v2 = context.vhat2(gi);
    if (!(v2 >= kDegenerateVariance)) {
      throw Error(ErrorKind::DegenerateVariance, fmt::format("vhat2 = {} at lambda = {}", v2, grid[g]));
    }
    values[g] = context.zhat(gi) * context.zhat(gi) / v2;
  }
  return LmResult{StatPath(grid, std::move(values)), std::move(context)};
}

PValuePath asym_pvalue_path(const StatPath& path) {
  std::vector<double> p(path.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = chi2_upper_tail(path[i], 1);
  return PValuePath(path.grid(), std::move(p));
}

BootstrapPValues wild_bootstrap_pvalues(const FuncformStatContext& context, const LsFit& fit,
                                        std::size_t replicates, const RandomStream& rng) {
  if (replicates < 100) throw Error(ErrorKind::InvalidArgument, fmt::format("bootstrap needs R >= 100, got {}", replicates));
  const auto n = fit.residuals.size();
  const auto grid_size = static_cast<Eigen::Index>(context.grid.size());
  if (context.weights.rows() != n || context.weights.cols() != grid_size) {
    throw Error(ErrorKind::InvalidArgument, "bootstrap context does not match the fit");
  }
  if (!(context.vhat2.minCoeff() >= kDegenerateVariance)) {
    throw Error(ErrorKind::DegenerateVariance, "vhat2 below tolerance in bootstrap context");
  }
  const double cell = context.grid.cell_measure();
  const Eigen::RowVectorXd inv_v2 = context.vhat2.array().inverse().matrix().transpose();

  const Eigen::RowVectorXd observed = context.zhat.array().square().matrix().transpose().cwiseProduct(inv_v2);
  const double observed_sup = observed.maxCoeff();
  const double observed_ave = cell * observed.sum();

  // Scores e_t w_t(lambda) scaled by n^{-1/2}
  const Eigen::MatrixXd scores =
      (context.weights.array().colwise() * fit.residuals.array()).matrix() / std::sqrt(static_cast<double>(n));

  std::vector<double> sups(replicates);
  std::vector<double> aves(replicates);
  const auto total = static_cast<Eigen::Index>(replicates);
  Eigen::MatrixXd draws;
  Eigen::MatrixXd paths;
  for (Eigen::Index start = 0; start < total; start += kBootstrapBlock) {
    const Eigen::Index rows = std::min(kBootstrapBlock, total - start);
    draws.resize(rows, n);
    for (Eigen::Index r = 0; r < rows; ++r) {
      auto stream = rng.derive(static_cast<std::uint64_t>(start + r));
      for (Eigen::Index t = 0; t < n; ++t) draws(r, t) = stream.normal();
    }
    paths.noalias() = draws * scores;
    for (Eigen::Index r = 0; r < rows; ++r) {
      const Eigen::RowVectorXd stat = paths.row(r).array().square().matrix().cwiseProduct(inv_v2);
      sups[static_cast<std::size_t>(start + r)] = stat.maxCoeff();
      aves[static_cast<std::size_t>(start + r)] = cell * stat.sum();
    }
  }
  return BootstrapPValues{empirical_upper_pvalue(observed_sup, sups), empirical_upper_pvalue(observed_ave, aves)};
}

double wild_bootstrap_pvalue(const FuncformStatContext& context, const LsFit& fit, Transform transform,
                             std::size_t replicates, const RandomStream& rng) {
  const auto p = wild_bootstrap_pvalues(context, fit, replicates, rng);
  return transform == Transform::Sup ? p.sup : p.ave;
}

bool icm_supports(double level) {
  return std::any_of(kIcmLevels.begin(), kIcmLevels.end(), [level](double l) { return std::abs(l - level) < 1e-12; });
}

double icm_bound(double level) {
  for (std::size_t i = 0; i < kIcmLevels.size(); ++i) {
    if (std::abs(kIcmLevels[i] - level) < 1e-12) return kIcmBounds[i];
  }
  throw Error(ErrorKind::UnsupportedLevel, fmt::format("no ICM bound tabulated at level {}", level));
}

PvotReport icm_test(const FuncformStatContext& context, double level) {
  const double bound = icm_bound(level);
  const double cell = context.grid.cell_measure();
  PvotReport report;
  report.method = Method::Icm;
  report.level = level;
  report.statistic = cell * context.zhat.squaredNorm();
  report.critical_value = bound * cell * context.vhat2.sum();
  report.reject = report.statistic >= report.critical_value;
  return report;
}

}  // namespace pvot::funcform
