#include "pvot/structural_break.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <fmt/format.h>

#include "pvot/error.hpp"

namespace pvot::brk {

namespace {

struct SegmentSolve {
  Eigen::VectorXd theta;
  Eigen::MatrixXd inverse_gram;
};

// LDLT rather than an explicit inverse: with one regressor theta is the exact
// quotient x'y / x'x, so identical segments give bitwise-identical estimates.
SegmentSolve solve_segment(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
                           const char* which) {
  const Eigen::MatrixXd gram = x.transpose() * x;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || !(ldlt.rcond() > 1e-12)) {
    throw Error(ErrorKind::SingularSegment, fmt::format("{} segment gram matrix is singular", which));
  }
  const Eigen::VectorXd xty = x.transpose() * y;
  return {ldlt.solve(xty), ldlt.solve(Eigen::MatrixXd::Identity(gram.rows(), gram.cols()))};
}

}  // namespace

std::size_t split_index(double lambda, std::size_t n) {
  return static_cast<std::size_t>(std::lround(lambda * static_cast<double>(n)));
}

BreakFitPair fit_segments(const dgp::Sample& sample, std::size_t split) {
  const std::size_t n = sample.n();
  const std::size_t k = sample.k();
  if (k == 0) throw Error(ErrorKind::InvalidArgument, "break test needs at least one regressor");
  if (split < k + 1 || split + k + 1 > n) {
    throw Error(ErrorKind::InvalidArgument,
                fmt::format("split {} leaves a segment with fewer than {} observations (n = {})", split, k + 1, n));
  }
  const auto m = static_cast<Eigen::Index>(split);
  const auto rest = static_cast<Eigen::Index>(n - split);
  const auto x1 = sample.x.topRows(m);
  const auto x2 = sample.x.bottomRows(rest);
  const auto y1 = sample.y.head(m);
  const auto y2 = sample.y.tail(rest);

  const auto first = solve_segment(x1, y1, "first");
  const auto second = solve_segment(x2, y2, "second");
  const Eigen::MatrixXd& inv1 = first.inverse_gram;
  const Eigen::MatrixXd& inv2 = second.inverse_gram;

  BreakFitPair fit;
  fit.split_index = split;
  fit.theta1 = first.theta;
  fit.theta2 = second.theta;
  const double ssr = (y1 - x1 * fit.theta1).squaredNorm() + (y2 - x2 * fit.theta2).squaredNorm();
  const double nd = static_cast<double>(n);
  const double sigma2 = ssr / nd;

  const auto kk = static_cast<Eigen::Index>(k);
  fit.vhat = Eigen::MatrixXd::Zero(2 * kk, 2 * kk);
  fit.vhat.topLeftCorner(kk, kk) = nd * sigma2 * inv1;
  fit.vhat.bottomRightCorner(kk, kk) = nd * sigma2 * inv2;
  return fit;
}

double break_wald_stat(const dgp::Sample& sample, std::size_t split, Orientation orientation) {
  const BreakFitPair fit = fit_segments(sample, split);
  const auto k = fit.theta1.size();
  Eigen::VectorXd diff = fit.theta1 - fit.theta2;
  if (orientation == Orientation::SecondMinusFirst) diff = fit.theta2 - fit.theta1;
  if ((diff.array() == 0.0).all()) return 0.0;

  // R V R' for R = [I, -I] (sign of R cancels in the quadratic form).
  const Eigen::MatrixXd rvr = fit.vhat.topLeftCorner(k, k) + fit.vhat.bottomRightCorner(k, k);
  Eigen::LLT<Eigen::MatrixXd> llt(rvr);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::SingularSegment, "restricted covariance is not positive definite");
  }
  const double n = static_cast<double>(sample.n());
  return std::max(0.0, n * diff.dot(llt.solve(diff)));
}

StatPath break_wald_path(const dgp::Sample& sample, const NuisanceGrid& grid) {
  if (!(grid.lower() > 0.0 && grid.upper() < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "break fractions must lie in a compact subset of (0, 1)");
  }
  std::vector<double> values(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) values[g] = break_wald_stat(sample, split_index(grid[g], sample.n()));
  return StatPath(grid, std::move(values));
}

PValuePath break_pvalue_path(const StatPath& path, int restrictions) {
  if (restrictions < 1) throw Error(ErrorKind::InvalidArgument, "restriction count must be >= 1");
  std::vector<double> p(path.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = chi2_upper_tail(path[i], restrictions);
  return PValuePath(path.grid(), std::move(p));
}

}  // namespace pvot::brk
