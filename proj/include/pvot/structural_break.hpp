#pragma once

#include <cstddef>

#include <Eigen/Dense>

#include "pvot/dgp.hpp"
#include "pvot/grid.hpp"
#include "pvot/pvot.hpp"

namespace pvot::brk {

/// Least squares on the two segments t <= split and t > split.
struct BreakFitPair {
  Eigen::VectorXd theta1;
  Eigen::VectorXd theta2;
  /// n times the estimated covariance of [theta1', theta2']' (homoskedastic).
  Eigen::MatrixXd vhat;
  std::size_t split_index = 0;
};

enum class Orientation { FirstMinusSecond, SecondMinusFirst };

/// Nearest-integer split [lambda n], halves rounded away from zero.
std::size_t split_index(double lambda, std::size_t n);

/// Throws InvalidArgument if a segment has fewer than k+1 observations and
/// SingularSegment if a segment gram matrix is singular.
BreakFitPair fit_segments(const dgp::Sample& sample, std::size_t split);

/// Wald statistic n (R theta)' (R V R')^{-1} (R theta) with R theta = theta1 - theta2
/// (or its negative). Exactly zero when the segment estimates coincide.
double break_wald_stat(const dgp::Sample& sample, std::size_t split,
                       Orientation orientation = Orientation::FirstMinusSecond);

StatPath break_wald_path(const dgp::Sample& sample, const NuisanceGrid& grid);

/// Elementwise chi2(r) upper tail.
PValuePath break_pvalue_path(const StatPath& path, int restrictions);

}  // namespace pvot::brk
