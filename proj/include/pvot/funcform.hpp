#pragma once

#include <array>
#include <cstddef>

#include <Eigen/Dense>

#include "pvot/dgp.hpp"
#include "pvot/grid.hpp"
#include "pvot/pvot.hpp"
#include "pvot/random.hpp"

namespace pvot::funcform {

struct LsFit {
  Eigen::VectorXd beta;
  Eigen::VectorXd residuals;
  /// (1/n) sum x_t x_t'
  Eigen::MatrixXd gram;
};

/// Least squares of y on the sample's regressor rows (no intercept added).
LsFit ols_fit(const dgp::Sample& sample);

/// arctan of the centered regressor.
double weight_transform(double x, double x_mean);

/// Per-lambda ingredients of the LM statistic, kept for the bootstrap and ICM.
struct FuncformStatContext {
  NuisanceGrid grid;
  Eigen::VectorXd zhat;
  Eigen::VectorXd vhat2;
  /// w_t(lambda) = F_t(lambda) - b(lambda)' A^{-1} x_t, one column per grid point.
  Eigen::MatrixXd weights;
};

struct LmResult {
  StatPath path;
  FuncformStatContext context;
};

inline constexpr double kDegenerateVariance = 1e-12;

/// LM statistic path T(lambda) = zhat^2 / vhat2 with logistic weights
/// F_t(lambda) = 1 / (1 + exp(lambda * Psi_t)) applied to regressor column
/// `weight_column`. Throws DegenerateVariance when vhat2 < 1e-12 anywhere.
LmResult lm_stat_path(const dgp::Sample& sample, const LsFit& fit, const NuisanceGrid& grid,
                      std::size_t weight_column = 0);

/// Elementwise chi2(1) upper-tail p-values.
PValuePath asym_pvalue_path(const StatPath& path);

inline constexpr std::size_t kDefaultBootstrapReplicates = 1000;

struct BootstrapPValues {
  double sup = 1.0;
  double ave = 1.0;
};

/// Wild bootstrap p-values for the sup and ave transforms of the observed
/// path zhat^2/vhat2. Replicate i draws z_{t,i} ~ N(0,1) from `rng.derive(i)`;
/// the same draws serve every lambda and both transforms.
BootstrapPValues wild_bootstrap_pvalues(const FuncformStatContext& context, const LsFit& fit,
                                        std::size_t replicates, const RandomStream& rng);

double wild_bootstrap_pvalue(const FuncformStatContext& context, const LsFit& fit, Transform transform,
                             std::size_t replicates, const RandomStream& rng);

/// Tabulated critical-value upper bounds at levels .01, .05, .10.
inline constexpr std::array<double, 3> kIcmLevels{0.01, 0.05, 0.10};
inline constexpr std::array<double, 3> kIcmBounds{6.81, 4.26, 3.23};

/// Throws UnsupportedLevel for levels outside kIcmLevels.
double icm_bound(double level);
bool icm_supports(double level);

/// Reject iff ave(zhat^2) >= u_level * ave(vhat2).
PvotReport icm_test(const FuncformStatContext& context, double level);

}  // namespace pvot::funcform
