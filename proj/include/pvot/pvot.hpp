#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "pvot/grid.hpp"
#include "pvot/random.hpp"

namespace pvot {

/// Statistic values T(lambda) on a grid; nonnegative and finite.
class StatPath {
 public:
  StatPath(NuisanceGrid grid, std::vector<double> values);

  const NuisanceGrid& grid() const { return grid_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

 private:
  NuisanceGrid grid_;
  std::vector<double> values_;
};

/// Pointwise p-values p(lambda) on a grid; every value in [0, 1].
class PValuePath {
 public:
  PValuePath(NuisanceGrid grid, std::vector<double> values);

  const NuisanceGrid& grid() const { return grid_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

 private:
  NuisanceGrid grid_;
  std::vector<double> values_;
};

enum class Method { Pvot, Sup, Ave, Randomized, Icm };
enum class Transform { Sup, Ave };

std::string_view to_string(Method method);
std::string_view to_string(Transform transform);

/// Outcome of one test at one level. `occupation_time` is meaningful for the
/// PVOT method; the other methods report a p-value or a statistic against a
/// critical value instead.
struct PvotReport {
  Method method = Method::Pvot;
  double level = 0.05;
  double occupation_time = std::numeric_limits<double>::quiet_NaN();
  double statistic = std::numeric_limits<double>::quiet_NaN();
  double pvalue = std::numeric_limits<double>::quiet_NaN();
  double critical_value = std::numeric_limits<double>::quiet_NaN();
  bool reject = false;
};

/// Measure of the grid set where p(lambda) < level (strict).
double occupation_time(const PValuePath& path, double level);

/// Rejects iff occupation_time > level; the boundary does not reject.
PvotReport pvot_decide(double occupation_time, double level);

/// P(chi2(dof) > t) via the regularized upper incomplete gamma function.
double chi2_upper_tail(double t, int dof);

double smooth_sup(const StatPath& path);
/// Midpoint-rule average with the grid's uniform cell measure.
double smooth_ave(const StatPath& path);
double apply_transform(Transform transform, const StatPath& path);

std::size_t pick_randomized(const NuisanceGrid& grid, RandomStream& rng);
std::size_t pick_randomized(std::size_t point_count, RandomStream& rng);

/// Fraction of reference values strictly greater than `stat`.
double empirical_upper_pvalue(double stat, std::span<const double> reference);

}  // namespace pvot
