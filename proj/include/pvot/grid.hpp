#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pvot {

/// Discretized nuisance-parameter set. Every point carries the same cell
/// measure and the measures sum to one, so integrals over the grid are
/// normalized midpoint sums.
class NuisanceGrid {
 public:
  /// Validates ordering, bounds and size (>= 2 points).
  static NuisanceGrid from_points(std::vector<double> points, double lower, double upper);

  std::span<const double> points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  double operator[](std::size_t i) const { return points_[i]; }
  double lower() const { return lower_; }
  double upper() const { return upper_; }
  double cell_measure() const { return cell_measure_; }

  bool operator==(const NuisanceGrid&) const = default;

 private:
  NuisanceGrid(std::vector<double> points, double lower, double upper);

  std::vector<double> points_;
  double lower_ = 0.0;
  double upper_ = 0.0;
  double cell_measure_ = 0.0;
};

/// Points lower + i/(coarseness*n), i = 1..imax, where imax is the largest i
/// keeping the point inside [lower, upper]. Throws GridTooCoarse below 2 points.
NuisanceGrid make_grid(double lower, double upper, double coarseness, std::size_t n);

/// Declarative grid description. When `points` is nonzero the step is
/// (upper - lower)/points regardless of the sample size.
struct GridSpec {
  double lower = 0.0001;
  double upper = 1.0;
  double coarseness = 100.0;
  std::size_t points = 0;
};

NuisanceGrid make_grid(const GridSpec& spec, std::size_t n);

}  // namespace pvot
