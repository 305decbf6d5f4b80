#include "pvot/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <fmt/format.h>

#include "pvot/error.hpp"

namespace pvot {

NuisanceGrid::NuisanceGrid(std::vector<double> points, double lower, double upper)
    : points_(std::move(points)), lower_(lower), upper_(upper) {
  cell_measure_ = 1.0 / static_cast<double>(points_.size());
}

NuisanceGrid NuisanceGrid::from_points(std::vector<double> points, double lower, double upper) {
  if (!(lower < upper)) {
    throw Error(ErrorKind::InvalidArgument, fmt::format("grid bounds [{}, {}] are not ordered", lower, upper));
  }
  if (points.size() < 2) {
    throw Error(ErrorKind::GridTooCoarse, fmt::format("grid has {} point(s), need at least 2", points.size()));
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!std::isfinite(points[i]) || points[i] < lower || points[i] > upper) {
      throw Error(ErrorKind::InvalidArgument, fmt::format("grid point {} outside [{}, {}]", points[i], lower, upper));
    }
    if (i > 0 && !(points[i] > points[i - 1])) {
      throw Error(ErrorKind::InvalidArgument, "grid points must be strictly increasing");
    }
  }
  return NuisanceGrid(std::move(points), lower, upper);
}

NuisanceGrid make_grid(double lower, double upper, double coarseness, std::size_t n) {
  if (!(lower < upper)) {
    throw Error(ErrorKind::InvalidArgument, fmt::format("grid bounds [{}, {}] are not ordered", lower, upper));
  }
  if (!(coarseness > 0.0) || n == 0) {
    throw Error(ErrorKind::InvalidArgument, "coarseness and sample size must be positive");
  }
  const double scale = coarseness * static_cast<double>(n);
  // Relative slack absorbs representation error in (upper - lower) * scale,
  // e.g. .98 * 250 evaluating to 244.99999999999997.
  const double span = (upper - lower) * scale;
  const auto count = static_cast<std::size_t>(std::floor(span * (1.0 + 1e-12) + 1e-9));
  if (count < 2) {
    throw Error(ErrorKind::GridTooCoarse,
                fmt::format("only {} point(s) in [{}, {}] at coarseness {} and n = {}", count, lower, upper,
                            coarseness, n));
  }
  std::vector<double> points(count);
  for (std::size_t i = 0; i < count; ++i) {
    points[i] = std::min(lower + static_cast<double>(i + 1) / scale, upper);
  }
  return NuisanceGrid::from_points(std::move(points), lower, upper);
}

NuisanceGrid make_grid(const GridSpec& spec, std::size_t n) {
  if (spec.points > 0) {
    const double coarseness = static_cast<double>(spec.points) / ((spec.upper - spec.lower) * static_cast<double>(n));
    return make_grid(spec.lower, spec.upper, coarseness, n);
  }
  return make_grid(spec.lower, spec.upper, spec.coarseness, n);
}

}  // namespace pvot
