#include "pvot/pvot.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/special_functions/gamma.hpp>
#include <fmt/format.h>

#include "pvot/error.hpp"

namespace pvot {

namespace {

void require_same_length(const NuisanceGrid& grid, std::size_t count, const char* what) {
  if (grid.size() != count) {
    throw Error(ErrorKind::InvalidArgument,
                fmt::format("{} has {} values for a {}-point grid", what, count, grid.size()));
  }
}

}  // namespace

StatPath::StatPath(NuisanceGrid grid, std::vector<double> values) : grid_(std::move(grid)), values_(std::move(values)) {
  require_same_length(grid_, values_.size(), "statistic path");
  for (double v : values_) {
    if (!std::isfinite(v) || v < 0.0) {
      throw Error(ErrorKind::InvalidArgument, fmt::format("statistic value {} is not finite and nonnegative", v));
    }
  }
}

PValuePath::PValuePath(NuisanceGrid grid, std::vector<double> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  require_same_length(grid_, values_.size(), "p-value path");
  for (double v : values_) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw Error(ErrorKind::InvalidArgument, fmt::format("p-value {} outside [0, 1]", v));
    }
  }
}

std::string_view to_string(Method method) {
  switch (method) {
    case Method::Pvot: return "pvot";
    case Method::Sup: return "sup";
    case Method::Ave: return "ave";
    case Method::Randomized: return "randomized";
    case Method::Icm: return "icm";
  }
  return "unknown";
}

std::string_view to_string(Transform transform) {
  return transform == Transform::Sup ? "sup" : "ave";
}

double occupation_time(const PValuePath& path, double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, fmt::format("level {} outside (0, 1)", level));
  }
  const auto below = std::count_if(path.values().begin(), path.values().end(), [level](double p) { return p < level; });
  // Every cell has measure 1/size; dividing keeps the result exactly below/size.
  return static_cast<double>(below) / static_cast<double>(path.size());
}

PvotReport pvot_decide(double occupation_time, double level) {
  PvotReport report;
  report.method = Method::Pvot;
  report.level = level;
  report.occupation_time = occupation_time;
  report.statistic = occupation_time;
  report.critical_value = level;
  report.reject = occupation_time > level;
  return report;
}

double chi2_upper_tail(double t, int dof) {
  if (dof < 1) throw Error(ErrorKind::InvalidArgument, fmt::format("chi-square dof {} < 1", dof));
  if (std::isnan(t) || t < 0.0) throw Error(ErrorKind::InvalidArgument, fmt::format("chi-square argument {} < 0", t));
  if (t == 0.0) return 1.0;
  if (std::isinf(t)) return 0.0;
  return boost::math::gamma_q(0.5 * dof, 0.5 * t);
}

double smooth_sup(const StatPath& path) { return *std::max_element(path.values().begin(), path.values().end()); }

double smooth_ave(const StatPath& path) {
  double sum = 0.0;
  for (double v : path.values()) sum += v;
  return path.grid().cell_measure() * sum;
}

double apply_transform(Transform transform, const StatPath& path) {
  return transform == Transform::Sup ? smooth_sup(path) : smooth_ave(path);
}

std::size_t pick_randomized(std::size_t point_count, RandomStream& rng) { return rng.uniform_index(point_count); }

std::size_t pick_randomized(const NuisanceGrid& grid, RandomStream& rng) { return pick_randomized(grid.size(), rng); }

double empirical_upper_pvalue(double stat, std::span<const double> reference) {
  if (reference.empty()) throw Error(ErrorKind::EmptyReference, "empirical p-value needs a nonempty reference");
  const auto above = std::count_if(reference.begin(), reference.end(), [stat](double r) { return r > stat; });
  return static_cast<double>(above) / static_cast<double>(reference.size());
}

}  // namespace pvot
