#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "pvot/random.hpp"

namespace pvot::dgp {

enum class DgpKind { IidLinear, IidQuadratic, Ar1, Setar, Garch };

std::string_view to_string(DgpKind kind);
std::optional<DgpKind> parse_kind(std::string_view name);

/// Data generating process. Recognized parameters (defaults in brackets):
///   beta [2], quad [.1], sigma [1]               iid kinds
///   ar [.9], setar_shift [-.4], y1 [= eps_1]     ar1 / setar
///   omega [1], delta [0], lambda [.6]            garch
struct DgpSpec {
  DgpKind kind = DgpKind::IidLinear;
  std::map<std::string, double> params;

  double param(const std::string& name, double fallback) const;
};

DgpSpec make_spec(DgpKind kind, std::map<std::string, double> params = {});

/// Observed sample: y_t and the regressor rows used by the estimated model.
/// GARCH samples carry no regressors.
struct Sample {
  Eigen::VectorXd y;
  Eigen::MatrixXd x;

  std::size_t n() const { return static_cast<std::size_t>(y.size()); }
  std::size_t k() const { return static_cast<std::size_t>(x.cols()); }
};

/// Throws BadDgp when a DgpSpec is invalid (including nonstationary GARCH).
void validate(const DgpSpec& spec);

/// Draws a sample of size n. iid kinds draw (x_t, eps_t) pairs; ar1/setar
/// simulate 2n observations from y_1 = eps_1 and keep the last n with
/// x_t = y_{t-1}; garch delegates to gen_garch.
Sample gen_sample(const DgpSpec& spec, std::size_t n, RandomStream& rng);

/// y_t = sigma_t eps_t, sigma2_t = omega + delta y_{t-1}^2 + lambda sigma2_{t-1},
/// sigma2_0 = omega/(1 - lambda), y_0 = 0.
Sample gen_garch(const DgpSpec& spec, std::size_t n, RandomStream& rng);

/// Full autoregressive path y_1..y_m driven by the given shocks (m = shocks.size()).
std::vector<double> simulate_autoregression(const DgpSpec& spec, std::span<const double> shocks);

struct GarchPath {
  std::vector<double> y;
  std::vector<double> sigma2;
};

GarchPath simulate_garch(double omega, double delta, double lambda, std::span<const double> shocks);

/// Monte Carlo estimate of E[ln(delta eps^2 + lambda)] from a fixed internal stream.
double garch_log_contraction(double delta, double lambda, std::size_t draws = 100000);

void write_sample_csv(std::ostream& out, const Sample& sample);
void write_sample_csv(const std::filesystem::path& path, const Sample& sample);
/// Columns t, y, x1..xk with a header row.
Sample read_sample_csv(const std::filesystem::path& path);

}  // namespace pvot::dgp
