#include "pvot/dgp.hpp"

#include <cmath>
#include <fstream>
#include <ostream>

#include <fmt/format.h>

#include "pvot/csv.hpp"
#include "pvot/error.hpp"

namespace pvot::dgp {

namespace {

constexpr std::uint64_t kContractionSeed = 0x6761726368ULL;

Sample autoregressive_sample(const DgpSpec& spec, std::size_t n, RandomStream& rng) {
  std::vector<double> shocks(2 * n);
  for (auto& e : shocks) e = rng.normal();
  const auto path = simulate_autoregression(spec, shocks);
  Sample sample;
  sample.y.resize(static_cast<Eigen::Index>(n));
  sample.x.resize(static_cast<Eigen::Index>(n), 1);
  for (std::size_t t = 0; t < n; ++t) {
    sample.y(static_cast<Eigen::Index>(t)) = path[n + t];
    sample.x(static_cast<Eigen::Index>(t), 0) = path[n + t - 1];
  }
  return sample;
}

}  // namespace

std::string_view to_string(DgpKind kind) {
  switch (kind) {
    case DgpKind::IidLinear: return "iid_linear";
    case DgpKind::IidQuadratic: return "iid_quadratic";
    case DgpKind::Ar1: return "ar1";
    case DgpKind::Setar: return "setar";
    case DgpKind::Garch: return "garch";
  }
  return "unknown";
}

std::optional<DgpKind> parse_kind(std::string_view name) {
  for (auto kind : {DgpKind::IidLinear, DgpKind::IidQuadratic, DgpKind::Ar1, DgpKind::Setar, DgpKind::Garch}) {
    if (to_string(kind) == name) return kind;
  }
  return std::nullopt;
}

double DgpSpec::param(const std::string& name, double fallback) const {
  const auto it = params.find(name);
  return it == params.end() ? fallback : it->second;
}

DgpSpec make_spec(DgpKind kind, std::map<std::string, double> params) {
  DgpSpec spec{kind, std::move(params)};
  validate(spec);
  return spec;
}

double garch_log_contraction(double delta, double lambda, std::size_t draws) {
  auto rng = make_stream(kContractionSeed, 0);
  double sum = 0.0;
  for (std::size_t i = 0; i < draws; ++i) {
    const double e = rng.normal();
    sum += std::log(delta * e * e + lambda);
  }
  return sum / static_cast<double>(draws);
}

void validate(const DgpSpec& spec) {
  for (const auto& [name, value] : spec.params) {
    if (!std::isfinite(value)) throw Error(ErrorKind::BadDgp, fmt::format("parameter {} = {} is not finite", name, value));
  }
  switch (spec.kind) {
    case DgpKind::IidLinear:
    case DgpKind::IidQuadratic:
      if (spec.param("sigma", 1.0) < 0.0) throw Error(ErrorKind::BadDgp, "sigma must be nonnegative");
      break;
    case DgpKind::Ar1:
    case DgpKind::Setar: {
      const double ar = spec.param("ar", 0.9);
      if (!(std::abs(ar) < 1.0)) throw Error(ErrorKind::BadDgp, fmt::format("|ar| = {} must be < 1", std::abs(ar)));
      break;
    }
    case DgpKind::Garch: {
      const double omega = spec.param("omega", 1.0);
      const double delta = spec.param("delta", 0.0);
      const double lambda = spec.param("lambda", 0.6);
      if (!(omega > 0.0)) throw Error(ErrorKind::BadDgp, fmt::format("omega = {} must be > 0", omega));
      if (!(delta >= 0.0 && delta < 1.0)) throw Error(ErrorKind::BadDgp, fmt::format("delta = {} outside [0, 1)", delta));
      if (!(lambda >= 0.0 && lambda < 1.0)) {
        throw Error(ErrorKind::BadDgp, fmt::format("lambda = {} outside [0, 1)", lambda));
      }
      const double contraction = garch_log_contraction(delta, lambda);
      if (!(contraction < 0.0)) {
        throw Error(ErrorKind::BadDgp, fmt::format("E[ln(delta eps^2 + lambda)] ~ {} is not negative", contraction));
      }
      break;
    }
  }
}

std::vector<double> simulate_autoregression(const DgpSpec& spec, std::span<const double> shocks) {
  if (spec.kind != DgpKind::Ar1 && spec.kind != DgpKind::Setar) {
    throw Error(ErrorKind::BadDgp, "simulate_autoregression needs an ar1 or setar spec");
  }
  std::vector<double> y(shocks.size());
  if (y.empty()) return y;
  const double ar = spec.param("ar", 0.9);
  const double shift = spec.kind == DgpKind::Setar ? spec.param("setar_shift", -0.4) : 0.0;
  y[0] = spec.param("y1", shocks[0]);
  for (std::size_t t = 1; t < y.size(); ++t) {
    const double lag = y[t - 1];
    double mean = ar * lag;
    if (shift != 0.0 && lag > 0.0) mean += shift * lag;
    y[t] = mean + shocks[t];
  }
  return y;
}

GarchPath simulate_garch(double omega, double delta, double lambda, std::span<const double> shocks) {
  GarchPath path;
  path.y.resize(shocks.size());
  path.sigma2.resize(shocks.size());
  double sigma2 = omega / (1.0 - lambda);
  double prev_y2 = 0.0;
  for (std::size_t t = 0; t < shocks.size(); ++t) {
    sigma2 = omega + delta * prev_y2 + lambda * sigma2;
    path.sigma2[t] = sigma2;
    path.y[t] = std::sqrt(sigma2) * shocks[t];
    prev_y2 = path.y[t] * path.y[t];
  }
  return path;
}

Sample gen_garch(const DgpSpec& spec, std::size_t n, RandomStream& rng) {
  if (spec.kind != DgpKind::Garch) throw Error(ErrorKind::BadDgp, "gen_garch needs a garch spec");
  validate(spec);
  std::vector<double> shocks(n);
  for (auto& e : shocks) e = rng.normal();
  const auto path = simulate_garch(spec.param("omega", 1.0), spec.param("delta", 0.0), spec.param("lambda", 0.6), shocks);
  Sample sample;
  sample.y = Eigen::Map<const Eigen::VectorXd>(path.y.data(), static_cast<Eigen::Index>(n));
  sample.x.resize(static_cast<Eigen::Index>(n), 0);
  return sample;
}

Sample gen_sample(const DgpSpec& spec, std::size_t n, RandomStream& rng) {
  if (n < 2) throw Error(ErrorKind::InvalidArgument, fmt::format("sample size {} < 2", n));
  if (spec.kind == DgpKind::Garch) return gen_garch(spec, n, rng);
  validate(spec);
  if (spec.kind == DgpKind::Ar1 || spec.kind == DgpKind::Setar) return autoregressive_sample(spec, n, rng);

  const double beta = spec.param("beta", 2.0);
  const double quad = spec.kind == DgpKind::IidQuadratic ? spec.param("quad", 0.1) : 0.0;
  const double sigma = spec.param("sigma", 1.0);
  Sample sample;
  sample.y.resize(static_cast<Eigen::Index>(n));
  sample.x.resize(static_cast<Eigen::Index>(n), 1);
  for (Eigen::Index t = 0; t < static_cast<Eigen::Index>(n); ++t) {
    const double x = rng.normal();
    const double e = rng.normal();
    sample.x(t, 0) = x;
    sample.y(t) = beta * x + quad * x * x + sigma * e;
  }
  return sample;
}

void write_sample_csv(std::ostream& out, const Sample& sample) {
  out << "t,y";
  for (std::size_t j = 0; j < sample.k(); ++j) out << ",x" << (j + 1);
  out << '\n';
  for (Eigen::Index t = 0; t < sample.y.size(); ++t) {
    out << (t + 1) << ',' << csv::format_double(sample.y(t));
    for (Eigen::Index j = 0; j < sample.x.cols(); ++j) out << ',' << csv::format_double(sample.x(t, j));
    out << '\n';
  }
}

void write_sample_csv(const std::filesystem::path& path, const Sample& sample) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, fmt::format("cannot write '{}'", path.string()));
  write_sample_csv(out, sample);
}

Sample read_sample_csv(const std::filesystem::path& path) {
  const auto table = csv::read_numeric(path);
  const auto& header = table.header;
  if (header.size() < 2 || header[0] != "t" || header[1] != "y") {
    throw Error(ErrorKind::MalformedCsv,
                fmt::format("{}: header must start with 't,y', found '{}'", path.string(),
                            header.empty() ? std::string() : header[0] + (header.size() > 1 ? "," + header[1] : "")));
  }
  for (std::size_t j = 2; j < header.size(); ++j) {
    if (header[j] != fmt::format("x{}", j - 1)) {
      throw Error(ErrorKind::MalformedCsv,
                  fmt::format("{}: expected column 'x{}', found '{}'", path.string(), j - 1, header[j]));
    }
  }
  const auto n = static_cast<Eigen::Index>(table.rows.size());
  const auto k = static_cast<Eigen::Index>(header.size() - 2);
  Sample sample;
  sample.y.resize(n);
  sample.x.resize(n, k);
  for (Eigen::Index t = 0; t < n; ++t) {
    const auto& row = table.rows[static_cast<std::size_t>(t)];
    sample.y(t) = row[1];
    for (Eigen::Index j = 0; j < k; ++j) sample.x(t, j) = row[static_cast<std::size_t>(j + 2)];
  }
  return sample;
}

}  // namespace pvot::dgp
