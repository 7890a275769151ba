#include "gpdeg/dist.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "gpdeg/special.hpp"

namespace gpdeg {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::size_t expected_arity(DistKind kind) {
  switch (kind) {
    case DistKind::StudentTLocScaleLB0:
      return 3;
    case DistKind::Constant:
      return 1;
    default:
      return 2;
  }
}

// Probability mass the untruncated family places above zero.
double log_mass_above_zero(const DistSpec& d) {
  const auto& p = d.params;
  switch (d.kind) {
    case DistKind::TruncNormalLB0:
      return log_std_normal_cdf(p[0] / p[1]);
    case DistKind::StudentTLocScaleLB0:
      return p[1] == 0.0 ? -std::numbers::ln2 : std::log(student_t_cdf(p[1] / p[2], p[0]));
    case DistKind::HalfCauchy:
      return std::log(0.5 + std::atan(p[0] / p[1]) / std::numbers::pi);
    default:
      return 0.0;
  }
}

double sample_chi_squared(double df, Rng& rng) { return sample_gamma(0.5 * df, 0.5, rng); }

}  // namespace

DistSpec DistSpec::normal(double location, double scale) { return {DistKind::Normal, {location, scale}}; }
DistSpec DistSpec::normal_lb0(double location, double scale) {
  return {DistKind::TruncNormalLB0, {location, scale}};
}
DistSpec DistSpec::student_t_lb0(double df, double location, double scale) {
  return {DistKind::StudentTLocScaleLB0, {df, location, scale}};
}
DistSpec DistSpec::uniform(double lower, double upper) { return {DistKind::Uniform, {lower, upper}}; }
DistSpec DistSpec::half_cauchy(double scale, double location) {
  return {DistKind::HalfCauchy, {location, scale}};
}
DistSpec DistSpec::gamma(double shape, double rate) { return {DistKind::Gamma, {shape, rate}}; }
DistSpec DistSpec::constant(double value) { return {DistKind::Constant, {value}}; }

std::string_view to_string(DistKind kind) {
  switch (kind) {
    case DistKind::Normal:
      return "normal";
    case DistKind::TruncNormalLB0:
      return "normal_lb0";
    case DistKind::StudentTLocScaleLB0:
      return "student_t_lb0";
    case DistKind::Uniform:
      return "uniform";
    case DistKind::HalfCauchy:
      return "half_cauchy";
    case DistKind::Gamma:
      return "gamma";
    case DistKind::Constant:
      return "constant";
  }
  return "unknown";
}

DistKind dist_kind_from_string(std::string_view name) {
  for (auto k : {DistKind::Normal, DistKind::TruncNormalLB0, DistKind::StudentTLocScaleLB0, DistKind::Uniform,
                 DistKind::HalfCauchy, DistKind::Gamma, DistKind::Constant}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown distribution family '" + std::string(name) + "'");
}

void validate(const DistSpec& d) {
  const std::string name(to_string(d.kind));
  if (d.params.size() != expected_arity(d.kind))
    throw std::invalid_argument(name + ": expected " + std::to_string(expected_arity(d.kind)) + " parameters");
  for (double v : d.params)
    if (!std::isfinite(v)) throw std::invalid_argument(name + ": parameters must be finite");
  const auto& p = d.params;
  switch (d.kind) {
    case DistKind::Normal:
      if (!(p[1] > 0)) throw std::invalid_argument(name + ": scale must be positive");
      break;
    case DistKind::TruncNormalLB0:
    case DistKind::HalfCauchy:
      if (!(p[1] > 0)) throw std::invalid_argument(name + ": scale must be positive");
      if (p[0] < 0) throw std::invalid_argument(name + ": location must be non-negative");
      break;
    case DistKind::StudentTLocScaleLB0:
      if (!(p[0] >= 1)) throw std::invalid_argument(name + ": df must be at least 1");
      if (!(p[2] > 0)) throw std::invalid_argument(name + ": scale must be positive");
      if (p[1] < 0) throw std::invalid_argument(name + ": location must be non-negative");
      break;
    case DistKind::Uniform:
      if (!(p[0] < p[1])) throw std::invalid_argument(name + ": lower must be below upper");
      break;
    case DistKind::Gamma:
      if (!(p[0] > 0) || !(p[1] > 0)) throw std::invalid_argument(name + ": shape and rate must be positive");
      break;
    case DistKind::Constant:
      break;
  }
}

bool is_constant(const DistSpec& d) { return d.kind == DistKind::Constant; }

double support_lower(const DistSpec& d) {
  switch (d.kind) {
    case DistKind::Normal:
      return -kInf;
    case DistKind::Uniform:
    case DistKind::Constant:
      return d.params[0];
    default:
      return 0.0;
  }
}

double support_upper(const DistSpec& d) {
  switch (d.kind) {
    case DistKind::Uniform:
      return d.params[1];
    case DistKind::Constant:
      return d.params[0];
    default:
      return kInf;
  }
}

double logpdf(const DistSpec& d, double x) {
  const auto& p = d.params;
  if (std::isnan(x)) throw std::domain_error("logpdf: argument is NaN");
  switch (d.kind) {
    case DistKind::Normal:
      return normal_logpdf(x, p[0], p[1]);
    case DistKind::TruncNormalLB0:
      if (x < 0) return -kInf;
      return normal_logpdf(x, p[0], p[1]) - log_mass_above_zero(d);
    case DistKind::StudentTLocScaleLB0: {
      if (x < 0) return -kInf;
      const double df = p[0];
      const double z = (x - p[1]) / p[2];
      return ln_gamma(0.5 * (df + 1)) - ln_gamma(0.5 * df) - 0.5 * std::log(df * std::numbers::pi) -
             std::log(p[2]) - 0.5 * (df + 1) * std::log1p(z * z / df) - log_mass_above_zero(d);
    }
    case DistKind::Uniform:
      if (x < p[0] || x > p[1]) return -kInf;
      return -std::log(p[1] - p[0]);
    case DistKind::HalfCauchy: {
      if (x < 0) return -kInf;
      const double z = (x - p[0]) / p[1];
      return -std::log(std::numbers::pi * p[1]) - std::log1p(z * z) - log_mass_above_zero(d);
    }
    case DistKind::Gamma:
      return gamma_logpdf(x, p[0], p[1]);
    case DistKind::Constant:
      break;
  }
  throw std::logic_error("logpdf: a constant has no density");
}

double logpdf_dx(const DistSpec& d, double x) {
  const auto& p = d.params;
  switch (d.kind) {
    case DistKind::Normal:
    case DistKind::TruncNormalLB0:
      return -(x - p[0]) / (p[1] * p[1]);
    case DistKind::StudentTLocScaleLB0: {
      const double r = x - p[1];
      return -(p[0] + 1) * r / (p[0] * p[2] * p[2] + r * r);
    }
    case DistKind::Uniform:
      return 0.0;
    case DistKind::HalfCauchy: {
      const double r = x - p[0];
      return -2.0 * r / (p[1] * p[1] + r * r);
    }
    case DistKind::Gamma:
      return (p[0] - 1) / x - p[1];
    case DistKind::Constant:
      break;
  }
  throw std::logic_error("logpdf_dx: a constant has no density");
}

double cdf(const DistSpec& d, double x) {
  const auto& p = d.params;
  switch (d.kind) {
    case DistKind::Normal:
      return std_normal_cdf((x - p[0]) / p[1]);
    case DistKind::TruncNormalLB0: {
      if (x <= 0) return 0.0;
      const double lo = std_normal_cdf(-p[0] / p[1]);
      return (std_normal_cdf((x - p[0]) / p[1]) - lo) / (1.0 - lo);
    }
    case DistKind::StudentTLocScaleLB0: {
      if (x <= 0) return 0.0;
      const double lo = student_t_cdf(-p[1] / p[2], p[0]);
      return (student_t_cdf((x - p[1]) / p[2], p[0]) - lo) / (1.0 - lo);
    }
    case DistKind::Uniform:
      if (x <= p[0]) return 0.0;
      if (x >= p[1]) return 1.0;
      return (x - p[0]) / (p[1] - p[0]);
    case DistKind::HalfCauchy: {
      if (x <= 0) return 0.0;
      const double lo = std::atan(p[0] / p[1]);
      return (std::atan((x - p[0]) / p[1]) + lo) / (0.5 * std::numbers::pi + lo);
    }
    case DistKind::Gamma:
      return x <= 0 ? 0.0 : gamma_cdf(x, p[0], p[1]);
    case DistKind::Constant:
      return x < p[0] ? 0.0 : 1.0;
  }
  return 0.0;
}

double sample_gamma(double shape, double rate, Rng& rng) {
  if (shape < 1.0) {
    const double boost = std::exp(std::log(rng.uniform_open()) / shape);
    return sample_gamma(shape + 1.0, rate, rng) * boost;
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x;
    double v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform_open();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v / rate;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v / rate;
  }
}

double sample_normal_lb0(double location, double scale, Rng& rng) {
  for (;;) {
    const double x = location + scale * rng.normal();
    if (x >= 0.0) return x;
  }
}

double sample(const DistSpec& d, Rng& rng) {
  const auto& p = d.params;
  switch (d.kind) {
    case DistKind::Normal:
      return p[0] + p[1] * rng.normal();
    case DistKind::TruncNormalLB0:
      return sample_normal_lb0(p[0], p[1], rng);
    case DistKind::StudentTLocScaleLB0:
      for (;;) {
        const double z = rng.normal();
        const double t = z / std::sqrt(sample_chi_squared(p[0], rng) / p[0]);
        const double x = p[1] + p[2] * t;
        if (x >= 0.0) return x;
      }
    case DistKind::Uniform:
      return rng.uniform(p[0], p[1]);
    case DistKind::HalfCauchy:
      for (;;) {
        const double x = p[0] + p[1] * std::tan(std::numbers::pi * (rng.uniform_open() - 0.5));
        if (x >= 0.0) return x;
      }
    case DistKind::Gamma:
      return sample_gamma(p[0], p[1], rng);
    case DistKind::Constant:
      return p[0];
  }
  return 0.0;
}

double typical_value(const DistSpec& d) {
  const auto& p = d.params;
  switch (d.kind) {
    case DistKind::Normal:
      return p[0];
    case DistKind::TruncNormalLB0:
    case DistKind::HalfCauchy:
      return p[0] > 0 ? p[0] : p[1];
    case DistKind::StudentTLocScaleLB0:
      return p[1] > 0 ? p[1] : p[2];
    case DistKind::Uniform:
      return 0.5 * (p[0] + p[1]);
    case DistKind::Gamma:
      return p[0] / p[1];
    case DistKind::Constant:
      return p[0];
  }
  return 0.0;
}

TruncNormalTerm normal_lb0_term(double x, double location, double scale) {
  const double r = x - location;
  const double s2 = scale * scale;
  const double t = location / scale;
  const double lambda = inv_mills_ratio(t);
  TruncNormalTerm out{};
  out.value = x < 0 ? -kInf : normal_logpdf(x, location, scale) - log_std_normal_cdf(t);
  out.d_x = -r / s2;
  out.d_location = r / s2 - lambda / scale;
  out.d_scale = r * r / (s2 * scale) - 1.0 / scale + lambda * location / s2;
  return out;
}

}  // namespace gpdeg
