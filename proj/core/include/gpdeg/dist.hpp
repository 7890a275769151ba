#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "gpdeg/rng.hpp"

namespace gpdeg {

/// Prior and sampling families used by the models.
///
/// Parameter order in DistSpec::params:
///   Normal, TruncNormalLB0       (location, scale)
///   StudentTLocScaleLB0          (df, location, scale)
///   Uniform                      (lower, upper)
///   HalfCauchy                   (location, scale)
///   Gamma                        (shape, rate)
///   Constant                     (value)          point mass; pins a parameter
///
/// The "LB0" families and HalfCauchy are truncated below at zero and require a
/// non-negative location.
enum class DistKind { Normal, TruncNormalLB0, StudentTLocScaleLB0, Uniform, HalfCauchy, Gamma, Constant };

struct DistSpec {
  DistKind kind = DistKind::Normal;
  std::vector<double> params;

  static DistSpec normal(double location, double scale);
  static DistSpec normal_lb0(double location, double scale);
  static DistSpec student_t_lb0(double df, double location, double scale);
  static DistSpec uniform(double lower, double upper);
  static DistSpec half_cauchy(double scale, double location = 0.0);
  static DistSpec gamma(double shape, double rate);
  static DistSpec constant(double value);

  bool operator==(const DistSpec&) const = default;
};

std::string_view to_string(DistKind kind);
DistKind dist_kind_from_string(std::string_view name);

/// Throws std::invalid_argument describing the first violated constraint.
void validate(const DistSpec& dist);

bool is_constant(const DistSpec& dist);

/// Support bounds; upper may be +inf.
double support_lower(const DistSpec& dist);
double support_upper(const DistSpec& dist);

/// Normalized log density, including truncation constants. -inf outside the
/// support. Constant has no density and throws.
double logpdf(const DistSpec& dist, double x);

/// d/dx logpdf(dist, x) inside the support.
double logpdf_dx(const DistSpec& dist, double x);

/// Distribution function.
double cdf(const DistSpec& dist, double x);

double sample(const DistSpec& dist, Rng& rng);

/// A representative interior point (location, midpoint or mean) used to
/// centre initial values.
double typical_value(const DistSpec& dist);

/// Ga(shape, rate) draw: Marsaglia-Tsang squeeze for shape >= 1 with the
/// U^(1/shape) boost below one.
double sample_gamma(double shape, double rate, Rng& rng);

/// N(location, scale) truncated below at zero, location >= 0 (rejection).
double sample_normal_lb0(double location, double scale, Rng& rng);

// Log density of N(location, scale) truncated below at zero together with its
// partial derivatives; used by the hierarchical priors on unit parameters.
struct TruncNormalTerm {
  double value;
  double d_x;
  double d_location;
  double d_scale;
};
TruncNormalTerm normal_lb0_term(double x, double location, double scale);

}  // namespace gpdeg
