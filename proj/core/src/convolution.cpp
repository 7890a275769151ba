#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "gpdeg/special.hpp"

namespace gpdeg {

namespace {

constexpr double kTolerance = 1e-10;

double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double top = std::max(a, b);
  return top + std::log(std::exp(a - top) + std::exp(b - top));
}

}  // namespace

double normal_gamma_logpdf(double x, double shape, double rate, double sigma) {
  if (!(shape > 0.0) || !(rate > 0.0) || !(sigma > 0.0) || std::isnan(x))
    return std::numeric_limits<double>::quiet_NaN();

  // log integrand over g without the g^(shape - 1) factor
  const double log_norm = shape * std::log(rate) - ln_gamma(shape);
  auto smooth = [&](double g) { return normal_logpdf(x, g, sigma) + log_norm - rate * g; };
  auto full = [&](double g) { return smooth(g) + (shape - 1.0) * std::log(g); };

  // Interior stationary point of the log integrand: the larger root of
  // g^2 - (x - rate sigma^2) g - (shape - 1) sigma^2 = 0. Without one the
  // integrand decreases from zero.
  const double s2 = sigma * sigma;
  const double c = x - rate * s2;
  const double disc = c * c + 4.0 * (shape - 1.0) * s2;
  double split = 0.0;
  if (disc >= 0.0) split = 0.5 * (c + std::sqrt(disc));
  const bool interior = split > 0.0;
  if (!interior) split = std::min(sigma, std::max(shape, 1.0) / rate);

  const double curvature = 1.0 / s2 + std::max(shape - 1.0, 0.0) / (split * split);
  const double h = 1.0 / std::sqrt(curvature);

  thread_local boost::math::quadrature::tanh_sinh<double> finite_rule;
  thread_local boost::math::quadrature::exp_sinh<double> tail_rule;

  // [split, inf) with g = split + h u
  const double ref_right = full(split);
  auto right = [&](double u) { return std::exp(full(split + h * u) - ref_right); };
  const double log_right = ref_right + std::log(h * tail_rule.integrate(right, kTolerance));

  // [0, split]; below shape 1 substitute w = g^shape to absorb the singularity
  double log_left;
  if (shape < 1.0) {
    const double top = std::pow(split, shape);
    const double ref = std::max(smooth(0.0), smooth(split));
    auto left = [&](double w) { return std::exp(smooth(std::pow(w, 1.0 / shape)) - ref); };
    log_left = ref - std::log(shape) + std::log(finite_rule.integrate(left, 0.0, top, kTolerance));
  } else {
    const double ref = interior ? full(split) : std::max(full(split), smooth(0.0));
    auto left = [&](double g) { return g > 0.0 ? std::exp(full(g) - ref) : (shape == 1.0 ? std::exp(smooth(0.0) - ref) : 0.0); };
    log_left = ref + std::log(finite_rule.integrate(left, 0.0, split, kTolerance));
  }
  return log_add(log_left, log_right);
}

}  // namespace gpdeg
