#pragma once

// Special functions used by the degradation models. All functions are pure and
// re-entrant. Invalid arguments raise std::domain_error unless noted.

namespace gpdeg {

/// log Gamma(x) for x > 0.
double ln_gamma(double x);

/// Digamma function psi(x) = d/dx log Gamma(x), x > 0.
double digamma(double x);

/// Regularized lower incomplete gamma P(a, x) = gamma(a, x) / Gamma(a).
///
/// Series expansion for x < a + 1, continued fraction otherwise, and a uniform
/// asymptotic expansion once the shape is large enough that the other two need
/// O(sqrt(a)) terms.
double reg_lower_inc_gamma(double a, double x);

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x), computed without
/// cancellation in the upper tail.
double reg_upper_inc_gamma(double a, double x);

/// Regularized incomplete beta I_x(a, b).
double reg_inc_beta(double a, double b, double x);

/// Log density of Ga(shape, rate) at x. Returns -inf for x <= 0.
double gamma_logpdf(double x, double shape, double rate);

/// Gamma distribution function; equals reg_lower_inc_gamma(shape, rate * x).
double gamma_cdf(double x, double shape, double rate);

/// Gamma survival function 1 - gamma_cdf.
double gamma_ccdf(double x, double shape, double rate);

double normal_logpdf(double x, double mean, double sd);

/// Log density at x of G + e with G ~ Ga(shape, rate) and e ~ N(0, sigma)
/// independent, by numerical integration over G.
double normal_gamma_logpdf(double x, double shape, double rate, double sigma);

/// Standard normal distribution function.
double std_normal_cdf(double x);

/// log Phi(x), accurate far into the lower tail.
double log_std_normal_cdf(double x);

/// phi(x) / Phi(x).
double inv_mills_ratio(double x);

/// Distribution function of the standard Student t with df degrees of freedom.
double student_t_cdf(double x, double df);

}  // namespace gpdeg
