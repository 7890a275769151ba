#include "gpdeg/special.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace gpdeg {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEulerGamma = 0.57721566490153286060651209008240243;
constexpr double kHalfLog2Pi = 0.91893853320467274178032973640561764;
constexpr double kInvSqrt2 = 0.70710678118654752440084436210484904;
constexpr double kIncGammaTol = 1e-14;
constexpr int kMaxIter = 200000;
// Above this shape the series/continued fraction need O(sqrt(a)) terms; the
// uniform expansion is accurate to ~1e-13 there.
constexpr double kUniformExpansionShape = 1e4;

[[noreturn]] void domain_fail(const char* fn, const std::string& what) {
  throw std::domain_error(std::string(fn) + ": " + what);
}

// zeta(k) - 1 for k = 0..kZetaTerms-1 (entries 0 and 1 unused), by
// Euler-Maclaurin summation with N = 10 in extended precision.
constexpr int kZetaTerms = 48;

std::array<double, kZetaTerms> make_zeta_minus_one() {
  // B_{2j} / (2j)!
  constexpr std::array<long double, 8> kB2jOverFact = {
      1.0L / 12.0L,          -1.0L / 720.0L,          1.0L / 30240.0L,
      -1.0L / 1209600.0L,    1.0L / 47900160.0L,      -691.0L / 1307674368000.0L,
      1.0L / 74724249600.0L, -3617.0L / 10670622842880000.0L};
  std::array<double, kZetaTerms> out{};
  constexpr int n_cut = 10;
  for (int k = 2; k < kZetaTerms; ++k) {
    long double sum = 0.0L;
    for (int n = 2; n < n_cut; ++n) sum += std::pow(static_cast<long double>(n), -k);
    const long double nn = n_cut;
    sum += std::pow(nn, 1 - k) / (k - 1) + std::pow(nn, -k) / 2;
    long double rising = k;  // (k)_{2j-1}
    for (std::size_t j = 0; j < kB2jOverFact.size(); ++j) {
      const int m = 2 * static_cast<int>(j) + 1;
      sum += kB2jOverFact[j] * rising * std::pow(nn, -k - m);
      rising *= static_cast<long double>(k + m) * (k + m + 1);
    }
    out[k] = static_cast<double>(sum);
  }
  return out;
}

const std::array<double, kZetaTerms>& zeta_minus_one() {
  static const auto table = make_zeta_minus_one();
  return table;
}

// sum_{k>=2} (-1)^k (zeta(k) - 1) z^k / k, |z| <= 0.5
double zeta_tail_series(double z) {
  const auto& zm1 = zeta_minus_one();
  double sum = 0.0;
  double pw = -z;
  for (int k = 2; k < kZetaTerms; ++k) {
    pw *= -z;
    sum += zm1[k] * pw / k;
  }
  return sum;
}

// log Gamma(1 + z) for |z| <= 0.5.
double ln_gamma_1p(double z) { return -std::log1p(z) + z * (1.0 - kEulerGamma) + zeta_tail_series(z); }

// log Gamma(2 + z) for |z| <= 0.5.
double ln_gamma_2p(double z) { return z * (1.0 - kEulerGamma) + zeta_tail_series(z); }

double ln_gamma_stirling(double x) {
  constexpr std::array<double, 9> kCoef = {
      1.0 / 12.0,        -1.0 / 360.0,           1.0 / 1260.0,
      -1.0 / 1680.0,     1.0 / 1188.0,           -691.0 / 360360.0,
      1.0 / 156.0,       -3617.0 / 122400.0,     43867.0 / 244188.0};
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  double series = 0.0;
  double pw = inv;
  for (double c : kCoef) {
    series += c * pw;
    pw *= inv2;
  }
  return (x - 0.5) * std::log(x) - x + kHalfLog2Pi + series;
}

double polynomial(const double* coef, int n, double x) {
  double acc = 0.0;
  for (int i = n - 1; i >= 0; --i) acc = acc * x + coef[i];
  return acc;
}

// Taylor coefficients in eta of the first two terms of the uniform expansion.
constexpr double kTemmeC0[] = {
    -3.3333333333333333e-01, 8.3333333333333333e-02,  -1.4814814814814815e-02,
    1.1574074074074074e-03,  3.5273368606701940e-04,  -1.7875514403292181e-04,
    3.9192631785224378e-05,  -2.1854485106799922e-06, -1.8540622107151600e-06,
    8.2967113409530870e-07,  -1.7665952736826078e-07, 6.7078535434014980e-09,
    1.0261809784240309e-08,  -4.3820360184533530e-09, 9.1476995822367900e-10};
constexpr double kTemmeC1[] = {
    -1.8518518518518519e-03, -3.4722222222222222e-03, 2.6455026455026455e-03,
    -9.9022633744855967e-04, 2.0576131687242798e-04,  -4.0187757201646090e-07,
    -1.8098550334489977e-05, 7.6491609160811100e-06,  -1.6120900894563446e-06,
    4.6471278028074340e-09,  1.3786334469157210e-07,  -5.7525456035177050e-08,
    1.1951628599778148e-08};

// lambda - 1 - log(lambda) with w = lambda - 1.
double half_eta_squared(double w) {
  if (std::abs(w) >= 0.1) return w - std::log1p(w);
  double sum = 0.0;
  double pw = -w;
  for (int n = 2; n < 40; ++n) {
    pw *= -w;
    sum += pw / n;
  }
  return sum;
}

struct UniformExpansion {
  double lower;
  double upper;
};

UniformExpansion inc_gamma_uniform(double a, double x) {
  const double w = (x - a) / a;
  const double heta2 = half_eta_squared(w);
  const double eta = std::copysign(std::sqrt(2.0 * heta2), w);
  const double arg = eta * std::sqrt(0.5 * a);
  double lower = 0.5 * std::erfc(-arg);
  double upper = 0.5 * std::erfc(arg);
  if (std::abs(eta) <= 0.3) {
    const double c0 = polynomial(kTemmeC0, static_cast<int>(std::size(kTemmeC0)), eta);
    const double c1 = polynomial(kTemmeC1, static_cast<int>(std::size(kTemmeC1)), eta);
    const double c2 = 4.1335978835978836e-3 - 2.6813271604938272e-3 * eta;
    const double r = std::exp(-a * heta2) / std::sqrt(2.0 * std::numbers::pi * a) *
                     (c0 + (c1 + c2 / a) / a);
    lower -= r;
    upper += r;
  }
  // |eta| > 0.3 with a >= 1e4 leaves a correction below exp(-450).
  return {std::clamp(lower, 0.0, 1.0), std::clamp(upper, 0.0, 1.0)};
}

// log(x^a e^-x / Gamma(a))
double inc_gamma_prefactor_log(double a, double x) { return a * std::log(x) - x - ln_gamma(a); }

double inc_gamma_series(double a, double x) {
  double ap = a;
  double del = 1.0 / a;
  double sum = del;
  for (int n = 0; n < kMaxIter; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * kIncGammaTol) {
      return sum * std::exp(inc_gamma_prefactor_log(a, x));
    }
  }
  throw std::runtime_error("reg_lower_inc_gamma: series did not converge");
}

// Q(a, x) by Lentz's continued fraction, valid for x >= a + 1.
double inc_gamma_continued_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxIter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kIncGammaTol) return std::exp(inc_gamma_prefactor_log(a, x)) * h;
  }
  throw std::runtime_error("reg_upper_inc_gamma: continued fraction did not converge");
}

void check_inc_gamma_args(const char* fn, double a, double x) {
  if (!(a > 0.0) || !std::isfinite(a)) domain_fail(fn, "shape must be positive and finite");
  if (!(x >= 0.0)) domain_fail(fn, "argument must be non-negative");
}

double beta_continued_fraction(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m < kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kIncGammaTol) return h;
  }
  throw std::runtime_error("reg_inc_beta: continued fraction did not converge");
}

}  // namespace

double ln_gamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) domain_fail("ln_gamma", "argument must be positive and finite");
  if (x < 0.5) return ln_gamma_1p(x) - std::log(x);
  if (x < 1.5) return ln_gamma_1p(x - 1.0);
  if (x < 2.5) return ln_gamma_2p(x - 2.0);
  if (x < 13.0) {
    const double n = std::floor(x - 1.5);
    double prod = 1.0;
    double y = x;
    for (int k = 0; k < static_cast<int>(n); ++k) {
      y -= 1.0;
      prod *= y;
    }
    return std::log(prod) + ln_gamma_2p(y - 2.0);
  }
  return ln_gamma_stirling(x);
}

double digamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) domain_fail("digamma", "argument must be positive and finite");
  double shift = 0.0;
  while (x < 10.0) {
    shift -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double series =
      inv2 * (1.0 / 12.0 -
              inv2 * (1.0 / 120.0 -
                      inv2 * (1.0 / 252.0 -
                              inv2 * (1.0 / 240.0 -
                                      inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
  return shift + std::log(x) - 0.5 * inv - series;
}

double reg_lower_inc_gamma(double a, double x) {
  check_inc_gamma_args("reg_lower_inc_gamma", a, x);
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  if (a >= kUniformExpansionShape) return inc_gamma_uniform(a, x).lower;
  if (x < a + 1.0) return std::min(1.0, inc_gamma_series(a, x));
  return std::clamp(1.0 - inc_gamma_continued_fraction(a, x), 0.0, 1.0);
}

double reg_upper_inc_gamma(double a, double x) {
  check_inc_gamma_args("reg_upper_inc_gamma", a, x);
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  if (a >= kUniformExpansionShape) return inc_gamma_uniform(a, x).upper;
  if (x < a + 1.0) return std::clamp(1.0 - inc_gamma_series(a, x), 0.0, 1.0);
  return std::min(1.0, inc_gamma_continued_fraction(a, x));
}

double reg_inc_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b))
    domain_fail("reg_inc_beta", "shape parameters must be positive and finite");
  if (!(x >= 0.0 && x <= 1.0)) domain_fail("reg_inc_beta", "argument must lie in [0, 1]");
  if (x == 0.0 || x == 1.0) return x;
  const double log_front =
      ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double gamma_logpdf(double x, double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0) || !std::isfinite(shape) || !std::isfinite(rate))
    domain_fail("gamma_logpdf", "shape and rate must be positive and finite");
  if (std::isnan(x)) domain_fail("gamma_logpdf", "argument is NaN");
  if (x <= 0.0 || std::isinf(x)) return -kInf;
  return shape * std::log(rate) - ln_gamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

double gamma_cdf(double x, double shape, double rate) {
  if (!(rate > 0.0) || !std::isfinite(rate)) domain_fail("gamma_cdf", "rate must be positive and finite");
  if (!(x >= 0.0)) domain_fail("gamma_cdf", "argument must be non-negative");
  return reg_lower_inc_gamma(shape, rate * x);
}

double gamma_ccdf(double x, double shape, double rate) {
  if (!(rate > 0.0) || !std::isfinite(rate)) domain_fail("gamma_ccdf", "rate must be positive and finite");
  if (!(x >= 0.0)) domain_fail("gamma_ccdf", "argument must be non-negative");
  return reg_upper_inc_gamma(shape, rate * x);
}

double normal_logpdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - kHalfLog2Pi;
}

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

double log_std_normal_cdf(double x) {
  if (x > 0.0) return std::log1p(-0.5 * std::erfc(x * kInvSqrt2));
  if (x > -30.0) return std::log(0.5 * std::erfc(-x * kInvSqrt2));
  const double inv2 = 1.0 / (x * x);
  const double tail = 1.0 - inv2 * (1.0 - inv2 * (3.0 - inv2 * (15.0 - inv2 * 105.0)));
  return -0.5 * x * x - kHalfLog2Pi - std::log(-x) + std::log(tail);
}

double inv_mills_ratio(double x) { return std::exp(-0.5 * x * x - kHalfLog2Pi - log_std_normal_cdf(x)); }

double student_t_cdf(double x, double df) {
  if (!(df > 0.0)) domain_fail("student_t_cdf", "degrees of freedom must be positive");
  if (std::isnan(x)) domain_fail("student_t_cdf", "argument is NaN");
  if (x == 0.0) return 0.5;
  if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
  const double tail = 0.5 * reg_inc_beta(0.5 * df, 0.5, df / (df + x * x));
  return x > 0.0 ? 1.0 - tail : tail;
}

}  // namespace gpdeg
