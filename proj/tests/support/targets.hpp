#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gpdeg/density.hpp"

namespace target {

// Zero-mean Gaussian with a dense precision matrix.
class Gaussian final : public gpdeg::LogDensity {
 public:
  explicit Gaussian(std::vector<std::vector<double>> precision) : prec_(std::move(precision)) {}
  static Gaussian standard(std::size_t d) {
    std::vector<std::vector<double>> p(d, std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < d; ++i) p[i][i] = 1.0;
    return Gaussian(std::move(p));
  }

  std::size_t dimension() const override { return prec_.size(); }
  double log_density(std::span<const double> u) const override {
    std::vector<double> g(u.size());
    return log_density_gradient(u, g);
  }
  double log_density_gradient(std::span<const double> u, std::span<double> grad) const override {
    double lp = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < u.size(); ++j) s += prec_[i][j] * u[j];
      grad[i] = -s;
      lp -= 0.5 * u[i] * s;
    }
    return lp;
  }
  std::vector<double> initial_point(gpdeg::Rng& rng) const override {
    std::vector<double> x(dimension());
    for (auto& v : x) v = rng.uniform(-2.0, 2.0);
    return x;
  }
  std::vector<std::string> output_names() const override {
    std::vector<std::string> n;
    for (std::size_t i = 0; i < dimension(); ++i) n.push_back("x[" + std::to_string(i + 1) + "]");
    return n;
  }
  void write_output(std::span<const double> u, std::span<double> out) const override {
    for (std::size_t i = 0; i < u.size(); ++i) out[i] = u[i];
  }

 private:
  std::vector<std::vector<double>> prec_;
};

// A density that never has a usable starting point.
class Hopeless final : public gpdeg::LogDensity {
 public:
  std::size_t dimension() const override { return 1; }
  double log_density(std::span<const double>) const override { return -INFINITY; }
  double log_density_gradient(std::span<const double>, std::span<double> g) const override {
    g[0] = 0.0;
    return -INFINITY;
  }
  std::vector<double> initial_point(gpdeg::Rng&) const override { return {0.0}; }
  std::vector<std::string> output_names() const override { return {"x"}; }
  void write_output(std::span<const double> u, std::span<double> out) const override { out[0] = u[0]; }
};

}  // namespace target
