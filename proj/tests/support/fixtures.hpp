#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "gpdeg/model.hpp"
#include "gpdeg/process.hpp"

namespace fixture {

// J units with random grids drawn from a crack-like generator.
inline gpdeg::Dataset small_dataset(std::uint64_t seed, std::size_t units = 3, std::size_t obs = 5) {
  gpdeg::StudyConfig cfg;
  cfg.name = "fixture";
  cfg.n_units = units;
  cfg.grid.kind = gpdeg::GridRecipe::Kind::RandomIncrements;
  cfg.grid.n_obs = obs;
  cfg.grid.increment_lower = 0.05;
  cfg.grid.increment_upper = 0.15;
  cfg.mu = gpdeg::DistSpec::normal_lb0(0.4, 0.07);
  cfg.nu = gpdeg::DistSpec::constant(0.21);
  cfg.sigma = 0.025;
  cfg.seed = seed;
  return gpdeg::simulate_study(cfg);
}

// Five-point central difference.
template <class F>
double derivative(F f, double x, double h) {
  return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h);
}

inline std::vector<double> numeric_gradient(const gpdeg::LogDensity& target, std::vector<double> u,
                                            double h = 1e-4) {
  std::vector<double> g(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double u0 = u[k];
    g[k] = derivative(
        [&](double v) {
          u[k] = v;
          return target.log_density(u);
        },
        u0, h);
    u[k] = u0;
  }
  return g;
}

// Largest |analytic - numeric| / max(1, |numeric|) over components.
inline double gradient_error(const gpdeg::LogDensity& target, const std::vector<double>& u) {
  std::vector<double> g(u.size());
  target.log_density_gradient(u, g);
  const auto fd = numeric_gradient(target, u);
  double worst = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    worst = std::max(worst, std::fabs(g[k] - fd[k]) / std::max(1.0, std::fabs(fd[k])));
  }
  return worst;
}

}  // namespace fixture
