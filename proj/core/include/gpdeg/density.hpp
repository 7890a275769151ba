#pragma once

#include <span>
#include <string>
#include <vector>

#include "gpdeg/rng.hpp"

namespace gpdeg {

/// Target density on an unconstrained space, as seen by the sampler.
class LogDensity {
 public:
  virtual ~LogDensity() = default;

  virtual std::size_t dimension() const = 0;

  /// Log density up to a constant; may return -inf.
  virtual double log_density(std::span<const double> u) const = 0;

  /// Log density and its gradient (written to grad, same length as u).
  virtual double log_density_gradient(std::span<const double> u, std::span<double> grad) const = 0;

  /// Starting point for a chain.
  virtual std::vector<double> initial_point(Rng& rng) const = 0;

  /// Names of the constrained quantities written per draw.
  virtual std::vector<std::string> output_names() const = 0;

  /// Constrained quantities for u, in output_names() order.
  virtual void write_output(std::span<const double> u, std::span<double> out) const = 0;
};

}  // namespace gpdeg
