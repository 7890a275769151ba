#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gpdeg/density.hpp"

namespace gpdeg {

struct ModelSpec;
struct Dataset;

struct SamplerConfig {
  std::size_t n_chains = 4;
  std::size_t n_warmup = 1000;
  std::size_t n_samples = 1000;
  double target_accept = 0.8;
  int max_tree_depth = 10;
  std::uint64_t seed = 1;
  /// Worker threads for chains; 0 picks the hardware concurrency.
  std::size_t threads = 0;
  /// Multiplies the adapted step size for the sampling phase.
  double step_size_scale = 1.0;
  /// Energy error that marks a transition as divergent.
  double max_delta_energy = 1000.0;

  // Warmup schedule: initial fast interval, first slow window, final fast interval.
  std::size_t init_buffer = 75;
  std::size_t base_window = 25;
  std::size_t term_buffer = 50;

  /// Throws ConfigError naming each offending field.
  void validate() const;

  /// 4 chains of 10,000 iterations with 3,000 of them warmup.
  static SamplerConfig single_unit_default();
  /// 6 chains of 1,000 warmup + 1,000 sampling iterations.
  static SamplerConfig pooled_default();
};

/// Posterior draws in constrained space plus per-iteration sampler output.
/// Rows are ordered by (chain, iteration); warmup is not stored.
struct Draws {
  std::vector<std::string> names;
  std::size_t n_chains = 0;
  std::size_t n_per_chain = 0;
  std::vector<double> values;  // row-major, n_rows() x n_cols()

  std::vector<int> chain;
  std::vector<int> iteration;
  std::vector<std::uint8_t> divergent;
  std::vector<double> energy;
  std::vector<double> lp;
  std::vector<double> accept_stat;
  std::vector<int> tree_depth;
  std::vector<int> n_leapfrog;

  /// Per chain, after warmup.
  std::vector<double> step_size;
  std::vector<std::vector<double>> inv_metric;
  /// Messages for chains that could not be initialized or run; they are
  /// excluded from the rows above.
  std::vector<std::string> failed_chains;

  std::size_t n_rows() const { return chain.size(); }
  std::size_t n_cols() const { return names.size(); }
  double at(std::size_t row, std::size_t col) const { return values[row * names.size() + col]; }

  bool has(const std::string& name) const;
  /// Throws StructuralError for an unknown name.
  std::size_t column(const std::string& name) const;
  std::vector<double> column_values(std::size_t col) const;
  std::vector<double> column_values(const std::string& name) const;
  /// Values of one column split by chain.
  std::vector<std::vector<double>> by_chain(std::size_t col) const;
  std::size_t divergence_count() const;
};

/// Position, momentum and gradient of a Hamiltonian system with a diagonal
/// inverse metric.
struct PhasePoint {
  std::vector<double> q;
  std::vector<double> p;
  std::vector<double> grad;  // of the log density
  double lp = 0.0;
};

/// Log density at q with its gradient written to grad.
using GradientFn = std::function<double(std::span<const double> q, std::span<double> grad)>;

/// Kinetic plus potential energy.
double hamiltonian(const PhasePoint& z, std::span<const double> inv_metric);

/// One leapfrog step of size eps (negative integrates backwards). Returns false
/// when the resulting energy is not finite; the point is left in whatever state
/// the step reached.
bool leapfrog(PhasePoint& z, double eps, std::span<const double> inv_metric, const GradientFn& grad_fn);

/// No-U-turn sampler with dual-averaging step size and windowed diagonal
/// metric adaptation. Chains run in parallel on independent streams; results
/// do not depend on the thread count. Throws SamplingError if no chain could
/// be initialized.
Draws sample_nuts(const LogDensity& target, const SamplerConfig& config);

/// Builds the posterior for spec and data and samples it.
Draws run(const ModelSpec& spec, const Dataset& data, const SamplerConfig& config);

}  // namespace gpdeg
