#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gpdeg/density.hpp"
#include "gpdeg/model_spec.hpp"
#include "gpdeg/process.hpp"

namespace gpdeg {

/// Value and gradient of the log posterior.
struct LogDensityEval {
  double value;
  std::vector<double> gradient;
};

/// The log posterior split into its additive pieces.
struct DensityTerms {
  double data = 0.0;      // Gaussian measurement terms
  double process = 0.0;   // gamma jump terms
  double prior = 0.0;     // parameter model, including hierarchical priors
  double jacobian = 0.0;  // log |d constrained / d unconstrained|

  double total() const { return data + process + prior + jacobian; }
};

/// One scalar model parameter (global, hyper or unit level).
struct ParamSlot {
  enum class Transform { Log, Logistic };

  std::string role;    // mu, nu, sigma, mu_mu, ...
  std::string name;    // column name, e.g. "mu" or "mu[3]"
  int unit = -1;       // unit index for unit-level slots
  bool pinned = false;
  double pinned_value = 0.0;
  Transform transform = Transform::Log;
  double lower = 0.0;  // Logistic bounds
  double upper = 0.0;
  std::size_t index = 0;  // position in the unconstrained vector when sampled
};

/// Constrained view of a parameter vector.
struct ConstrainedParams {
  std::vector<double> values;           // one per slot
  std::vector<std::vector<double>> dz;  // per unit latent jumps
  std::vector<std::vector<double>> z;   // per unit latent path
  double log_jacobian = 0.0;
};

/// Joint posterior of a noisy gamma degradation model over
///
///   [sampled slots in slot order | log dz_{1,1..I_1} | ... | log dz_{J,1..I_J}]
///
/// Slot order: hyper/global parameters (mu or mu_mu, sigma_mu; nu or mu_nu,
/// sigma_nu; sigma), then per-unit blocks (mu[j], nu[j], sigma[j] as the
/// pooling requires). Positive parameters use an exp transform, parameters
/// with a Uniform(a, b) prior a scaled logistic one; latent jumps are sampled
/// on the log scale. Pinned roles are excluded from the vector.
///
/// Output columns: every slot by name, then dz[j,i] and z[j,i] (1-based).
class Posterior final : public LogDensity {
 public:
  Posterior(ModelSpec spec, Dataset data);

  const ModelSpec& spec() const { return spec_; }
  const Dataset& data() const { return data_; }
  const std::vector<ParamSlot>& slots() const { return slots_; }

  std::size_t dimension() const override { return dim_; }
  std::size_t n_sampled_slots() const { return n_sampled_; }
  std::size_t jump_offset(std::size_t unit) const { return jump_offset_[unit]; }

  /// Index into slots() of the mu / nu / sigma governing a unit.
  std::size_t mu_slot(std::size_t unit) const { return unit_mu_[unit]; }
  std::size_t nu_slot(std::size_t unit) const { return unit_nu_[unit]; }
  std::size_t sigma_slot(std::size_t unit) const { return unit_sigma_[unit]; }

  ConstrainedParams constrain(std::span<const double> u) const;

  /// Inverse of constrain for slot values and jumps. Pinned slots are ignored.
  std::vector<double> unconstrain(const std::vector<double>& slot_values,
                                  const std::vector<std::vector<double>>& dz) const;

  DensityTerms terms(std::span<const double> u) const;

  /// Log posterior density in the constrained space (no Jacobian).
  double log_density_constrained(const std::vector<double>& slot_values,
                                 const std::vector<std::vector<double>>& dz) const;

  double log_density(std::span<const double> u) const override;
  double log_density_gradient(std::span<const double> u, std::span<double> grad) const override;
  LogDensityEval evaluate(std::span<const double> u) const;

  /// Starting point: latent jumps from an isotonic fit of the data, globals
  /// drawn from priors narrowed toward their centre by a factor 4. Throws
  /// SamplingError if no finite start is found in 100 attempts.
  std::vector<double> initial_point(Rng& rng) const override;

  std::vector<std::string> output_names() const override;
  void write_output(std::span<const double> u, std::span<double> out) const override;

  /// Latent jumps used for initialization (before any prior draws).
  std::vector<std::vector<double>> initial_jumps() const;

 private:
  double evaluate_impl(std::span<const double> u, double* grad, DensityTerms* terms) const;
  void check_length(std::size_t n) const;

  ModelSpec spec_;
  Dataset data_;
  std::vector<ParamSlot> slots_;
  std::vector<std::optional<DistSpec>> slot_prior_;  // empty for unit-level hierarchical slots
  std::vector<std::size_t> unit_mu_, unit_nu_, unit_sigma_;
  std::vector<std::vector<double>> dt_;
  std::vector<std::size_t> jump_offset_;
  int mu_mu_ = -1, sigma_mu_ = -1, mu_nu_ = -1, sigma_nu_ = -1;
  std::size_t n_sampled_ = 0;
  std::size_t dim_ = 0;
};

/// Nondecreasing least-squares fit to y (pool adjacent violators).
std::vector<double> isotonic_fit(const std::vector<double>& y);

}  // namespace gpdeg
