#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gpdeg/dist.hpp"
#include "gpdeg/rng.hpp"

namespace gpdeg {

struct ModelSpec;

/// Observation times t_1 < ... < t_I of one unit. The origin t_0 = 0 is
/// implicit and not stored.
struct TimeGrid {
  std::vector<double> times;

  std::size_t size() const { return times.size(); }
  /// Delta t_i = t_i - t_{i-1}, with t_0 = 0.
  std::vector<double> increments() const;
  /// Throws DataError unless times are finite, positive and strictly increasing.
  void validate() const;

  static TimeGrid unit_spaced(std::size_t n, double step = 1.0);
};

/// Mean degradation per unit time and coefficient of variation of a
/// stationary gamma process. Jumps over dt are Ga(dt / nu^2, 1 / (mu nu^2)).
struct GpParams {
  double mu;
  double nu;

  double shape(double dt) const { return dt / (nu * nu); }
  double rate() const { return 1.0 / (mu * nu * nu); }
};

struct UnitSeries {
  std::string id;
  TimeGrid grid;
  std::vector<double> y;
  std::vector<double> z_true;  // empty unless simulated

  std::size_t size() const { return y.size(); }
};

struct Dataset {
  std::vector<UnitSeries> units;
  std::optional<double> z_f;

  std::size_t n_units() const { return units.size(); }
  std::size_t n_observations() const;
  /// Throws DataError describing the first inconsistency found.
  void validate() const;

  Dataset without_unit(std::size_t j) const;
  Dataset without_last_observation(std::size_t j) const;
};

/// Latent path z_1..z_I (z_0 = 0 omitted) built from gamma jumps.
std::vector<double> simulate_path(const TimeGrid& grid, const GpParams& gp, Rng& rng);

/// y = z + N(0, sigma) noise; sigma = 0 returns z unchanged.
std::vector<double> add_noise(const std::vector<double>& z, double sigma, Rng& rng);

/// How each unit's observation times are produced.
struct GridRecipe {
  enum class Kind { RandomIncrements, Fixed };
  Kind kind = Kind::Fixed;
  std::size_t n_obs = 0;              // RandomIncrements
  double increment_lower = 0.0;       // RandomIncrements: Delta t ~ Unif(lower, upper)
  double increment_upper = 0.0;
  std::vector<double> times;          // Fixed
};

/// Generator settings for a synthetic study. Per-unit mu and nu are drawn
/// from the given distributions; use DistSpec::constant for fixed values.
struct StudyConfig {
  std::string name;
  std::size_t n_units = 1;
  GridRecipe grid;
  DistSpec mu = DistSpec::constant(1.0);
  DistSpec nu = DistSpec::constant(1.0);
  double sigma = 0.0;
  std::optional<double> z_f;
  std::uint64_t seed = 0;
  bool shared_grid = false;  // draw one random grid for all units

  /// Throws ConfigError listing every offending field.
  void validate() const;
};

/// Reproducible dataset for the config; unit j draws from stream j of the seed.
Dataset simulate_study(const StudyConfig& config);

/// Ensemble of prior predictive paths on a single grid.
struct PriorEnsemble {
  TimeGrid grid;
  std::vector<std::string> param_names;
  std::vector<std::vector<double>> params;  // per draw
  std::vector<std::vector<double>> z;       // per draw latent path
  std::vector<std::vector<double>> y;       // per draw noisy path, empty unless requested
};

/// Draw parameters from the model priors and simulate one path per draw. For
/// hierarchical variants a unit-level mu and/or nu is drawn from its
/// hierarchy. Draw i uses stream i, so the ensemble is schedule independent.
PriorEnsemble prior_predictive(const ModelSpec& model, std::size_t n_draws, const TimeGrid& grid, Rng& rng,
                               bool include_noise = false);

/// Prior predictive under the shape/rate parameterization: jumps
/// Ga(shape * dt, rate) with shape and rate drawn from the given priors.
PriorEnsemble prior_predictive_shape_rate(const DistSpec& shape_prior, const DistSpec& rate_prior,
                                          std::size_t n_draws, const TimeGrid& grid, Rng& rng);

}  // namespace gpdeg
