#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gpdeg/model_spec.hpp"
#include "gpdeg/process.hpp"
#include "gpdeg/sampler.hpp"

namespace gpdeg {

/// 0.025, 0.1, 0.25, 0.5, 0.75, 0.9, 0.975: the median and central 50/80/95% bands.
std::vector<double> default_quantile_levels();

/// Quantile levels for the median plus the given central coverages.
std::vector<double> band_levels(const std::vector<double>& coverages);

/// Quantiles of the latent path of every unit.
struct FilteredPathSummary {
  struct Unit {
    std::string id;
    std::vector<double> times;
    std::vector<std::vector<double>> quantiles;  // [level][time]
  };
  std::vector<double> levels;
  std::vector<Unit> units;

  /// Row of quantiles closest to level 0.5.
  const std::vector<double>& median(std::size_t unit) const;
};

/// Throws StructuralError if the draws lack a latent column for the data.
FilteredPathSummary filtered_paths(const Draws& draws, const Dataset& data,
                                   const std::vector<double>& levels = default_quantile_levels());

enum class CvMethod { LeaveOneUnitOut, StepAhead };
std::string to_string(CvMethod method);
/// Accepts "louo" and "sa"; throws ConfigError otherwise.
CvMethod cv_method_from_string(const std::string& name);

struct CvFold {
  std::string unit_id;
  bool ok = false;
  std::string error;
  std::vector<double> contributions;  // one per withheld observation
  std::size_t n_draws = 0;
  std::size_t divergences = 0;

  double total() const;
};

struct ElppdResult {
  CvMethod method = CvMethod::LeaveOneUnitOut;
  std::string model_name;
  std::vector<CvFold> folds;
  /// Sum over folds; empty when any fold failed.
  std::optional<double> total;
  std::size_t n_refits = 0;
};

/// log( mean_s exp(terms[s]) ), evaluated stably.
double log_mean_exp(const std::vector<double>& terms);

/// Per-observation predictive contributions for a unit that took no part in
/// the fit. Unit parameters are drawn once per posterior draw from the fitted
/// population where they vary; the latent level at each time is then
/// integrated out exactly against the observation noise.
std::vector<double> louo_contributions(const Draws& fit, const ModelSpec& spec, const UnitSeries& withheld, Rng& rng);

/// Predictive contribution of a withheld final observation (time t, value y)
/// of unit j, given a fit to data ending at the unit's previous observation.
/// The gamma increment is integrated out exactly for each draw.
double sa_contribution(const Draws& fit, const ModelSpec& spec, const Dataset& fitted, std::size_t unit, double t,
                       double y);

/// Leave-one-unit-out cross validation: J refits. NoPooling is rejected
/// since it carries nothing over to a new unit.
ElppdResult elppd_louo(const ModelSpec& spec, const Dataset& data, const SamplerConfig& config);

/// Step-ahead cross validation: J refits, each without one unit's last
/// observation.
ElppdResult elppd_sa(const ModelSpec& spec, const Dataset& data, const SamplerConfig& config);

ElppdResult elppd(CvMethod method, const ModelSpec& spec, const Dataset& data, const SamplerConfig& config);

/// Units need this many observations for the unadjusted CV estimate.
inline constexpr std::size_t kMinCvObservations = 10;

struct FailureCurve {
  enum class Mode { NewUnit, InTestUnit };

  Mode mode = Mode::NewUnit;
  std::string unit_id;  // in-test mode only
  double z_f = 0.0;
  double t_start = 0.0;  // last observation time of the in-test unit
  std::vector<double> times;
  std::vector<double> levels;
  std::vector<std::vector<double>> bands;  // [level][time]
  std::vector<std::vector<double>> draws;  // [draw][time]

  /// Mean over the lattice of the distance between two quantile rows.
  double mean_width(double lower_level, double upper_level) const;
};

/// Probability that a gamma process with mean rate mu and coefficient of
/// variation nu, started at level z0 at time t0, exceeds z_f by time t.
/// Zero before t0. From t0 on it is one when z0 >= z_f (already failed);
/// otherwise zero at t0 itself.
double failure_probability(double t, double z_f, double mu, double nu, double t0 = 0.0, double z0 = 0.0);

/// Failure-time distribution of a new unit. Where the model lets mu or nu
/// vary, each draw first samples the unit value from its fitted population.
FailureCurve failure_curve(const Draws& draws, const ModelSpec& spec, double z_f, const std::vector<double>& times,
                           Rng& rng, const std::vector<double>& levels = default_quantile_levels());

/// Failure-time distribution of unit j, conditional on its filtered level at
/// its last observation time.
FailureCurve predictive_failure_curve(const Draws& draws, const ModelSpec& spec, const Dataset& data,
                                      std::size_t unit, double z_f, const std::vector<double>& times,
                                      const std::vector<double>& levels = default_quantile_levels());

/// n points from 0 to 1.5 times the posterior median of the mean-path crossing
/// time (z_f / mu for a new unit; t_I + (z_f - z_I) / mu_j in test).
std::vector<double> default_failure_lattice(const Draws& draws, const ModelSpec& spec, double z_f,
                                            std::optional<std::size_t> in_test_unit = std::nullopt,
                                            const Dataset* data = nullptr, std::size_t n = 200);

}  // namespace gpdeg
