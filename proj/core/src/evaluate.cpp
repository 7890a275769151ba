#include "gpdeg/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gpdeg/diagnostics.hpp"
#include "gpdeg/dist.hpp"
#include "gpdeg/errors.hpp"
#include "gpdeg/special.hpp"

namespace gpdeg {
namespace {

std::string indexed(const std::string& role, std::size_t j) { return role + "[" + std::to_string(j + 1) + "]"; }

std::string latent(std::size_t j, std::size_t i) {
  return "z[" + std::to_string(j + 1) + "," + std::to_string(i + 1) + "]";
}

// Column of a unit's parameter: the unit-level column where the model has
// one, the shared column otherwise.
std::size_t unit_column(const Draws& d, const std::string& role, std::size_t j) {
  const std::string own = indexed(role, j);
  return d.has(own) ? d.column(own) : d.column(role);
}

// Draws a (mu, nu) pair for an unseen unit from row r of the fit.
class NewUnitParams {
 public:
  NewUnitParams(const Draws& d, const ModelSpec& spec) : d_(d) {
    if (spec.pooling == Pooling::NoPooling)
      throw ConfigError("a model without pooling says nothing about a new unit");
    vary_mu_ = varies_mu(spec.pooling);
    vary_nu_ = varies_nu(spec.pooling);
    if (vary_mu_) {
      mu_a_ = d.column("mu_mu");
      mu_b_ = d.column("sigma_mu");
    } else {
      mu_a_ = d.column("mu");
    }
    if (vary_nu_) {
      nu_a_ = d.column("mu_nu");
      nu_b_ = d.column("sigma_nu");
    } else {
      nu_a_ = d.column("nu");
    }
    sigma_ = d.column("sigma");
  }

  GpParams draw(std::size_t r, Rng& rng) const {
    GpParams gp;
    gp.mu = vary_mu_ ? sample_normal_lb0(d_.at(r, mu_a_), d_.at(r, mu_b_), rng) : d_.at(r, mu_a_);
    gp.nu = vary_nu_ ? sample_normal_lb0(d_.at(r, nu_a_), d_.at(r, nu_b_), rng) : d_.at(r, nu_a_);
    return gp;
  }

  // Location of the population mean rate, used to size lattices.
  double typical_mu(std::size_t r) const { return d_.at(r, mu_a_); }
  double sigma(std::size_t r) const { return d_.at(r, sigma_); }

 private:
  const Draws& d_;
  bool vary_mu_ = false, vary_nu_ = false;
  std::size_t mu_a_ = 0, mu_b_ = 0, nu_a_ = 0, nu_b_ = 0, sigma_ = 0;
};

void check_cv_data(const ModelSpec& spec, const Dataset& data) {
  validate(spec);
  data.validate();
  for (const auto& u : data.units)
    if (u.size() < kMinCvObservations)
      throw DataError("unit " + u.id + " has " + std::to_string(u.size()) + " observations; cross validation needs " +
                      std::to_string(kMinCvObservations) + " per unit");
}

// Folds are keyed by unit id (FNV-1a) so that reordering units does not
// reshuffle their random streams.
std::uint64_t id_key(const std::string& id) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : id) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

SamplerConfig fold_config(const SamplerConfig& base, const std::string& id) {
  SamplerConfig c = base;
  c.seed = Rng(base.seed, 0xCF).split(id_key(id)).next();
  return c;
}

Rng fold_rng(const SamplerConfig& base, const std::string& id) { return Rng(base.seed, 0x5EED).split(id_key(id)); }

std::vector<std::vector<double>> bands_of(const std::vector<std::vector<double>>& draws, std::size_t n_times,
                                          const std::vector<double>& levels) {
  std::vector<std::vector<double>> bands(levels.size(), std::vector<double>(n_times));
  std::vector<double> col(draws.size());
  for (std::size_t t = 0; t < n_times; ++t) {
    for (std::size_t s = 0; s < draws.size(); ++s) col[s] = draws[s][t];
    std::sort(col.begin(), col.end());
    for (std::size_t k = 0; k < levels.size(); ++k) bands[k][t] = quantile_sorted(col, levels[k]);
  }
  return bands;
}

void check_lattice(const std::vector<double>& times, double z_f) {
  if (!(z_f > 0.0)) throw ConfigError("failure threshold must be positive");
  if (times.empty()) throw ConfigError("failure time lattice is empty");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(times[i] >= 0.0) || !std::isfinite(times[i])) throw ConfigError("failure time lattice must be finite and >= 0");
    if (i > 0 && !(times[i] > times[i - 1])) throw ConfigError("failure time lattice must be increasing");
  }
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return out;
}

}  // namespace

std::vector<double> default_quantile_levels() { return band_levels({0.5, 0.8, 0.95}); }

std::vector<double> band_levels(const std::vector<double>& coverages) {
  std::vector<double> levels{0.5};
  for (double c : coverages) {
    if (!(c > 0.0 && c < 1.0)) throw ConfigError("band coverage must lie in (0, 1)");
    // rounded so that 0.5 - 0.95 / 2 prints as 0.025
    levels.push_back(std::round((0.5 - c / 2) * 1e12) / 1e12);
    levels.push_back(std::round((0.5 + c / 2) * 1e12) / 1e12);
  }
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  return levels;
}

const std::vector<double>& FilteredPathSummary::median(std::size_t unit) const {
  std::size_t best = 0;
  for (std::size_t k = 1; k < levels.size(); ++k)
    if (std::fabs(levels[k] - 0.5) < std::fabs(levels[best] - 0.5)) best = k;
  return units.at(unit).quantiles.at(best);
}

FilteredPathSummary filtered_paths(const Draws& draws, const Dataset& data, const std::vector<double>& levels) {
  FilteredPathSummary out;
  out.levels = levels;
  std::sort(out.levels.begin(), out.levels.end());
  for (std::size_t j = 0; j < data.n_units(); ++j) {
    const auto& u = data.units[j];
    FilteredPathSummary::Unit s;
    s.id = u.id;
    s.times = u.grid.times;
    s.quantiles.assign(out.levels.size(), std::vector<double>(u.size()));
    for (std::size_t i = 0; i < u.size(); ++i) {
      std::vector<double> col = draws.column_values(latent(j, i));
      std::sort(col.begin(), col.end());
      for (std::size_t k = 0; k < out.levels.size(); ++k) s.quantiles[k][i] = quantile_sorted(col, out.levels[k]);
    }
    out.units.push_back(std::move(s));
  }
  return out;
}

std::string to_string(CvMethod method) { return method == CvMethod::LeaveOneUnitOut ? "louo" : "sa"; }

CvMethod cv_method_from_string(const std::string& name) {
  if (name == "louo") return CvMethod::LeaveOneUnitOut;
  if (name == "sa") return CvMethod::StepAhead;
  throw ConfigError("unknown cross-validation method '" + name + "' (expected louo or sa)");
}

double CvFold::total() const {
  double s = 0.0;
  for (double c : contributions) s += c;
  return s;
}

double log_mean_exp(const std::vector<double>& terms) {
  if (terms.empty()) throw StructuralError("log_mean_exp: no terms");
  double top = -std::numeric_limits<double>::infinity();
  for (double t : terms) top = std::max(top, t);
  if (!std::isfinite(top)) return top;
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - top);
  return top + std::log(acc) - std::log(static_cast<double>(terms.size()));
}

namespace {

// Density of y = offset + G + e with G the gamma increment over dt.
double increment_logpdf(double y, double offset, double dt, const GpParams& gp, double sigma) {
  if (dt == 0.0) return normal_logpdf(y, offset, sigma);
  return normal_gamma_logpdf(y - offset, gp.shape(dt), gp.rate(), sigma);
}

}  // namespace

std::vector<double> louo_contributions(const Draws& fit, const ModelSpec& spec, const UnitSeries& withheld,
                                       Rng& rng) {
  const NewUnitParams params(fit, spec);
  const std::size_t n_draws = fit.n_rows();
  const std::size_t n_obs = withheld.size();
  if (n_draws == 0) throw StructuralError("louo_contributions: no draws");
  std::vector<std::vector<double>> terms(n_obs, std::vector<double>(n_draws));
  for (std::size_t s = 0; s < n_draws; ++s) {
    const GpParams gp = params.draw(s, rng);
    const double sigma = params.sigma(s);
    for (std::size_t i = 0; i < n_obs; ++i)
      terms[i][s] = increment_logpdf(withheld.y[i], 0.0, withheld.grid.times[i], gp, sigma);
  }
  std::vector<double> out(n_obs);
  for (std::size_t i = 0; i < n_obs; ++i) out[i] = log_mean_exp(terms[i]);
  return out;
}

double sa_contribution(const Draws& fit, const ModelSpec& spec, const Dataset& fitted, std::size_t unit, double t,
                       double y) {
  (void)spec;
  const auto& u = fitted.units.at(unit);
  if (u.size() == 0) throw DataError("step-ahead prediction needs at least one fitted observation");
  if (fit.n_rows() == 0) throw StructuralError("sa_contribution: no draws");
  const double dt = t - u.grid.times.back();
  if (!(dt >= 0.0)) throw DataError("withheld observation precedes the fitted ones");
  const std::size_t mu_c = unit_column(fit, "mu", unit);
  const std::size_t nu_c = unit_column(fit, "nu", unit);
  const std::size_t sigma_c = unit_column(fit, "sigma", unit);
  const std::size_t z_c = fit.column(latent(unit, u.size() - 1));
  std::vector<double> terms(fit.n_rows());
  for (std::size_t s = 0; s < fit.n_rows(); ++s) {
    const GpParams gp{fit.at(s, mu_c), fit.at(s, nu_c)};
    terms[s] = increment_logpdf(y, fit.at(s, z_c), dt, gp, fit.at(s, sigma_c));
  }
  return log_mean_exp(terms);
}

ElppdResult elppd_louo(const ModelSpec& spec, const Dataset& data, const SamplerConfig& config) {
  check_cv_data(spec, data);
  if (spec.pooling == Pooling::NoPooling)
    throw ConfigError("leave-one-unit-out needs a pooled model; " + spec.name + " has no pooling");
  if (data.n_units() < 2) throw DataError("leave-one-unit-out needs at least two units");
  config.validate();

  ElppdResult result;
  result.method = CvMethod::LeaveOneUnitOut;
  result.model_name = spec.name;
  for (std::size_t j = 0; j < data.n_units(); ++j) {
    CvFold fold;
    fold.unit_id = data.units[j].id;
    try {
      const Draws d = run(spec, data.without_unit(j), fold_config(config, fold.unit_id));
      Rng rng = fold_rng(config, fold.unit_id);
      fold.contributions = louo_contributions(d, spec, data.units[j], rng);
      fold.n_draws = d.n_rows();
      fold.divergences = d.divergence_count();
      fold.ok = std::all_of(fold.contributions.begin(), fold.contributions.end(),
                            [](double c) { return std::isfinite(c); });
      if (!fold.ok) fold.error = "non-finite predictive density";
    } catch (const std::exception& e) {
      fold.error = e.what();
    }
    ++result.n_refits;
    result.folds.push_back(std::move(fold));
  }
  if (std::all_of(result.folds.begin(), result.folds.end(), [](const CvFold& f) { return f.ok; })) {
    double total = 0.0;
    for (const auto& f : result.folds) total += f.total();
    result.total = total;
  }
  return result;
}

ElppdResult elppd_sa(const ModelSpec& spec, const Dataset& data, const SamplerConfig& config) {
  check_cv_data(spec, data);
  config.validate();

  ElppdResult result;
  result.method = CvMethod::StepAhead;
  result.model_name = spec.name;
  for (std::size_t j = 0; j < data.n_units(); ++j) {
    CvFold fold;
    const auto& u = data.units[j];
    fold.unit_id = u.id;
    try {
      const Dataset reduced = data.without_last_observation(j);
      const Draws d = run(spec, reduced, fold_config(config, fold.unit_id));
      fold.contributions = {sa_contribution(d, spec, reduced, j, u.grid.times.back(), u.y.back())};
      fold.n_draws = d.n_rows();
      fold.divergences = d.divergence_count();
      fold.ok = std::isfinite(fold.contributions[0]);
      if (!fold.ok) fold.error = "non-finite predictive density";
    } catch (const std::exception& e) {
      fold.error = e.what();
    }
    ++result.n_refits;
    result.folds.push_back(std::move(fold));
  }
  if (std::all_of(result.folds.begin(), result.folds.end(), [](const CvFold& f) { return f.ok; })) {
    double total = 0.0;
    for (const auto& f : result.folds) total += f.total();
    result.total = total;
  }
  return result;
}

ElppdResult elppd(CvMethod method, const ModelSpec& spec, const Dataset& data, const SamplerConfig& config) {
  return method == CvMethod::LeaveOneUnitOut ? elppd_louo(spec, data, config) : elppd_sa(spec, data, config);
}

double FailureCurve::mean_width(double lower_level, double upper_level) const {
  auto row = [&](double level) -> const std::vector<double>& {
    for (std::size_t k = 0; k < levels.size(); ++k)
      if (std::fabs(levels[k] - level) < 1e-12) return bands[k];
    throw StructuralError("failure curve has no quantile level " + std::to_string(level));
  };
  const auto& lo = row(lower_level);
  const auto& hi = row(upper_level);
  double s = 0.0;
  for (std::size_t t = 0; t < times.size(); ++t) s += hi[t] - lo[t];
  return s / static_cast<double>(times.size());
}

double failure_probability(double t, double z_f, double mu, double nu, double t0, double z0) {
  if (t < t0) return 0.0;
  if (z0 >= z_f) return 1.0;
  if (t == t0) return 0.0;
  const GpParams gp{mu, nu};
  return reg_upper_inc_gamma(gp.shape(t - t0), gp.rate() * (z_f - z0));
}

FailureCurve failure_curve(const Draws& draws, const ModelSpec& spec, double z_f, const std::vector<double>& times,
                           Rng& rng, const std::vector<double>& levels) {
  check_lattice(times, z_f);
  const NewUnitParams params(draws, spec);
  FailureCurve c;
  c.mode = FailureCurve::Mode::NewUnit;
  c.z_f = z_f;
  c.times = times;
  c.levels = levels;
  std::sort(c.levels.begin(), c.levels.end());
  c.draws.resize(draws.n_rows(), std::vector<double>(times.size()));
  for (std::size_t s = 0; s < draws.n_rows(); ++s) {
    const GpParams gp = params.draw(s, rng);
    for (std::size_t t = 0; t < times.size(); ++t) c.draws[s][t] = failure_probability(times[t], z_f, gp.mu, gp.nu);
  }
  c.bands = bands_of(c.draws, times.size(), c.levels);
  return c;
}

FailureCurve predictive_failure_curve(const Draws& draws, const ModelSpec& spec, const Dataset& data,
                                      std::size_t unit, double z_f, const std::vector<double>& times,
                                      const std::vector<double>& levels) {
  (void)spec;
  check_lattice(times, z_f);
  if (unit >= data.n_units()) throw DataError("no unit with index " + std::to_string(unit + 1));
  const auto& u = data.units[unit];
  const std::size_t mu_c = unit_column(draws, "mu", unit);
  const std::size_t nu_c = unit_column(draws, "nu", unit);
  const std::size_t z_c = draws.column(latent(unit, u.size() - 1));

  FailureCurve c;
  c.mode = FailureCurve::Mode::InTestUnit;
  c.unit_id = u.id;
  c.z_f = z_f;
  c.t_start = u.grid.times.back();
  c.times = times;
  c.levels = levels;
  std::sort(c.levels.begin(), c.levels.end());
  c.draws.resize(draws.n_rows(), std::vector<double>(times.size()));
  for (std::size_t s = 0; s < draws.n_rows(); ++s) {
    const double mu = draws.at(s, mu_c), nu = draws.at(s, nu_c), z0 = draws.at(s, z_c);
    for (std::size_t t = 0; t < times.size(); ++t)
      c.draws[s][t] = failure_probability(times[t], z_f, mu, nu, c.t_start, z0);
  }
  c.bands = bands_of(c.draws, times.size(), c.levels);
  return c;
}

std::vector<double> default_failure_lattice(const Draws& draws, const ModelSpec& spec, double z_f,
                                            std::optional<std::size_t> in_test_unit, const Dataset* data,
                                            std::size_t n) {
  if (!(z_f > 0.0)) throw ConfigError("failure threshold must be positive");
  if (n < 2) throw ConfigError("failure time lattice needs at least two points");
  std::vector<double> crossing(draws.n_rows());
  double start = 0.0;
  if (in_test_unit) {
    if (data == nullptr || *in_test_unit >= data->n_units()) throw DataError("in-test unit is not in the data");
    const auto& u = data->units[*in_test_unit];
    start = u.grid.times.back();
    const std::size_t mu_c = unit_column(draws, "mu", *in_test_unit);
    const std::size_t z_c = draws.column(latent(*in_test_unit, u.size() - 1));
    for (std::size_t s = 0; s < draws.n_rows(); ++s)
      crossing[s] = std::max(0.0, z_f - draws.at(s, z_c)) / draws.at(s, mu_c);
  } else {
    const NewUnitParams params(draws, spec);
    for (std::size_t s = 0; s < draws.n_rows(); ++s) crossing[s] = z_f / params.typical_mu(s);
  }
  double span = 1.5 * quantile(crossing, 0.5);
  if (!(span > 0.0) || !std::isfinite(span)) span = start > 0.0 ? 0.5 * start : 1.0;
  return linspace(start, start + span, n);
}

}  // namespace gpdeg
