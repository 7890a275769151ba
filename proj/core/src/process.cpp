#include "gpdeg/process.hpp"

#include <cmath>
#include <sstream>

#include "gpdeg/errors.hpp"
#include "gpdeg/model_spec.hpp"

namespace gpdeg {

std::vector<double> TimeGrid::increments() const {
  std::vector<double> out(times.size());
  double prev = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    out[i] = times[i] - prev;
    prev = times[i];
  }
  return out;
}

void TimeGrid::validate() const {
  if (times.empty()) throw DataError("time grid is empty");
  double prev = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!std::isfinite(times[i])) throw DataError("time grid: non-finite time at index " + std::to_string(i));
    if (!(times[i] > prev))
      throw DataError("time grid: times must be positive and strictly increasing (index " + std::to_string(i) + ")");
    prev = times[i];
  }
}

TimeGrid TimeGrid::unit_spaced(std::size_t n, double step) {
  TimeGrid g;
  g.times.resize(n);
  for (std::size_t i = 0; i < n; ++i) g.times[i] = step * static_cast<double>(i + 1);
  return g;
}

std::size_t Dataset::n_observations() const {
  std::size_t n = 0;
  for (const auto& u : units) n += u.size();
  return n;
}

void Dataset::validate() const {
  if (units.empty()) throw DataError("dataset has no units");
  if (z_f && !(*z_f > 0.0 && std::isfinite(*z_f))) throw DataError("failure threshold must be positive");
  for (const auto& u : units) {
    const std::string where = "unit '" + u.id + "': ";
    try {
      u.grid.validate();
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
    if (u.y.size() != u.grid.size()) throw DataError(where + "observation count does not match time grid");
    for (double v : u.y)
      if (!std::isfinite(v)) throw DataError(where + "non-finite observation");
    if (!u.z_true.empty()) {
      if (u.z_true.size() != u.y.size()) throw DataError(where + "latent path length does not match observations");
      double prev = 0.0;
      for (double v : u.z_true) {
        if (!(v >= prev)) throw DataError(where + "latent path must be nondecreasing from zero");
        prev = v;
      }
    }
  }
  for (std::size_t a = 0; a < units.size(); ++a)
    for (std::size_t b = a + 1; b < units.size(); ++b)
      if (units[a].id == units[b].id) throw DataError("duplicate unit id '" + units[a].id + "'");
}

Dataset Dataset::without_unit(std::size_t j) const {
  Dataset out = *this;
  out.units.erase(out.units.begin() + static_cast<std::ptrdiff_t>(j));
  return out;
}

Dataset Dataset::without_last_observation(std::size_t j) const {
  Dataset out = *this;
  auto& u = out.units.at(j);
  if (u.size() < 2) throw DataError("unit '" + u.id + "' needs at least two observations");
  u.grid.times.pop_back();
  u.y.pop_back();
  if (!u.z_true.empty()) u.z_true.pop_back();
  return out;
}

std::vector<double> simulate_path(const TimeGrid& grid, const GpParams& gp, Rng& rng) {
  std::vector<double> z(grid.size());
  const double rate = gp.rate();
  double level = 0.0;
  double prev_t = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    level += sample_gamma(gp.shape(grid.times[i] - prev_t), rate, rng);
    prev_t = grid.times[i];
    z[i] = level;
  }
  return z;
}

std::vector<double> add_noise(const std::vector<double>& z, double sigma, Rng& rng) {
  std::vector<double> y(z);
  if (sigma == 0.0) return y;
  for (auto& v : y) v += sigma * rng.normal();
  return y;
}

void StudyConfig::validate() const {
  std::vector<std::string> bad;
  if (n_units < 1) bad.push_back("n_units: must be at least 1");
  if (grid.kind == GridRecipe::Kind::RandomIncrements) {
    if (grid.n_obs < 1) bad.push_back("grid.n_obs: must be at least 1");
    if (!(grid.increment_lower > 0.0) || !(grid.increment_upper >= grid.increment_lower) ||
        !std::isfinite(grid.increment_upper))
      bad.push_back("grid.increments: need 0 < lower <= upper");
  } else {
    try {
      TimeGrid{grid.times}.validate();
    } catch (const DataError& e) {
      bad.push_back(std::string("grid.times: ") + e.what());
    }
  }
  for (auto [field, d] : {std::pair{"mu", &mu}, std::pair{"nu", &nu}}) {
    try {
      gpdeg::validate(*d);
      if (support_lower(*d) < 0.0 || (is_constant(*d) && !(d->params[0] > 0.0)))
        bad.push_back(std::string(field) + ": must be a distribution on positive values");
    } catch (const std::invalid_argument& e) {
      bad.push_back(std::string(field) + ": " + e.what());
    }
  }
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) bad.push_back("sigma: must be non-negative");
  if (z_f && !(*z_f > 0.0)) bad.push_back("z_f: must be positive");
  if (!bad.empty()) {
    std::ostringstream msg;
    msg << "invalid study config";
    for (const auto& b : bad) msg << "\n  " << b;
    throw ConfigError(msg.str());
  }
}

namespace {

TimeGrid draw_grid(const GridRecipe& recipe, Rng& rng) {
  if (recipe.kind == GridRecipe::Kind::Fixed) return TimeGrid{recipe.times};
  TimeGrid g;
  g.times.resize(recipe.n_obs);
  double t = 0.0;
  for (auto& v : g.times) {
    t += rng.uniform(recipe.increment_lower, recipe.increment_upper);
    v = t;
  }
  return g;
}

}  // namespace

Dataset simulate_study(const StudyConfig& config) {
  config.validate();
  Dataset ds;
  ds.z_f = config.z_f;
  const Rng root(config.seed);
  Rng grid_rng = root.split(0xA11);
  const TimeGrid shared = draw_grid(config.grid, grid_rng);
  for (std::size_t j = 0; j < config.n_units; ++j) {
    Rng rng = root.split(j);
    UnitSeries u;
    u.id = std::to_string(j + 1);
    u.grid = config.shared_grid ? shared : draw_grid(config.grid, rng);
    const GpParams gp{sample(config.mu, rng), sample(config.nu, rng)};
    u.z_true = simulate_path(u.grid, gp, rng);
    u.y = add_noise(u.z_true, config.sigma, rng);
    ds.units.push_back(std::move(u));
  }
  return ds;
}

PriorEnsemble prior_predictive(const ModelSpec& model, std::size_t n_draws, const TimeGrid& grid, Rng& rng,
                               bool include_noise) {
  validate(model);
  grid.validate();
  PriorEnsemble out;
  out.grid = grid;
  const bool vm = varies_mu(model.pooling);
  const bool vn = varies_nu(model.pooling);
  if (vm) out.param_names.insert(out.param_names.end(), {"mu_mu", "sigma_mu"});
  if (vn) out.param_names.insert(out.param_names.end(), {"mu_nu", "sigma_nu"});
  out.param_names.insert(out.param_names.end(), {"mu", "nu"});
  if (include_noise) out.param_names.push_back("sigma");
  const Rng base = rng.split(0x9e1);
  for (std::size_t s = 0; s < n_draws; ++s) {
    Rng r = base.split(s);
    std::vector<double> p;
    double mu;
    double nu;
    if (vm) {
      const double m = sample(model.prior("mu_mu"), r);
      const double sd = sample(model.prior("sigma_mu"), r);
      p.insert(p.end(), {m, sd});
      mu = sample_normal_lb0(m, sd, r);
    } else {
      mu = sample(model.prior("mu"), r);
    }
    if (vn) {
      const double m = sample(model.prior("mu_nu"), r);
      const double sd = sample(model.prior("sigma_nu"), r);
      p.insert(p.end(), {m, sd});
      nu = sample_normal_lb0(m, sd, r);
    } else {
      nu = sample(model.prior("nu"), r);
    }
    p.insert(p.end(), {mu, nu});
    out.z.push_back(simulate_path(grid, GpParams{mu, nu}, r));
    if (include_noise) {
      const double sigma = sample(model.prior("sigma"), r);
      p.push_back(sigma);
      out.y.push_back(add_noise(out.z.back(), sigma, r));
    }
    out.params.push_back(std::move(p));
  }
  return out;
}

PriorEnsemble prior_predictive_shape_rate(const DistSpec& shape_prior, const DistSpec& rate_prior,
                                          std::size_t n_draws, const TimeGrid& grid, Rng& rng) {
  validate(shape_prior);
  validate(rate_prior);
  grid.validate();
  PriorEnsemble out;
  out.grid = grid;
  out.param_names = {"shape", "rate"};
  const auto dt = grid.increments();
  const Rng base = rng.split(0x1e9);
  for (std::size_t s = 0; s < n_draws; ++s) {
    Rng r = base.split(s);
    const double shape = sample(shape_prior, r);
    const double rate = sample(rate_prior, r);
    std::vector<double> z(grid.size());
    double level = 0.0;
    for (std::size_t i = 0; i < dt.size(); ++i) {
      level += sample_gamma(shape * dt[i], rate, r);
      z[i] = level;
    }
    out.params.push_back({shape, rate});
    out.z.push_back(std::move(z));
  }
  return out;
}

}  // namespace gpdeg
