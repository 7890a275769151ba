#include "gpdeg/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "gpdeg/errors.hpp"
#include "gpdeg/special.hpp"

namespace gpdeg {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kHalfLog2Pi = 0.91893853320467274178032973640561764;
constexpr int kMaxInitAttempts = 100;

struct Logistic {
  double s;
  double log_s;
  double log_1ms;
};

Logistic logistic(double u) {
  if (u >= 0.0) {
    const double e = std::exp(-u);
    const double l = std::log1p(e);
    return {1.0 / (1.0 + e), -l, -u - l};
  }
  const double e = std::exp(u);
  const double l = std::log1p(e);
  return {e / (1.0 + e), u - l, -l};
}

std::string unit_name(const std::string& role, std::size_t j) { return role + "[" + std::to_string(j + 1) + "]"; }

}  // namespace

std::vector<double> isotonic_fit(const std::vector<double>& y) {
  // Blocks of (mean, weight), merged while they violate monotonicity.
  std::vector<double> mean;
  std::vector<std::size_t> weight;
  for (double v : y) {
    mean.push_back(v);
    weight.push_back(1);
    while (mean.size() > 1 && mean[mean.size() - 2] > mean.back()) {
      const std::size_t n = mean.size();
      const double w1 = static_cast<double>(weight[n - 2]);
      const double w2 = static_cast<double>(weight[n - 1]);
      mean[n - 2] = (w1 * mean[n - 2] + w2 * mean[n - 1]) / (w1 + w2);
      weight[n - 2] += weight[n - 1];
      mean.pop_back();
      weight.pop_back();
    }
  }
  std::vector<double> out;
  out.reserve(y.size());
  for (std::size_t b = 0; b < mean.size(); ++b) out.insert(out.end(), weight[b], mean[b]);
  return out;
}

Posterior::Posterior(ModelSpec spec, Dataset data) : spec_(std::move(spec)), data_(std::move(data)) {
  validate(spec_);
  data_.validate();
  const std::size_t J = data_.n_units();

  auto add_slot = [&](const std::string& role, int unit, const DistSpec* prior) {
    slot_prior_.push_back(prior ? std::optional<DistSpec>(*prior) : std::nullopt);
    ParamSlot s;
    s.role = role;
    s.unit = unit;
    s.name = unit < 0 ? role : unit_name(role, static_cast<std::size_t>(unit));
    if (prior && is_constant(*prior)) {
      s.pinned = true;
      s.pinned_value = prior->params[0];
    } else if (prior && prior->kind == DistKind::Uniform) {
      s.transform = ParamSlot::Transform::Logistic;
      s.lower = prior->params[0];
      s.upper = prior->params[1];
    }
    slots_.push_back(s);
    return static_cast<int>(slots_.size() - 1);
  };

  const bool none = spec_.pooling == Pooling::NoPooling;
  const bool vm = varies_mu(spec_.pooling);
  const bool vn = varies_nu(spec_.pooling);
  int g_mu = -1, g_nu = -1, g_sigma = -1;
  if (!none) {
    if (vm) {
      mu_mu_ = add_slot("mu_mu", -1, &spec_.prior("mu_mu"));
      sigma_mu_ = add_slot("sigma_mu", -1, &spec_.prior("sigma_mu"));
    } else {
      g_mu = add_slot("mu", -1, &spec_.prior("mu"));
    }
    if (vn) {
      mu_nu_ = add_slot("mu_nu", -1, &spec_.prior("mu_nu"));
      sigma_nu_ = add_slot("sigma_nu", -1, &spec_.prior("sigma_nu"));
    } else {
      g_nu = add_slot("nu", -1, &spec_.prior("nu"));
    }
    g_sigma = add_slot("sigma", -1, &spec_.prior("sigma"));
  }
  for (std::size_t j = 0; j < J; ++j) {
    const int uj = static_cast<int>(j);
    if (none) {
      unit_mu_.push_back(add_slot("mu", uj, &spec_.prior("mu")));
      unit_nu_.push_back(add_slot("nu", uj, &spec_.prior("nu")));
      unit_sigma_.push_back(add_slot("sigma", uj, &spec_.prior("sigma")));
      continue;
    }
    unit_mu_.push_back(vm ? add_slot("mu", uj, nullptr) : g_mu);
    unit_nu_.push_back(vn ? add_slot("nu", uj, nullptr) : g_nu);
    unit_sigma_.push_back(g_sigma);
  }

  for (auto& s : slots_) {
    if (!s.pinned) s.index = n_sampled_++;
  }
  dim_ = n_sampled_;
  for (const auto& u : data_.units) {
    jump_offset_.push_back(dim_);
    dim_ += u.size();
    dt_.push_back(u.grid.increments());
  }
}

void Posterior::check_length(std::size_t n) const {
  if (n != dim_)
    throw StructuralError("parameter vector has length " + std::to_string(n) + ", model expects " +
                          std::to_string(dim_));
}

ConstrainedParams Posterior::constrain(std::span<const double> u) const {
  check_length(u.size());
  ConstrainedParams out;
  out.values.resize(slots_.size());
  for (std::size_t k = 0; k < slots_.size(); ++k) {
    const auto& s = slots_[k];
    if (s.pinned) {
      out.values[k] = s.pinned_value;
    } else if (s.transform == ParamSlot::Transform::Log) {
      out.values[k] = std::exp(u[s.index]);
      out.log_jacobian += u[s.index];
    } else {
      const auto l = logistic(u[s.index]);
      const double w = s.upper - s.lower;
      out.values[k] = s.lower + w * l.s;
      out.log_jacobian += std::log(w) + l.log_s + l.log_1ms;
    }
  }
  for (std::size_t j = 0; j < data_.n_units(); ++j) {
    const std::size_t n = data_.units[j].size();
    std::vector<double> dz(n), z(n);
    double level = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = u[jump_offset_[j] + i];
      dz[i] = std::exp(v);
      level += dz[i];
      z[i] = level;
      out.log_jacobian += v;
    }
    out.dz.push_back(std::move(dz));
    out.z.push_back(std::move(z));
  }
  return out;
}

std::vector<double> Posterior::unconstrain(const std::vector<double>& slot_values,
                                           const std::vector<std::vector<double>>& dz) const {
  if (slot_values.size() != slots_.size() || dz.size() != data_.n_units())
    throw StructuralError("constrained values do not match the model layout");
  std::vector<double> u(dim_);
  for (std::size_t k = 0; k < slots_.size(); ++k) {
    const auto& s = slots_[k];
    if (s.pinned) continue;
    const double x = slot_values[k];
    if (s.transform == ParamSlot::Transform::Log) {
      u[s.index] = std::log(x);
    } else {
      const double p = (x - s.lower) / (s.upper - s.lower);
      u[s.index] = std::log(p) - std::log1p(-p);
    }
  }
  for (std::size_t j = 0; j < dz.size(); ++j) {
    if (dz[j].size() != data_.units[j].size()) throw StructuralError("jump count does not match unit " +
                                                                     data_.units[j].id);
    for (std::size_t i = 0; i < dz[j].size(); ++i) u[jump_offset_[j] + i] = std::log(dz[j][i]);
  }
  return u;
}

double Posterior::evaluate_impl(std::span<const double> u, double* grad, DensityTerms* terms) const {
  check_length(u.size());
  for (double v : u)
    if (!std::isfinite(v)) throw std::domain_error("log posterior: non-finite parameter value");

  const std::size_t K = slots_.size();
  std::vector<double> x(K), gx(K, 0.0), dxdu(K, 0.0), dlogj(K, 0.0);
  DensityTerms t;
  for (std::size_t k = 0; k < K; ++k) {
    const auto& s = slots_[k];
    if (s.pinned) {
      x[k] = s.pinned_value;
    } else if (s.transform == ParamSlot::Transform::Log) {
      x[k] = std::exp(u[s.index]);
      t.jacobian += u[s.index];
      dxdu[k] = x[k];
      dlogj[k] = 1.0;
    } else {
      const auto l = logistic(u[s.index]);
      const double w = s.upper - s.lower;
      x[k] = s.lower + w * l.s;
      t.jacobian += std::log(w) + l.log_s + l.log_1ms;
      dxdu[k] = w * l.s * (1.0 - l.s);
      dlogj[k] = 1.0 - 2.0 * l.s;
    }
  }

  for (std::size_t k = 0; k < K; ++k) {
    if (slots_[k].pinned || !slot_prior_[k]) continue;
    t.prior += logpdf(*slot_prior_[k], x[k]);
    gx[k] += logpdf_dx(*slot_prior_[k], x[k]);
  }
  auto hierarchy = [&](std::size_t unit_slot, int loc, int scale) {
    const auto h = normal_lb0_term(x[unit_slot], x[loc], x[scale]);
    t.prior += h.value;
    gx[unit_slot] += h.d_x;
    gx[loc] += h.d_location;
    gx[scale] += h.d_scale;
  };
  for (std::size_t j = 0; j < data_.n_units(); ++j) {
    if (mu_mu_ >= 0) hierarchy(unit_mu_[j], mu_mu_, sigma_mu_);
    if (mu_nu_ >= 0) hierarchy(unit_nu_[j], mu_nu_, sigma_nu_);
  }

  for (std::size_t j = 0; j < data_.n_units(); ++j) {
    const auto& unit = data_.units[j];
    const auto& dt = dt_[j];
    const std::size_t n = unit.size();
    const std::size_t off = jump_offset_[j];
    const std::size_t km = unit_mu_[j], kn = unit_nu_[j], ks = unit_sigma_[j];
    const double mu = x[km], nu = x[kn], sigma = x[ks];
    const double nu2 = nu * nu;
    const double b = 1.0 / (mu * nu2);
    const double log_b = std::log(b);
    double g_mu = 0.0, g_nu = 0.0, g_sigma = 0.0;

    double prev_dt = -1.0, lg = 0.0, psi = 0.0;
    double level = 0.0;
    const double inv_s2 = 1.0 / (sigma * sigma);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = u[off + i];
      const double dz = std::exp(v);
      const double a = dt[i] / nu2;
      if (dt[i] != prev_dt) {
        lg = ln_gamma(a);
        if (grad) psi = digamma(a);
        prev_dt = dt[i];
      }
      t.process += a * log_b - lg + (a - 1.0) * v - b * dz;
      t.jacobian += v;
      level += dz;
      const double r = unit.y[i] - level;
      t.data += -0.5 * r * r * inv_s2;
      if (grad) {
        g_mu += (b * dz - a) / mu;
        g_nu += -2.0 / nu * (a * (log_b - psi + v) + a - b * dz);
        g_sigma += r * r * inv_s2 / sigma;
        grad[off + i] = a - b * dz;  // process term plus Jacobian, data term added below
      }
    }
    t.data -= static_cast<double>(n) * (std::log(sigma) + kHalfLog2Pi);
    if (grad) {
      g_sigma -= static_cast<double>(n) / sigma;
      // Data gradient w.r.t. dz_k is the suffix sum of residuals / sigma^2.
      double suffix = 0.0;
      double z = level;
      for (std::size_t i = n; i-- > 0;) {
        suffix += (unit.y[i] - z) * inv_s2;
        const double dz = std::exp(u[off + i]);
        z -= dz;
        grad[off + i] += suffix * dz;
      }
      gx[km] += g_mu;
      gx[kn] += g_nu;
      gx[ks] += g_sigma;
    }
  }

  if (grad) {
    for (std::size_t k = 0; k < K; ++k) {
      if (slots_[k].pinned) continue;
      grad[slots_[k].index] = gx[k] * dxdu[k] + dlogj[k];
    }
  }
  if (terms) *terms = t;
  const double value = t.total();
  return std::isnan(value) ? kNegInf : value;
}

DensityTerms Posterior::terms(std::span<const double> u) const {
  DensityTerms t;
  evaluate_impl(u, nullptr, &t);
  return t;
}

double Posterior::log_density(std::span<const double> u) const { return evaluate_impl(u, nullptr, nullptr); }

double Posterior::log_density_gradient(std::span<const double> u, std::span<double> grad) const {
  if (grad.size() != dim_) throw StructuralError("gradient buffer has the wrong length");
  return evaluate_impl(u, grad.data(), nullptr);
}

LogDensityEval Posterior::evaluate(std::span<const double> u) const {
  LogDensityEval out{0.0, std::vector<double>(dim_)};
  out.value = log_density_gradient(u, out.gradient);
  return out;
}

double Posterior::log_density_constrained(const std::vector<double>& x,
                                          const std::vector<std::vector<double>>& dz) const {
  if (x.size() != slots_.size() || dz.size() != data_.n_units())
    throw StructuralError("constrained values do not match the model layout");
  double lp = 0.0;
  for (std::size_t k = 0; k < slots_.size(); ++k) {
    if (slots_[k].pinned || !slot_prior_[k]) continue;
    lp += logpdf(*slot_prior_[k], x[k]);
  }
  for (std::size_t j = 0; j < data_.n_units(); ++j) {
    if (mu_mu_ >= 0) lp += logpdf(DistSpec::normal_lb0(x[mu_mu_], x[sigma_mu_]), x[unit_mu_[j]]);
    if (mu_nu_ >= 0) lp += logpdf(DistSpec::normal_lb0(x[mu_nu_], x[sigma_nu_]), x[unit_nu_[j]]);
    const GpParams gp{x[unit_mu_[j]], x[unit_nu_[j]]};
    const double sigma = x[unit_sigma_[j]];
    double z = 0.0;
    for (std::size_t i = 0; i < dz[j].size(); ++i) {
      lp += gamma_logpdf(dz[j][i], gp.shape(dt_[j][i]), gp.rate());
      z += dz[j][i];
      lp += normal_logpdf(data_.units[j].y[i], z, sigma);
    }
  }
  return lp;
}

std::vector<std::vector<double>> Posterior::initial_jumps() const {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& u : data_.units) {
    for (double v : u.y) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  double range = hi - lo;
  if (!(range > 0.0)) range = std::max(std::fabs(hi), 1.0);
  const double eps = 1e-6 * range;

  std::vector<std::vector<double>> out;
  for (const auto& u : data_.units) {
    const auto fit = isotonic_fit(u.y);
    std::vector<double> dz(fit.size());
    double prev = 0.0;
    for (std::size_t i = 0; i < fit.size(); ++i) {
      const double level = std::max(fit[i], 0.0);
      dz[i] = std::max(level - prev, eps);
      prev = std::max(level, prev);
    }
    out.push_back(std::move(dz));
  }
  return out;
}

std::vector<double> Posterior::initial_point(Rng& rng) const {
  const auto dz = initial_jumps();
  for (int attempt = 0; attempt < kMaxInitAttempts; ++attempt) {
    std::vector<double> x(slots_.size());
    for (std::size_t k = 0; k < slots_.size(); ++k) {
      const auto& s = slots_[k];
      if (s.pinned) {
        x[k] = s.pinned_value;
      } else if (slot_prior_[k]) {
        const double centre = typical_value(*slot_prior_[k]);
        x[k] = centre + 0.25 * (sample(*slot_prior_[k], rng) - centre);
      }
    }
    // Unit-level parameters follow their (already initialized) hierarchy.
    for (std::size_t j = 0; j < data_.n_units(); ++j) {
      if (mu_mu_ >= 0) {
        const double loc = x[mu_mu_];
        x[unit_mu_[j]] = 0.75 * loc + 0.25 * sample_normal_lb0(loc, x[sigma_mu_], rng);
      }
      if (mu_nu_ >= 0) {
        const double loc = x[mu_nu_];
        x[unit_nu_[j]] = 0.75 * loc + 0.25 * sample_normal_lb0(loc, x[sigma_nu_], rng);
      }
    }
    bool inside = true;
    for (std::size_t k = 0; k < slots_.size(); ++k) {
      const auto& s = slots_[k];
      if (s.pinned) continue;
      if (!(x[k] > 0.0) || (s.transform == ParamSlot::Transform::Logistic && !(x[k] > s.lower && x[k] < s.upper)))
        inside = false;
    }
    if (!inside) continue;
    auto u = unconstrain(x, dz);
    bool finite = std::all_of(u.begin(), u.end(), [](double v) { return std::isfinite(v); });
    if (!finite) continue;
    std::vector<double> g(dim_);
    const double lp = log_density_gradient(u, g);
    finite = std::isfinite(lp) && std::all_of(g.begin(), g.end(), [](double v) { return std::isfinite(v); });
    if (finite) return u;
  }
  throw SamplingError("could not find a finite initial value in " + std::to_string(kMaxInitAttempts) +
                      " attempts");
}

std::vector<std::string> Posterior::output_names() const {
  std::vector<std::string> names;
  for (const auto& s : slots_) names.push_back(s.name);
  for (const char* prefix : {"dz", "z"}) {
    for (std::size_t j = 0; j < data_.n_units(); ++j) {
      for (std::size_t i = 0; i < data_.units[j].size(); ++i) {
        names.push_back(std::string(prefix) + "[" + std::to_string(j + 1) + "," + std::to_string(i + 1) + "]");
      }
    }
  }
  return names;
}

void Posterior::write_output(std::span<const double> u, std::span<double> out) const {
  const auto c = constrain(u);
  std::size_t p = 0;
  for (double v : c.values) out[p++] = v;
  for (const auto& d : c.dz)
    for (double v : d) out[p++] = v;
  for (const auto& z : c.z)
    for (double v : z) out[p++] = v;
}

}  // namespace gpdeg
