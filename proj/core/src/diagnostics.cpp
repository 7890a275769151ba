#include "gpdeg/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gpdeg/errors.hpp"

namespace gpdeg {
namespace {

using Chains = std::vector<std::vector<double>>;

Chains split_chains(const Chains& chains) {
  std::size_t n = chains.front().size();
  for (const auto& c : chains) n = std::min(n, c.size());
  const std::size_t half = n / 2;
  Chains out;
  for (const auto& c : chains) {
    out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    out.emplace_back(c.begin() + static_cast<std::ptrdiff_t>(n - half), c.begin() + static_cast<std::ptrdiff_t>(n));
  }
  return out;
}

double mean_of(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double sample_variance(std::span<const double> x) {
  const double m = mean_of(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

bool all_constant(const Chains& chains) {
  const double first = chains.front().front();
  for (const auto& c : chains)
    for (double v : c)
      if (v != first) return false;
  return true;
}

}  // namespace

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double quantile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  return quantile_sorted(values, p);
}

std::optional<double> split_rhat(const Chains& chains) {
  if (chains.size() < 2 || chains.front().size() < 4) return std::nullopt;
  if (all_constant(chains)) return std::nullopt;
  const Chains split = split_chains(chains);
  std::vector<double> means, vars;
  for (const auto& c : split) {
    means.push_back(mean_of(c));
    vars.push_back(sample_variance(c));
  }
  const double n = static_cast<double>(split.front().size());
  const double b_over_n = sample_variance(means);
  const double w = mean_of(vars);
  if (w == 0.0) return std::numeric_limits<double>::infinity();
  const double var_plus = (n - 1.0) / n * w + b_over_n;
  return std::sqrt(var_plus / w);
}

std::optional<double> split_ess(const Chains& chains) {
  if (chains.empty() || chains.front().size() < 4) return std::nullopt;
  if (all_constant(chains)) return std::nullopt;
  const Chains split = split_chains(chains);
  const std::size_t m = split.size();
  const std::size_t n = split.front().size();

  std::vector<double> means(m), chain_var(m);
  for (std::size_t c = 0; c < m; ++c) means[c] = mean_of(split[c]);
  // Mean over chains of the biased lag-t autocovariance.
  auto mean_acov = [&](std::size_t t) {
    double total = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i + t < n; ++i) s += (split[c][i] - means[c]) * (split[c][i + t] - means[c]);
      total += s / static_cast<double>(n);
    }
    return total / static_cast<double>(m);
  };

  const double acov0 = mean_acov(0);
  const double mean_var = acov0 * static_cast<double>(n) / static_cast<double>(n - 1);
  double var_plus = mean_var * static_cast<double>(n - 1) / static_cast<double>(n);
  if (m > 1) var_plus += sample_variance(means);
  if (!(var_plus > 0.0)) return std::nullopt;

  std::vector<double> rho(n + 1, 0.0);
  rho[0] = 1.0;
  double rho_even = 1.0;
  double rho_odd = 1.0 - (mean_var - mean_acov(1)) / var_plus;
  rho[1] = rho_odd;
  std::size_t t = 1;
  while (t + 5 < n && rho_even + rho_odd > 0.0) {
    rho_even = 1.0 - (mean_var - mean_acov(t + 1)) / var_plus;
    rho_odd = 1.0 - (mean_var - mean_acov(t + 2)) / var_plus;
    if (rho_even + rho_odd >= 0.0) {
      rho[t + 1] = rho_even;
      rho[t + 2] = rho_odd;
    }
    t += 2;
  }
  const std::size_t max_t = t;
  if (rho_even > 0.0) rho[max_t + 1] = rho_even;

  for (t = 1; t + 2 <= max_t; t += 2) {
    if (rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]) {
      rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0;
      rho[t + 2] = rho[t + 1];
    }
  }

  const double n_total = static_cast<double>(m * n);
  double tau = -1.0 + rho[max_t + 1];
  for (std::size_t i = 0; i < max_t; ++i) tau += 2.0 * rho[i];
  tau = std::max(tau, 1.0 / std::log10(n_total));
  return std::min(n_total / tau, n_total);
}

const ParamSummary& DiagnosticsReport::at(const std::string& name) const {
  for (const auto& p : params)
    if (p.name == name) return p;
  throw StructuralError("diagnostics have no parameter '" + name + "'");
}

DiagnosticsReport diagnose(const Draws& draws, const std::vector<std::string>& names) {
  DiagnosticsReport r;
  r.n_chains = draws.n_chains;
  r.n_per_chain = draws.n_per_chain;
  r.n_total = draws.n_rows();
  r.divergences = draws.divergence_count();

  std::vector<std::size_t> cols;
  if (names.empty()) {
    for (std::size_t c = 0; c < draws.n_cols(); ++c) cols.push_back(c);
  } else {
    for (const auto& n : names) cols.push_back(draws.column(n));
  }

  for (std::size_t col : cols) {
    ParamSummary s;
    s.name = draws.names[col];
    std::vector<double> v = draws.column_values(col);
    s.mean = mean_of(v);
    s.sd = v.size() > 1 ? std::sqrt(sample_variance(v)) : 0.0;
    std::sort(v.begin(), v.end());
    s.q025 = quantile_sorted(v, 0.025);
    s.q50 = quantile_sorted(v, 0.5);
    s.q975 = quantile_sorted(v, 0.975);
    const auto chains = draws.by_chain(col);
    s.ess = split_ess(chains);
    s.rhat = split_rhat(chains);
    r.params.push_back(std::move(s));
  }
  return r;
}

}  // namespace gpdeg
