#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gpdeg/sampler.hpp"

namespace gpdeg {

struct ParamSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q50 = 0.0;
  double q975 = 0.0;
  /// Unavailable for a constant column.
  std::optional<double> ess;
  /// Unavailable for a single chain or a constant column.
  std::optional<double> rhat;
};

struct DiagnosticsReport {
  std::vector<ParamSummary> params;
  std::size_t n_chains = 0;
  std::size_t n_per_chain = 0;
  std::size_t n_total = 0;
  std::size_t divergences = 0;

  /// Throws StructuralError for an unknown name.
  const ParamSummary& at(const std::string& name) const;
};

/// Empirical quantile with linear interpolation between order statistics
/// (R type 7). Input must be sorted.
double quantile_sorted(std::span<const double> sorted, double p);
double quantile(std::vector<double> values, double p);

/// Split potential scale reduction. Every chain is halved; chains of unequal
/// length are truncated to the shortest.
std::optional<double> split_rhat(const std::vector<std::vector<double>>& chains);

/// Effective sample size of split chains from the initial monotone positive
/// sequence of summed autocorrelations, capped at the total draw count.
std::optional<double> split_ess(const std::vector<std::vector<double>>& chains);

/// Summaries for the listed columns, or every column when names is empty.
DiagnosticsReport diagnose(const Draws& draws, const std::vector<std::string>& names = {});

}  // namespace gpdeg
