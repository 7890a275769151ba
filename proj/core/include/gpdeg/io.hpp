#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gpdeg/diagnostics.hpp"
#include "gpdeg/evaluate.hpp"
#include "gpdeg/model_spec.hpp"
#include "gpdeg/process.hpp"
#include "gpdeg/sampler.hpp"

namespace gpdeg::io {

// Tabular text

/// Shortest decimal that parses back to the same double; "nan", "inf", "-inf".
std::string format_number(double x);
/// Parses a number written by format_number. Throws DataError.
double parse_number(std::string_view text);

/// Quotes a field when it contains a comma, quote, CR or LF.
std::string csv_field(std::string_view text);
/// RFC 4180 records; a trailing newline does not start an empty record.
/// Throws DataError on an unterminated quote.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

std::string read_file(const std::filesystem::path& path);
/// Creates parent directories as needed.
void write_file(const std::filesystem::path& path, std::string_view content);

// Datasets

/// Columns unit_id,time,y,z_true; z_true is empty for observed data.
std::string dataset_to_csv(const Dataset& data);
/// Units appear in order of first occurrence. Throws DataError.
Dataset dataset_from_csv(std::string_view text);

/// JSON describing a dataset: units, observation counts, threshold, and the
/// generator settings when simulated.
std::string dataset_sidecar(const Dataset& data, const StudyConfig* generator = nullptr);

/// Reads the CSV and, if present next to it, the ".json" sidecar for the
/// failure threshold.
Dataset read_dataset(const std::filesystem::path& csv_path);

// Sampler output

/// Sampler columns chain, iteration, divergent, energy, lp, accept_stat,
/// tree_depth, n_leapfrog followed by one column per parameter.
std::string draws_to_csv(const Draws& draws);
Draws draws_from_csv(std::string_view text);

std::string diagnostics_to_json(const DiagnosticsReport& report, const Draws& draws);

/// Fixed-width table with columns Mean, 2.5%, 50%, 97.5%, n_eff, R-hat.
std::string summary_table(const DiagnosticsReport& report);

std::string ensemble_to_csv(const PriorEnsemble& ensemble);

// Evaluation output

/// One row per withheld observation: unit_id, index, contribution.
std::string elppd_to_csv(const ElppdResult& result);
std::string elppd_to_json(const ElppdResult& result);

/// One row per model with its LOUO and SA totals and the rank under each.
struct ComparisonRow {
  std::string model;
  std::optional<double> louo;
  std::optional<double> sa;
};
/// Ranks start at 1 for the largest elppd; failed totals are left unranked.
std::string comparison_to_csv(const std::vector<ComparisonRow>& rows);
/// Ranks of each model under one column, 0 when unavailable.
std::vector<int> rank_descending(const std::vector<std::optional<double>>& totals);

/// Lattice column followed by one column per quantile level.
std::string failure_curve_to_csv(const FailureCurve& curve);
std::string failure_curve_to_json(const FailureCurve& curve);

// Configuration files (JSON, or TOML by ".toml" extension)

enum class ConfigFormat { Json, Toml };
ConfigFormat format_for(const std::filesystem::path& path);

/// The parts of a configuration file the commands use. Missing sections are
/// left empty. Unknown keys are errors.
struct ConfigFile {
  std::optional<ModelSpec> model;
  std::optional<StudyConfig> study;
  std::optional<SamplerConfig> sampler;
  std::optional<TimeGrid> grid;
  std::optional<std::size_t> draws;  // prior predictive draw count
};

/// Throws ConfigError listing every offending field by its dotted path.
ConfigFile parse_config(std::string_view text, ConfigFormat format);
ConfigFile load_config(const std::filesystem::path& path);

/// Normalized JSON for the sections present; parse_config reads it back to
/// the same values.
std::string config_to_json(const ConfigFile& config);

}  // namespace gpdeg::io
