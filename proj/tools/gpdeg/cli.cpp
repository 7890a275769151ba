#include "gpdeg/cli.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "gpdeg/diagnostics.hpp"
#include "gpdeg/errors.hpp"
#include "gpdeg/evaluate.hpp"
#include "gpdeg/io.hpp"
#include "gpdeg/manifest.hpp"
#include "gpdeg/model_spec.hpp"
#include "gpdeg/process.hpp"
#include "gpdeg/sampler.hpp"

namespace gpdeg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Flags {
  std::vector<std::string> configs;
  std::string data;
  std::string fit;
  std::string out;
  std::uint64_t seed = 1;
  std::size_t threads = 0;
  std::size_t chains = 0;
  std::size_t warmup = 0;
  std::size_t samples = 0;
  std::size_t draws = 100;
  double target_accept = 0.8;
  double zf = 0.0;
  std::string method = "both";
  std::string mode = "new-unit";
  std::string unit;
  std::string legacy;

  std::set<std::string> given;
  bool has(const std::string& name) const { return given.count(name) > 0; }
};

SamplerConfig resolve_sampler(const std::optional<SamplerConfig>& configured, const SamplerConfig& fallback,
                              const Flags& f) {
  SamplerConfig c = configured.value_or(fallback);
  if (f.has("seed")) c.seed = f.seed;
  if (f.has("threads")) c.threads = f.threads;
  if (f.has("chains")) c.n_chains = f.chains;
  if (f.has("warmup")) c.n_warmup = f.warmup;
  if (f.has("samples")) c.n_samples = f.samples;
  if (f.has("target-accept")) c.target_accept = f.target_accept;
  c.validate();
  return c;
}

void sampler_settings(Manifest& m, const SamplerConfig& c) {
  m.settings.emplace_back("chains", std::to_string(c.n_chains));
  m.settings.emplace_back("warmup", std::to_string(c.n_warmup));
  m.settings.emplace_back("samples", std::to_string(c.n_samples));
  m.settings.emplace_back("target_accept", io::format_number(c.target_accept));
  m.settings.emplace_back("max_tree_depth", std::to_string(c.max_tree_depth));
}

fs::path single_config(const Flags& f, const char* command) {
  if (f.configs.size() > 1) throw ConfigError(std::string(command) + " takes one --config");
  return f.configs.empty() ? fs::path() : fs::path(f.configs.front());
}

bool is_latent(const std::string& name) { return name.rfind("dz[", 0) == 0 || name.rfind("z[", 0) == 0; }

std::vector<std::string> reported_parameters(const Draws& draws) {
  std::vector<std::string> names;
  for (const auto& n : draws.names)
    if (!is_latent(n)) names.push_back(n);
  return names;
}

// "ga(1,0.001)" or "1,0.001"
std::pair<double, double> parse_shape_rate(std::string text) {
  std::string body = text;
  if (body.rfind("ga(", 0) == 0 && body.back() == ')') body = body.substr(3, body.size() - 4);
  auto comma = body.find(',');
  if (comma == std::string::npos) throw ConfigError("--legacy-shape-rate: expected ga(shape,rate), got '" + text + "'");
  try {
    return {io::parse_number(body.substr(0, comma)), io::parse_number(body.substr(comma + 1))};
  } catch (const DataError&) {
    throw ConfigError("--legacy-shape-rate: expected ga(shape,rate), got '" + text + "'");
  }
}

int cmd_simulate(const Flags& f, std::ostream& out) {
  const fs::path config_path = single_config(f, "simulate");
  if (config_path.empty()) throw ConfigError("simulate needs --config with a [study] section");
  auto cfg = io::load_config(config_path);
  if (!cfg.study) throw ConfigError(config_path.string() + ": no study section");
  StudyConfig study = *cfg.study;
  if (f.has("seed")) study.seed = f.seed;

  Dataset data = simulate_study(study);
  const fs::path dir(f.out);
  io::write_file(dir / "data.csv", io::dataset_to_csv(data));
  io::write_file(dir / "data.json", io::dataset_sidecar(data, &study));

  Manifest m;
  m.command = "simulate";
  m.seed = study.seed;
  m.inputs = {{"config", config_path}};
  m.settings.emplace_back("study", study.name);
  m.write(dir);
  out << "simulated " << data.n_units() << " unit(s), " << data.n_observations() << " observations -> "
      << (dir / "data.csv").string() << "\n";
  return kOk;
}

int cmd_prior_check(const Flags& f, std::ostream& out) {
  const fs::path config_path = single_config(f, "prior-check");
  io::ConfigFile cfg;
  if (!config_path.empty()) cfg = io::load_config(config_path);
  ModelSpec model = cfg.model.value_or(prior_check_model());
  TimeGrid grid = cfg.grid.value_or(TimeGrid::unit_spaced(11));
  std::size_t n = f.has("draws") ? f.draws : cfg.draws.value_or(100);
  if (n == 0) throw ConfigError("--draws must be positive");

  Rng rng(f.seed);
  PriorEnsemble ensemble;
  Manifest m;
  m.command = "prior-check";
  m.seed = f.seed;
  if (!config_path.empty()) m.inputs.emplace_back("config", config_path);
  if (f.has("legacy-shape-rate")) {
    auto [a, b] = parse_shape_rate(f.legacy);
    DistSpec prior = DistSpec::gamma(a, b);
    try {
      gpdeg::validate(prior);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("--legacy-shape-rate: ") + e.what());
    }
    ensemble = prior_predictive_shape_rate(prior, prior, n, grid, rng);
    m.settings.emplace_back("parameterization", "shape_rate");
    m.settings.emplace_back("shape_rate_prior", f.legacy);
  } else {
    ensemble = prior_predictive(model, n, grid, rng, true);
    m.settings.emplace_back("parameterization", "mean_cv");
    m.settings.emplace_back("model", model.name);
  }
  m.settings.emplace_back("draws", std::to_string(n));

  std::vector<double> endpoint;
  for (const auto& z : ensemble.z) endpoint.push_back(z.back());
  json summary = {{"n_draws", n},
                  {"times", grid.times},
                  {"parameters", ensemble.param_names},
                  {"endpoint", {{"q2.5", quantile(endpoint, 0.025)},
                                {"q50", quantile(endpoint, 0.5)},
                                {"q97.5", quantile(endpoint, 0.975)}}}};
  const fs::path dir(f.out);
  io::write_file(dir / "ensemble.csv", io::ensemble_to_csv(ensemble));
  io::write_file(dir / "ensemble.json", summary.dump(2) + "\n");
  m.write(dir);
  out << n << " prior predictive paths on " << grid.size() << " time points -> " << (dir / "ensemble.csv").string()
      << "\n";
  return kOk;
}

int cmd_fit(const Flags& f, std::ostream& out, std::ostream& err) {
  if (f.data.empty()) throw ConfigError("fit needs --data");
  const fs::path config_path = single_config(f, "fit");
  io::ConfigFile cfg;
  if (!config_path.empty()) cfg = io::load_config(config_path);
  Dataset data = io::read_dataset(f.data);
  const bool single = data.n_units() == 1;
  ModelSpec spec = cfg.model.value_or(single ? single_unit_model() : default_model(Pooling::CompletePooling));
  SamplerConfig sc = resolve_sampler(
      cfg.sampler, single ? SamplerConfig::single_unit_default() : SamplerConfig::pooled_default(), f);

  const fs::path dir(f.out);
  Manifest m;
  m.command = "fit";
  m.seed = sc.seed;
  m.inputs = {{"data", f.data}};
  if (!config_path.empty()) m.inputs.emplace_back("config", config_path);
  m.settings.emplace_back("model", spec.name);
  m.settings.emplace_back("pooling", std::string(to_string(spec.pooling)));
  sampler_settings(m, sc);

  io::ConfigFile used;
  used.model = spec;
  used.sampler = sc;
  io::write_file(dir / "model.json", io::config_to_json(used));
  io::write_file(dir / "data.csv", io::dataset_to_csv(data));
  io::write_file(dir / "data.json", io::dataset_sidecar(data));

  Draws draws;
  try {
    draws = run(spec, data, sc);
  } catch (const SamplingError& e) {
    m.status = "failed";
    m.message = e.what();
    m.write(dir);
    throw;
  }
  DiagnosticsReport report = diagnose(draws, reported_parameters(draws));
  DiagnosticsReport full = diagnose(draws);
  io::write_file(dir / "draws.csv", io::draws_to_csv(draws));
  io::write_file(dir / "diagnostics.json", io::diagnostics_to_json(full, draws));
  const std::string table = io::summary_table(report);
  io::write_file(dir / "summary.txt", table);
  if (!draws.failed_chains.empty()) {
    m.status = "partial";
    m.message = std::to_string(draws.failed_chains.size()) + " chain(s) failed";
    for (const auto& msg : draws.failed_chains) err << "warning: " << msg << "\n";
  }
  m.write(dir);

  out << table;
  out << "divergent transitions: " << report.divergences << " of " << report.n_total << "\n";
  return kOk;
}

int cmd_cv(const Flags& f, std::ostream& out, std::ostream& err) {
  if (f.data.empty()) throw ConfigError("cv needs --data");
  if (f.configs.empty()) throw ConfigError("cv needs at least one --config with a model section");
  std::vector<CvMethod> methods;
  if (f.method == "both")
    methods = {CvMethod::LeaveOneUnitOut, CvMethod::StepAhead};
  else
    methods = {cv_method_from_string(f.method)};

  Dataset data = io::read_dataset(f.data);
  struct Entry {
    ModelSpec spec;
    SamplerConfig sampler;
  };
  std::vector<Entry> entries;
  std::set<std::string> names;
  for (const auto& path : f.configs) {
    auto cfg = io::load_config(path);
    if (!cfg.model) throw ConfigError(path + ": no model section");
    if (!names.insert(cfg.model->name).second) throw ConfigError("two models are named '" + cfg.model->name + "'");
    entries.push_back({*cfg.model, resolve_sampler(cfg.sampler, SamplerConfig::pooled_default(), f)});
  }

  const fs::path dir(f.out);
  Manifest m;
  m.command = "cv";
  m.seed = entries.front().sampler.seed;
  m.inputs = {{"data", f.data}};
  for (const auto& path : f.configs) m.inputs.emplace_back("config", path);
  m.settings.emplace_back("method", f.method);

  std::vector<io::ComparisonRow> rows;
  std::size_t failed_folds = 0;
  for (const auto& e : entries) {
    io::ComparisonRow row{e.spec.name, std::nullopt, std::nullopt};
    for (CvMethod method : methods) {
      ElppdResult r = elppd(method, e.spec, data, e.sampler);
      const std::string stem = e.spec.name + "_" + to_string(method);
      io::write_file(dir / (stem + ".csv"), io::elppd_to_csv(r));
      io::write_file(dir / (stem + ".json"), io::elppd_to_json(r));
      for (const auto& fold : r.folds) {
        if (!fold.ok) {
          ++failed_folds;
          err << "warning: " << e.spec.name << " " << to_string(method) << " fold for unit " << fold.unit_id
              << " failed: " << fold.error << "\n";
        }
      }
      (method == CvMethod::LeaveOneUnitOut ? row.louo : row.sa) = r.total;
    }
    rows.push_back(row);
  }
  const std::string table = io::comparison_to_csv(rows);
  io::write_file(dir / "comparison.csv", table);
  if (failed_folds) {
    m.status = "partial";
    m.message = std::to_string(failed_folds) + " fold(s) failed";
  }
  m.write(dir);
  out << table;
  return kOk;
}

int cmd_failure_time(const Flags& f, std::ostream& out) {
  if (f.fit.empty()) throw ConfigError("failure-time needs --fit pointing at a fit output directory");
  const fs::path fit(f.fit);
  auto cfg = io::load_config(fit / "model.json");
  if (!cfg.model) throw ConfigError((fit / "model.json").string() + ": no model section");
  const ModelSpec& spec = *cfg.model;
  Draws draws = io::draws_from_csv(io::read_file(fit / "draws.csv"));
  Dataset data = io::read_dataset(fit / "data.csv");

  double z_f = 0.0;
  if (f.has("zf"))
    z_f = f.zf;
  else if (data.z_f)
    z_f = *data.z_f;
  else
    throw ConfigError("no failure threshold: pass --zf");

  const fs::path dir(f.out);
  Manifest m;
  m.command = "failure-time";
  m.seed = f.seed;
  m.inputs = {{"draws", fit / "draws.csv"}, {"model", fit / "model.json"}, {"data", fit / "data.csv"}};
  m.settings.emplace_back("mode", f.mode);
  m.settings.emplace_back("z_f", io::format_number(z_f));

  FailureCurve curve;
  if (f.mode == "new-unit") {
    if (f.has("unit")) throw ConfigError("--unit applies to --mode in-test only");
    auto times = default_failure_lattice(draws, spec, z_f);
    Rng rng(f.seed);
    curve = failure_curve(draws, spec, z_f, times, rng);
  } else if (f.mode == "in-test") {
    if (!f.has("unit")) throw ConfigError("--mode in-test needs --unit");
    auto it = std::find_if(data.units.begin(), data.units.end(), [&](const UnitSeries& u) { return u.id == f.unit; });
    if (it == data.units.end()) {
      std::string ids;
      for (const auto& u : data.units) ids += (ids.empty() ? "" : ", ") + u.id;
      throw ConfigError("unit '" + f.unit + "' is not in the fitted data (units: " + ids + ")");
    }
    const auto j = static_cast<std::size_t>(it - data.units.begin());
    m.settings.emplace_back("unit", f.unit);
    auto times = default_failure_lattice(draws, spec, z_f, j, &data);
    curve = predictive_failure_curve(draws, spec, data, j, z_f, times);
  } else {
    throw ConfigError("--mode must be new-unit or in-test");
  }

  io::write_file(dir / "failure.csv", io::failure_curve_to_csv(curve));
  io::write_file(dir / "failure.json", io::failure_curve_to_json(curve));
  m.write(dir);
  out << "failure-time curve (" << f.mode << ", z_f = " << io::format_number(z_f) << ") on " << curve.times.size()
      << " points -> " << (dir / "failure.csv").string() << "\n";
  return kOk;
}

template <class T>
void track(CLI::App* app, Flags& f, const std::string& flag, T& target, const std::string& help) {
  app->add_option("--" + flag, target, help)->each([&f, flag](const std::string&) { f.given.insert(flag); });
}

void sampler_options(CLI::App* app, Flags& f) {
  track(app, f, "seed", f.seed, "Random seed");
  track(app, f, "threads", f.threads, "Worker threads (0 = all cores)");
  track(app, f, "chains", f.chains, "Number of chains");
  track(app, f, "warmup", f.warmup, "Warmup iterations per chain");
  track(app, f, "samples", f.samples, "Sampling iterations per chain");
  track(app, f, "target-accept", f.target_accept, "Target acceptance statistic for step size adaptation");
}

int dispatch(CLI::App& app, Flags& f, std::ostream& out, std::ostream& err) {
  const auto* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  if (!f.out.empty()) fs::create_directories(f.out);
  if (name == "simulate") return cmd_simulate(f, out);
  if (name == "prior-check") return cmd_prior_check(f, out);
  if (name == "fit") return cmd_fit(f, out, err);
  if (name == "cv") return cmd_cv(f, out, err);
  return cmd_failure_time(f, out);
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, out, err);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian gamma-process degradation modelling", "gpdeg"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(GPDEG_VERSION));
  Flags f;

  auto* simulate = app.add_subcommand("simulate", "Simulate a dataset from a study config");
  simulate->add_option("--config", f.configs, "Study config (TOML or JSON)")->required();
  simulate->add_option("--out", f.out, "Output directory")->required();
  track(simulate, f, "seed", f.seed, "Override the study seed");

  auto* prior = app.add_subcommand("prior-check", "Draw prior predictive degradation paths");
  prior->add_option("--config", f.configs, "Model and grid config");
  prior->add_option("--out", f.out, "Output directory")->required();
  track(prior, f, "seed", f.seed, "Random seed");
  track(prior, f, "draws", f.draws, "Number of paths (default 100)");
  track(prior, f, "legacy-shape-rate", f.legacy, "Shape/rate parameterization with ga(a,b) priors on both");

  auto* fit = app.add_subcommand("fit", "Fit a model with NUTS");
  fit->add_option("--config", f.configs, "Model and sampler config");
  fit->add_option("--data", f.data, "Dataset CSV")->required();
  fit->add_option("--out", f.out, "Output directory")->required();
  sampler_options(fit, f);

  auto* cv = app.add_subcommand("cv", "Cross-validated comparison of models");
  cv->add_option("--config", f.configs, "Model config; repeat for each model")->required();
  cv->add_option("--data", f.data, "Dataset CSV")->required();
  cv->add_option("--out", f.out, "Output directory")->required();
  cv->add_option("--method", f.method, "louo, sa or both")->check(CLI::IsMember({"louo", "sa", "both"}));
  sampler_options(cv, f);

  auto* failure = app.add_subcommand("failure-time", "Posterior failure-time distribution from a fit");
  failure->add_option("--fit", f.fit, "Output directory of a fit")->required();
  failure->add_option("--out", f.out, "Output directory")->required();
  failure->add_option("--mode", f.mode, "new-unit or in-test")->check(CLI::IsMember({"new-unit", "in-test"}));
  track(failure, f, "unit", f.unit, "Unit id for --mode in-test");
  track(failure, f, "zf", f.zf, "Failure threshold (default: from the dataset)");
  track(failure, f, "seed", f.seed, "Random seed");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kConfigError;
  }

  try {
    return dispatch(app, f, out, err);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const StructuralError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const SamplingError& e) {
    err << "sampling failed: " << e.what() << "\n";
    return kSamplingError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace gpdeg::cli
