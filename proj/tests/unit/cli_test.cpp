#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gpdeg/cli.hpp"
#include "gpdeg/io.hpp"
#include "gpdeg/manifest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gpdeg;

namespace {

const fs::path kConfigs = GPDEG_CONFIG_DIR;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result gpdeg_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "gpdeg_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::map<std::string, std::string> dir_contents(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) files[e.path().filename().string()] = io::read_file(e.path());
  return files;
}

json read_json(const fs::path& p) { return json::parse(io::read_file(p)); }

// Three units with ten observations each: enough for cross validation, cheap to fit.
fs::path small_pooled_study(const fs::path& dir) {
  io::write_file(dir / "study.toml", R"(
[study]
name = "small_pooled"
n_units = 3
seed = 4
sigma = 0.025
z_f = 0.4
mu = { dist = "normal_lb0", params = [0.40, 0.07] }
nu = 0.21
[study.grid]
kind = "unit_spaced"
n_obs = 10
step = 0.1
)");
  return dir / "study.toml";
}

struct EpochGuard {
  EpochGuard() { setenv("SOURCE_DATE_EPOCH", "1700000000", 1); }
  ~EpochGuard() { unsetenv("SOURCE_DATE_EPOCH"); }
};

}  // namespace

TEST_CASE("simulate reproduces the single-unit recipe") {
  EpochGuard epoch;
  auto dir = scratch("sim_large");
  auto r = gpdeg_run({"simulate", "--config", (kConfigs / "sim_single_large.toml").string(), "--out", dir.string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  Dataset d = io::read_dataset(dir / "data.csv");
  REQUIRE(d.n_units() == 1);
  CHECK(d.units[0].size() == 20);
  auto inc = d.units[0].grid.increments();
  for (double dt : inc) {
    CHECK(dt >= 0.8);
    CHECK(dt <= 1.3);
  }
  auto side = read_json(dir / "data.json");
  CHECK(side["generator"]["mu"] == 10.0);
  CHECK(side["generator"]["nu"] == 1.119);
  CHECK(side["generator"]["sigma"] == 4.0);

  auto manifest = read_json(dir / "manifest.json");
  CHECK(manifest["command"] == "simulate");
  CHECK(manifest["seed"] == 1);
  CHECK(manifest["created"] == "2023-11-14T22:13:20Z");
  CHECK(manifest["config_sha256"] == cli::sha256_file(kConfigs / "sim_single_large.toml"));
  std::set<std::string> listed;
  for (const auto& o : manifest["outputs"]) {
    listed.insert(o["file"].get<std::string>());
    CHECK(o["sha256"] == cli::sha256_file(dir / o["file"].get<std::string>()));
  }
  CHECK(listed == std::set<std::string>{"data.csv", "data.json"});
}

TEST_CASE("repeated seeds give identical files, new seeds new data") {
  EpochGuard epoch;
  auto a = scratch("seed_a"), b = scratch("seed_b"), c = scratch("seed_c");
  const std::string cfg = (kConfigs / "sim_crack_like.toml").string();
  REQUIRE(gpdeg_run({"simulate", "--config", cfg, "--out", a.string(), "--seed", "7"}).code == 0);
  REQUIRE(gpdeg_run({"simulate", "--config", cfg, "--out", b.string(), "--seed", "7"}).code == 0);
  REQUIRE(gpdeg_run({"simulate", "--config", cfg, "--out", c.string(), "--seed", "8"}).code == 0);
  CHECK(dir_contents(a) == dir_contents(b));
  CHECK(dir_contents(a)["data.csv"] != dir_contents(c)["data.csv"]);

  Dataset d = io::read_dataset(a / "data.csv");
  CHECK(d.n_units() == 10);
  REQUIRE(d.z_f.has_value());
  CHECK(*d.z_f == 0.4);
}

TEST_CASE("exit codes separate config, data and usage errors") {
  auto dir = scratch("errors");
  io::write_file(dir / "bad.toml", "[study]\nn_units = 0\nmu = 1.0\nnu = { dist = \"gamma\" }\n");
  auto r = gpdeg_run({"simulate", "--config", (dir / "bad.toml").string(), "--out", (dir / "o").string()});
  CHECK(r.code == cli::kConfigError);
  CHECK(r.err.find("study.nu.params") != std::string::npos);
  CHECK(r.err.find("study.grid") != std::string::npos);

  r = gpdeg_run({"fit", "--data", (dir / "missing.csv").string(), "--out", (dir / "o").string()});
  CHECK(r.code == cli::kDataError);

  io::write_file(dir / "broken.csv", "unit_id,time,y\n1,1,0.3\n1,0.5,0.4\n");
  r = gpdeg_run({"fit", "--data", (dir / "broken.csv").string(), "--out", (dir / "o").string()});
  CHECK(r.code == cli::kDataError);
  CHECK(r.err.find("increasing") != std::string::npos);

  r = gpdeg_run({"fit", "--out", (dir / "o").string()});
  CHECK(r.code == cli::kConfigError);
  r = gpdeg_run({"frobnicate"});
  CHECK(r.code == cli::kConfigError);
  r = gpdeg_run({"fit", "--data", (dir / "broken.csv").string(), "--out", (dir / "o").string(), "--target-accept",
                 "1.5"});
  CHECK(r.code != 0);
}

TEST_CASE("the installed binary reports exit codes to the shell") {
  auto dir = scratch("binary");
  io::write_file(dir / "bad.json", "{\"model\": {\"pooling\": \"sideways\"}}");
  const std::string cmd = std::string("\"") + GPDEG_CLI_PATH + "\" fit --config \"" + (dir / "bad.json").string() +
                          "\" --data x.csv --out \"" + (dir / "o").string() + "\" 2>/dev/null";
  int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == cli::kConfigError);
}

TEST_CASE("prior-check draws 100 paths by default") {
  auto dir = scratch("prior_default");
  auto r = gpdeg_run({"prior-check", "--out", dir.string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  auto rows = io::parse_csv(io::read_file(dir / "ensemble.csv"));
  std::set<std::string> draws;
  for (std::size_t i = 1; i < rows.size(); ++i) draws.insert(rows[i][0]);
  CHECK(draws.size() == 100);
  CHECK(rows.size() == 1 + 100 * 11);
  CHECK(read_json(dir / "ensemble.json")["n_draws"] == 100);
}

namespace {

// Share of paths whose shape never strays more than 10% of the endpoint from
// the straight line through the origin.
double near_linear_share(const fs::path& csv) {
  auto rows = io::parse_csv(io::read_file(csv));
  const auto& h = rows[0];
  const std::size_t ct = std::find(h.begin(), h.end(), "time") - h.begin();
  const std::size_t cz = std::find(h.begin(), h.end(), "z") - h.begin();
  std::map<std::string, std::vector<std::pair<double, double>>> paths;
  for (std::size_t i = 1; i < rows.size(); ++i)
    paths[rows[i][0]].emplace_back(io::parse_number(rows[i][ct]), io::parse_number(rows[i][cz]));
  int linear = 0;
  for (const auto& [id, p] : paths) {
    const auto [t_end, z_end] = p.back();
    double worst = 0.0;
    for (const auto& [t, z] : p) worst = std::max(worst, std::abs(z / z_end - t / t_end));
    if (worst < 0.1) ++linear;
  }
  return double(linear) / double(paths.size());
}

}  // namespace

TEST_CASE("legacy shape-rate priors give near-linear paths") {
  auto legacy = scratch("prior_legacy"), modern = scratch("prior_modern");
  auto r = gpdeg_run({"prior-check", "--out", legacy.string(), "--legacy-shape-rate", "ga(1,0.001)", "--draws",
                      "400"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  REQUIRE(gpdeg_run({"prior-check", "--out", modern.string(), "--config", (kConfigs / "prior_check.toml").string(),
                     "--draws", "400"})
              .code == 0);
  const double legacy_share = near_linear_share(legacy / "ensemble.csv");
  const double modern_share = near_linear_share(modern / "ensemble.csv");
  CHECK(legacy_share > 0.5);
  CHECK(legacy_share > modern_share + 0.2);
  CHECK(gpdeg_run({"prior-check", "--out", legacy.string(), "--legacy-shape-rate", "ga(1)"}).code ==
        cli::kConfigError);
}

TEST_CASE("prior-check with point-mass priors gives identical paths") {
  auto dir = scratch("prior_point");
  io::write_file(dir / "cfg.toml", R"(
[model]
preset = "prior_check"
[model.priors]
mu = 2.0
nu = 1e-8
[grid]
times = [0.5, 1.0, 2.0, 4.0]
[prior_check]
draws = 25
)");
  auto r = gpdeg_run({"prior-check", "--config", (dir / "cfg.toml").string(), "--out", (dir / "o").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  auto rows = io::parse_csv(io::read_file(dir / "o" / "ensemble.csv"));
  CHECK(rows.size() == 1 + 25 * 4);
  const auto& h = rows[0];
  const std::size_t cz = std::find(h.begin(), h.end(), "z") - h.begin();
  for (std::size_t i = 1; i < rows.size(); ++i)
    CHECK(io::parse_number(rows[i][cz]) == doctest::Approx(io::parse_number(rows[(i - 1) % 4 + 1][cz])).epsilon(1e-6));
}

TEST_CASE("fit writes draws, diagnostics and a reproducible summary") {
  EpochGuard epoch;
  auto base = scratch("fit");
  REQUIRE(gpdeg_run({"simulate", "--config", (kConfigs / "sim_single_large.toml").string(), "--out",
                     (base / "data").string()})
              .code == 0);
  const std::vector<std::string> common = {"--data", (base / "data" / "data.csv").string(), "--config",
                                           (kConfigs / "single_unit.toml").string(), "--chains", "2", "--warmup",
                                           "300", "--samples", "300"};
  auto args = [&](const std::string& out, std::vector<std::string> extra) {
    std::vector<std::string> a = {"fit", "--out", (base / out).string()};
    a.insert(a.end(), common.begin(), common.end());
    a.insert(a.end(), extra.begin(), extra.end());
    return a;
  };
  auto r = gpdeg_run(args("a", {"--threads", "1"}));
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.out.find("n_eff") != std::string::npos);
  CHECK(r.out.find("divergent transitions:") != std::string::npos);
  REQUIRE(gpdeg_run(args("b", {"--threads", "2"})).code == 0);
  CHECK(dir_contents(base / "a") == dir_contents(base / "b"));

  Draws d = io::draws_from_csv(io::read_file(base / "a" / "draws.csv"));
  CHECK(d.n_chains == 2);
  CHECK(d.n_per_chain == 300);
  CHECK(d.has("mu"));
  CHECK(d.has("z[1,20]"));
  auto diag = read_json(base / "a" / "diagnostics.json");
  CHECK(diag["n_total"] == 600);
  CHECK(diag["divergences"].is_number_integer());
  const std::string summary = io::read_file(base / "a" / "summary.txt");
  for (const char* p : {"mu ", "nu ", "sigma "}) CHECK(summary.find(p) != std::string::npos);
  CHECK(summary.find("z[") == std::string::npos);

  REQUIRE(gpdeg_run(args("c", {"--seed", "2"})).code == 0);
  CHECK(io::read_file(base / "c" / "draws.csv") != io::read_file(base / "a" / "draws.csv"));
}

namespace {

// The pooled fit is shared by the failure-time cases below.
const fs::path& pooled_fit() {
  static const fs::path base = [] {
    auto dir = scratch("fit_pooled");
    REQUIRE(gpdeg_run({"simulate", "--config", (kConfigs / "sim_crack_like.toml").string(), "--out",
                       (dir / "data").string()})
                .code == 0);
    auto r = gpdeg_run({"fit", "--config", (kConfigs / "complete.toml").string(), "--data",
                        (dir / "data" / "data.csv").string(), "--out", (dir / "fit").string(), "--chains", "4"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    return dir;
  }();
  return base;
}

}  // namespace

TEST_CASE("complete pooling on the crack-like twin converges") {
  const auto& base = pooled_fit();
  auto diag = read_json(base / "fit" / "diagnostics.json");
  for (const auto& p : diag["parameters"]) {
    const std::string name = p["name"];
    if (name.rfind("z[", 0) == 0 || name.rfind("dz[", 0) == 0) continue;
    CAPTURE(name);
    REQUIRE(p["rhat"].is_number());
    CHECK(p["rhat"].get<double>() <= 1.01);
  }
}

TEST_CASE("failure-time new-unit mode writes a single band file") {
  const auto& base = pooled_fit();
  auto out = base / "ft_new";
  auto f = gpdeg_run({"failure-time", "--fit", (base / "fit").string(), "--mode", "new-unit", "--out", out.string()});
  REQUIRE_MESSAGE(f.code == 0, f.err);
  std::set<std::string> files;
  for (const auto& e : fs::directory_iterator(out)) files.insert(e.path().filename().string());
  CHECK(files == std::set<std::string>{"failure.csv", "failure.json", "manifest.json"});
  auto meta = read_json(out / "failure.json");
  CHECK(meta["mode"] == "new-unit");
  CHECK(meta["z_f"] == 0.4);
  auto rows = io::parse_csv(io::read_file(out / "failure.csv"));
  CHECK(rows.size() == 201);
  CHECK(rows[0][0] == "time");
  CHECK(rows[0][2] == "q0.025");
  for (std::size_t c = 1; c < rows[0].size(); ++c) {
    double prev = 0.0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      double v = io::parse_number(rows[i][c]);
      CHECK(v >= prev - 1e-12);
      CHECK(v <= 1.0);
      prev = v;
    }
  }
}

TEST_CASE("failure-time in-test curve starts at the last observation") {
  const auto& base = pooled_fit();
  auto out = base / "ft_unit";
  auto f = gpdeg_run({"failure-time", "--fit", (base / "fit").string(), "--mode", "in-test", "--unit", "3", "--out",
                      out.string()});
  REQUIRE_MESSAGE(f.code == 0, f.err);
  auto meta = read_json(out / "failure.json");
  CHECK(meta["unit_id"] == "3");
  CHECK(meta["t_start"].get<double>() == doctest::Approx(1.2));
  CHECK(meta["times"][0].get<double>() == doctest::Approx(1.2));
}

TEST_CASE("failure-time threshold already crossed gives certain failure") {
  const auto& base = pooled_fit();
  auto out = base / "ft_low";
  auto f = gpdeg_run({"failure-time", "--fit", (base / "fit").string(), "--mode", "in-test", "--unit", "3", "--zf",
                      "0.001", "--out", out.string()});
  REQUIRE_MESSAGE(f.code == 0, f.err);
  auto rows = io::parse_csv(io::read_file(out / "failure.csv"));
  for (std::size_t i = 1; i < rows.size(); ++i)
    for (std::size_t c = 1; c < rows[i].size(); ++c) CHECK(io::parse_number(rows[i][c]) == 1.0);
}

TEST_CASE("failure-time mode mismatches are rejected with a message") {
  const auto& base = pooled_fit();
  auto f = gpdeg_run({"failure-time", "--fit", (base / "fit").string(), "--mode", "in-test", "--unit", "42",
                      "--out", (base / "x").string()});
  CHECK(f.code == cli::kConfigError);
  CHECK(f.err.find("'42'") != std::string::npos);
  f = gpdeg_run({"failure-time", "--fit", (base / "fit").string(), "--mode", "in-test", "--out",
                 (base / "x").string()});
  CHECK(f.code == cli::kConfigError);
}

TEST_CASE("cv builds the comparison table") {
  EpochGuard epoch;
  auto base = scratch("cv");
  auto study = small_pooled_study(base);
  REQUIRE(gpdeg_run({"simulate", "--config", study.string(), "--out", (base / "data").string()}).code == 0);
  const std::string data = (base / "data" / "data.csv").string();
  const std::vector<std::string> quick = {"--chains", "2", "--warmup", "150", "--samples", "150"};

  SUBCASE("one model gives one row") {
    std::vector<std::string> a = {"cv", "--config", (kConfigs / "complete.toml").string(), "--data", data, "--out",
                                  (base / "one").string(), "--method", "sa"};
    a.insert(a.end(), quick.begin(), quick.end());
    auto r = gpdeg_run(a);
    REQUIRE_MESSAGE(r.code == 0, r.err);
    auto rows = io::parse_csv(io::read_file(base / "one" / "comparison.csv"));
    REQUIRE(rows.size() == 2);
    CHECK(rows[1][0] == "complete");
    CHECK(rows[1][1].empty());
    CHECK(rows[1][4] == "1");
    auto fold = read_json(base / "one" / "complete_sa.json");
    CHECK(fold["folds"].size() == 3);
    CHECK(fold["n_refits"] == 3);
  }

  SUBCASE("four models by two methods") {
    std::vector<std::string> a = {"cv", "--data", data, "--out", (base / "four").string()};
    for (const char* m : {"complete", "varying_mu", "varying_nu", "varying_both"}) {
      a.push_back("--config");
      a.push_back((kConfigs / (std::string(m) + ".toml")).string());
    }
    a.insert(a.end(), quick.begin(), quick.end());
    auto r = gpdeg_run(a);
    REQUIRE_MESSAGE(r.code == 0, r.err);
    auto rows = io::parse_csv(io::read_file(base / "four" / "comparison.csv"));
    REQUIRE(rows.size() == 5);
    std::set<std::string> louo_ranks, sa_ranks;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      CHECK_FALSE(rows[i][1].empty());
      CHECK_FALSE(rows[i][2].empty());
      louo_ranks.insert(rows[i][3]);
      sa_ranks.insert(rows[i][4]);
    }
    CHECK(louo_ranks == std::set<std::string>{"1", "2", "3", "4"});
    CHECK(sa_ranks == std::set<std::string>{"1", "2", "3", "4"});
    CHECK(fs::exists(base / "four" / "varying_both_louo.csv"));
    CHECK(fs::exists(base / "four" / "varying_both_sa.json"));
  }

  SUBCASE("duplicate model names are refused") {
    auto r = gpdeg_run({"cv", "--config", (kConfigs / "complete.toml").string(), "--config",
                        (kConfigs / "complete.toml").string(), "--data", data, "--out", (base / "dup").string()});
    CHECK(r.code == cli::kConfigError);
  }
}
