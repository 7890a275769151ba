#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gpdeg/errors.hpp"
#include "gpdeg/model_spec.hpp"
#include "gpdeg/process.hpp"

using namespace gpdeg;

namespace {

struct Moments {
  double mean;
  double var;
  double se_mean;
  double se_var;
};

Moments moments(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double m = 0.0;
  for (double x : xs) m += x;
  m /= n;
  double m2 = 0.0, m4 = 0.0;
  for (double x : xs) {
    const double d = (x - m) * (x - m);
    m2 += d;
    m4 += d * d;
  }
  m2 /= n;
  m4 /= n;
  return {m, m2 * n / (n - 1), std::sqrt(m2 / n), std::sqrt((m4 - m2 * m2) / n)};
}

double two_sample_ks(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

StudyConfig large_recipe(std::uint64_t seed) {
  StudyConfig cfg;
  cfg.name = "single_large";
  cfg.grid.kind = GridRecipe::Kind::RandomIncrements;
  cfg.grid.n_obs = 20;
  cfg.grid.increment_lower = 0.8;
  cfg.grid.increment_upper = 1.3;
  cfg.mu = DistSpec::constant(10.0);
  cfg.nu = DistSpec::constant(1.119);
  cfg.sigma = 4.0;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("time grid") {
  const TimeGrid g{{0.5, 1.7, 2.0}};
  CHECK_NOTHROW(g.validate());
  const auto dt = g.increments();
  CHECK(dt[0] == 0.5);
  CHECK(dt[1] == doctest::Approx(1.2));
  const TimeGrid repeated{{1.0, 1.0}};
  const TimeGrid at_origin{{0.0, 1.0}};
  const TimeGrid empty{};
  CHECK_THROWS_AS(repeated.validate(), DataError);
  CHECK_THROWS_AS(at_origin.validate(), DataError);
  CHECK_THROWS_AS(empty.validate(), DataError);
  CHECK(TimeGrid::unit_spaced(3).times == std::vector<double>{1, 2, 3});
}

TEST_CASE("path mean at unit time and jump variance") {
  const GpParams gp{10.0, 1.119};
  const TimeGrid g{{1.0}};
  Rng rng(1);
  std::vector<double> z1(100000);
  for (auto& v : z1) v = simulate_path(g, gp, rng)[0];
  const auto m = moments(z1);
  CHECK(std::fabs(m.mean - 10.0) < 5 * m.se_mean);
  const double var = 10.0 * 10.0 * 1.119 * 1.119;
  CHECK(var == doctest::Approx(125.2).epsilon(1e-3));
  CHECK(std::fabs(m.var - var) < 5 * m.se_var);
}

TEST_CASE("moment identities for every increment") {
  const GpParams gp{0.4, 0.21};
  const TimeGrid g{{0.1, 0.35, 1.0, 1.05}};
  const auto dt = g.increments();
  Rng rng(2);
  std::vector<std::vector<double>> jumps(dt.size());
  for (int s = 0; s < 50000; ++s) {
    const auto z = simulate_path(g, gp, rng);
    double prev = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      CHECK(z[i] >= prev);
      jumps[i].push_back(z[i] - prev);
      prev = z[i];
    }
  }
  for (std::size_t i = 0; i < dt.size(); ++i) {
    const auto m = moments(jumps[i]);
    CHECK(std::fabs(m.mean - dt[i] * gp.mu) < 5 * m.se_mean);
    CHECK(std::fabs(m.var - dt[i] * gp.mu * gp.mu * gp.nu * gp.nu) < 5 * m.se_var);
  }
}

TEST_CASE("vanishing coefficient of variation gives the mean line") {
  const TimeGrid g = TimeGrid::unit_spaced(20, 0.5);
  Rng rng(3);
  const auto z = simulate_path(g, GpParams{10.0, 1e-6}, rng);
  double worst = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) worst = std::max(worst, std::fabs(z[i] - 10.0 * g.times[i]));
  CHECK(worst < 1e-2 * 10.0 * g.times.back());
}

TEST_CASE("self-similarity of increments") {
  const GpParams gp{2.0, 0.8};
  Rng rng(4);
  std::vector<double> whole(100000), split(100000);
  for (auto& v : whole) v = simulate_path(TimeGrid{{1.7}}, gp, rng)[0];
  for (auto& v : split) v = simulate_path(TimeGrid{{0.6, 1.7}}, gp, rng)[1];
  CHECK(two_sample_ks(whole, split) < 1.628 * std::sqrt(2.0 / 100000));
}

TEST_CASE("measurement noise") {
  Rng rng(5);
  const std::vector<double> z(100000, 3.0);
  CHECK(add_noise(z, 0.0, rng) == z);
  const auto y = add_noise(z, 4.0, rng);
  std::vector<double> e(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) e[i] = y[i] - z[i];
  const auto m = moments(e);
  CHECK(std::fabs(std::sqrt(m.var) - 4.0) < 5 * m.se_var / (2 * 4.0));
  double c = 0.0;
  for (std::size_t i = 1; i < e.size(); ++i) c += (e[i] - m.mean) * (e[i - 1] - m.mean);
  const double rho = c / (e.size() - 1) / m.var;
  CHECK(std::fabs(rho) < 5.0 / std::sqrt(static_cast<double>(e.size())));
}

TEST_CASE("single-unit study recipe") {
  const auto ds = simulate_study(large_recipe(6));
  REQUIRE(ds.n_units() == 1);
  const auto& u = ds.units[0];
  CHECK(u.size() == 20);
  for (double d : u.grid.increments()) {
    CHECK(d >= 0.8);
    CHECK(d <= 1.3);
  }
  CHECK(std::is_sorted(u.z_true.begin(), u.z_true.end()));
  CHECK_NOTHROW(ds.validate());
}

TEST_CASE("crack-like study recipe") {
  StudyConfig cfg;
  cfg.n_units = 10;
  cfg.grid.kind = GridRecipe::Kind::Fixed;
  cfg.grid.times = TimeGrid::unit_spaced(12, 0.1).times;
  cfg.mu = DistSpec::normal_lb0(0.40, 0.07);
  cfg.nu = DistSpec::constant(0.21);
  cfg.sigma = 0.025;
  cfg.z_f = 0.4;
  cfg.seed = 7;
  const auto ds = simulate_study(cfg);
  CHECK(ds.n_units() == 10);
  REQUIRE(ds.z_f.has_value());
  CHECK(*ds.z_f == 0.4);
  double mean_final = 0.0;
  for (const auto& u : ds.units) mean_final += u.z_true.back() / 10;
  CHECK(mean_final > 0.25);
  CHECK(mean_final < 0.7);
}

TEST_CASE("noise-free deterministic unit is linear") {
  auto cfg = large_recipe(8);
  cfg.nu = DistSpec::constant(1e-7);
  cfg.sigma = 0.0;
  const auto ds = simulate_study(cfg);
  const auto& u = ds.units[0];
  for (std::size_t i = 0; i < u.size(); ++i) CHECK(u.y[i] == doctest::Approx(10.0 * u.grid.times[i]).epsilon(1e-6));
}

TEST_CASE("seeded studies are bit identical") {
  const auto a = simulate_study(large_recipe(9));
  const auto b = simulate_study(large_recipe(9));
  const auto c = simulate_study(large_recipe(10));
  CHECK(a.units[0].y == b.units[0].y);
  CHECK(a.units[0].grid.times == b.units[0].grid.times);
  CHECK(a.units[0].y != c.units[0].y);
}

TEST_CASE("study validation lists every offending field") {
  StudyConfig cfg;
  cfg.n_units = 0;
  cfg.grid.kind = GridRecipe::Kind::RandomIncrements;
  cfg.grid.n_obs = 0;
  cfg.mu = DistSpec::normal(1, 1);
  cfg.sigma = -1;
  try {
    cfg.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (const char* field : {"n_units", "grid.n_obs", "grid.increments", "mu", "sigma"}) CHECK(msg.find(field) != std::string::npos);
    CHECK(msg.find("nu:") == std::string::npos);
  }
}

TEST_CASE("dataset editing helpers") {
  const auto ds = simulate_study(large_recipe(11));
  const auto shorter = ds.without_last_observation(0);
  CHECK(shorter.units[0].size() == 19);
  Dataset two = ds;
  two.units.push_back(ds.units[0]);
  two.units[1].id = "2";
  CHECK(two.without_unit(0).units[0].id == "2");
  CHECK_NOTHROW(two.validate());
  two.units[1].id = two.units[0].id;
  CHECK_THROWS_AS(two.validate(), DataError);
}

TEST_CASE("prior predictive endpoint spread") {
  Rng rng(12);
  const auto ens = prior_predictive(prior_check_model(), 10000, TimeGrid::unit_spaced(11), rng);
  REQUIRE(ens.z.size() == 10000);
  CHECK(ens.y.empty());
  int inside = 0;
  for (const auto& z : ens.z) {
    CHECK(std::is_sorted(z.begin(), z.end()));
    inside += z.back() >= 6.0 && z.back() <= 16.0;
  }
  CHECK(inside > 5000);
}

TEST_CASE("point-mass priors give identical identity paths") {
  ModelSpec m = prior_check_model();
  m.priors["mu"] = DistSpec::constant(1.0);
  m.priors["nu"] = DistSpec::constant(1e-7);
  Rng rng(13);
  const auto ens = prior_predictive(m, 20, TimeGrid::unit_spaced(11), rng);
  for (const auto& z : ens.z)
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(z[i] == doctest::Approx(i + 1.0).epsilon(1e-5));
}

TEST_CASE("prior predictive with noise and hierarchies") {
  Rng rng(14);
  const auto ens = prior_predictive(default_model(Pooling::VaryingBoth), 50, TimeGrid::unit_spaced(5), rng, true);
  CHECK(ens.param_names == std::vector<std::string>{"mu_mu", "sigma_mu", "mu_nu", "sigma_nu", "mu", "nu", "sigma"});
  CHECK(ens.y.size() == 50);
  Rng again(14);
  CHECK(prior_predictive(default_model(Pooling::VaryingBoth), 50, TimeGrid::unit_spaced(5), again, true).y == ens.y);
}

TEST_CASE("shape-rate prior predictive is near-linear with wild slopes") {
  Rng rng(15);
  const int n = 20000;
  const auto ens = prior_predictive_shape_rate(DistSpec::gamma(1, 0.001), DistSpec::gamma(1, 0.001), n,
                                               TimeGrid::unit_spaced(11), rng);
  // Coefficient of variation of a unit-time jump is 1/sqrt(shape); below 0.05
  // when shape > 400, which has probability exp(-0.4) under Ga(1, 0.001).
  int smooth = 0;
  std::vector<double> slopes;
  for (const auto& p : ens.params) {
    smooth += 1.0 / std::sqrt(p[0]) < 0.05;
    slopes.push_back(p[0] / p[1]);
  }
  const double frac = static_cast<double>(smooth) / n;
  const double expected = std::exp(-0.4);
  CHECK(std::fabs(frac - expected) < 5 * std::sqrt(expected * (1 - expected) / n));
  CHECK(frac > 0.5);
  // Slope = ratio of two iid exponentials: P(slope <= x) = x / (1 + x).
  std::sort(slopes.begin(), slopes.end());
  CHECK(slopes[n / 2] == doctest::Approx(1.0).epsilon(0.1));
  CHECK(slopes[n * 99 / 100] > 50.0);
}
