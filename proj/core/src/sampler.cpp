#include "gpdeg/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <sstream>
#include <thread>

#include "gpdeg/errors.hpp"
#include "gpdeg/model.hpp"

namespace gpdeg {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_sum_exp(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void add_to(std::vector<double>& acc, std::span<const double> x) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += x[i];
}

std::vector<double> sum(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

bool no_u_turn(std::span<const double> p_sharp_minus, std::span<const double> p_sharp_plus,
               std::span<const double> rho) {
  return dot(p_sharp_plus, rho) > 0 && dot(p_sharp_minus, rho) > 0;
}

// Dual averaging of log step size toward a target acceptance statistic.
class StepSizeAdapter {
 public:
  explicit StepSizeAdapter(double delta) : delta_(delta) {}

  void set_mu(double mu) { mu_ = mu; }
  void restart() {
    counter_ = 0;
    s_bar_ = 0.0;
    x_bar_ = 0.0;
  }

  double learn(double accept_stat) {
    ++counter_;
    accept_stat = std::min(1.0, accept_stat);
    const double eta = 1.0 / (counter_ + kT0);
    s_bar_ = (1.0 - eta) * s_bar_ + eta * (delta_ - accept_stat);
    const double x = mu_ - s_bar_ * std::sqrt(static_cast<double>(counter_)) / kGamma;
    const double x_eta = std::pow(static_cast<double>(counter_), -kKappa);
    x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
    return std::exp(x);
  }

  double final_step_size() const { return std::exp(x_bar_); }

 private:
  static constexpr double kGamma = 0.05;
  static constexpr double kT0 = 10.0;
  static constexpr double kKappa = 0.75;

  double delta_;
  double mu_ = std::log(10.0);
  double counter_ = 0;
  double s_bar_ = 0.0;
  double x_bar_ = 0.0;
};

// Variance estimation over doubling slow windows.
class MetricAdapter {
 public:
  MetricAdapter(std::size_t dim, std::size_t n_warmup, std::size_t init_buffer, std::size_t base_window,
                std::size_t term_buffer)
      : n_warmup_(n_warmup), init_(init_buffer), window_(base_window), term_(term_buffer), mean_(dim), m2_(dim) {
    if (init_ + window_ + term_ > n_warmup_) {
      init_ = static_cast<std::size_t>(0.15 * n_warmup_);
      term_ = static_cast<std::size_t>(0.1 * n_warmup_);
      window_ = n_warmup_ - (init_ + term_);
    }
    enabled_ = n_warmup_ >= 20 && window_ > 0;
    next_window_end_ = init_ + window_ - 1;
  }

  // Records q at the current warmup iteration; true when inv_metric was updated.
  bool learn(std::vector<double>& inv_metric, std::span<const double> q) {
    if (!enabled_) return false;
    if (in_window()) add(q);
    if (window_ends()) {
      next_window();
      const double n = static_cast<double>(count_);
      for (std::size_t i = 0; i < inv_metric.size(); ++i) {
        const double var = m2_[i] / (n - 1.0);
        inv_metric[i] = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0));
      }
      count_ = 0;
      std::fill(mean_.begin(), mean_.end(), 0.0);
      std::fill(m2_.begin(), m2_.end(), 0.0);
      ++counter_;
      return true;
    }
    ++counter_;
    return false;
  }

 private:
  bool in_window() const { return counter_ >= init_ && counter_ < n_warmup_ - term_ && counter_ != n_warmup_; }
  bool window_ends() const { return counter_ == next_window_end_ && counter_ != n_warmup_; }

  void next_window() {
    const std::size_t last = n_warmup_ - term_ - 1;
    if (next_window_end_ == last) return;
    window_ *= 2;
    next_window_end_ = counter_ + window_;
    if (next_window_end_ != last && next_window_end_ + 2 * window_ >= n_warmup_ - term_) next_window_end_ = last;
  }

  void add(std::span<const double> q) {
    ++count_;
    for (std::size_t i = 0; i < q.size(); ++i) {
      const double d = q[i] - mean_[i];
      mean_[i] += d / static_cast<double>(count_);
      m2_[i] += d * (q[i] - mean_[i]);
    }
  }

  std::size_t n_warmup_, init_, window_, term_;
  bool enabled_ = true;
  std::size_t counter_ = 0;
  std::size_t next_window_end_ = 0;
  std::size_t count_ = 0;
  std::vector<double> mean_, m2_;
};

struct Transition {
  double accept_stat = 0.0;
  int depth = 0;
  int n_leapfrog = 0;
  bool divergent = false;
  double energy = 0.0;
};

class Nuts {
 public:
  Nuts(const LogDensity& target, const SamplerConfig& cfg, Rng rng)
      : cfg_(cfg), rng_(std::move(rng)), inv_metric_(target.dimension(), 1.0) {
    grad_fn_ = [&target](std::span<const double> q, std::span<double> g) {
      return target.log_density_gradient(q, g);
    };
  }

  bool initialize(std::vector<double> q) {
    z_.q = std::move(q);
    z_.p.assign(z_.q.size(), 0.0);
    z_.grad.assign(z_.q.size(), 0.0);
    if (!update_gradient(z_)) return false;
    for (double g : z_.grad)
      if (!std::isfinite(g)) return false;
    return true;
  }

  const PhasePoint& state() const { return z_; }
  double step_size() const { return eps_; }
  void set_step_size(double eps) { eps_ = eps; }
  std::vector<double>& inv_metric() { return inv_metric_; }

  // Doubles or halves eps until one leapfrog step's acceptance crosses 0.8.
  void init_step_size() {
    if (!(eps_ > 0.0) || eps_ > 1e7 || !std::isfinite(eps_)) return;
    const PhasePoint start = z_;
    const double log_target = std::log(0.8);
    auto trial = [&] {
      z_ = start;
      draw_momentum();
      const double h0 = hamiltonian(z_, inv_metric_);
      evolve(z_, eps_);
      double h = hamiltonian(z_, inv_metric_);
      if (std::isnan(h)) h = kInf;
      return h0 - h;
    };
    const int direction = trial() > log_target ? 1 : -1;
    for (;;) {
      const double delta_h = trial();
      if (direction == 1 && !(delta_h > log_target)) break;
      if (direction == -1 && !(delta_h < log_target)) break;
      eps_ = direction == 1 ? 2.0 * eps_ : 0.5 * eps_;
      if (eps_ > 1e7) throw SamplingError("step size diverged to infinity while initializing; posterior may be improper");
      if (eps_ == 0.0) throw SamplingError("step size collapsed to zero while initializing");
    }
    z_ = start;
  }

  Transition transition() {
    draw_momentum();
    const std::size_t n = z_.q.size();
    PhasePoint z_fwd = z_, z_bck = z_, z_sample = z_, z_propose = z_;

    std::vector<double> p_sharp(n);
    sharp(z_.p, p_sharp);
    std::vector<double> p_fwd_fwd = z_.p, p_fwd_bck = z_.p, p_bck_fwd = z_.p, p_bck_bck = z_.p;
    std::vector<double> ps_fwd_fwd = p_sharp, ps_fwd_bck = p_sharp, ps_bck_fwd = p_sharp, ps_bck_bck = p_sharp;
    std::vector<double> rho = z_.p;

    double log_sum_weight = 0.0;
    const double h0 = hamiltonian(z_, inv_metric_);
    int n_leapfrog = 0;
    double sum_metro_prob = 0.0;
    divergent_ = false;
    int depth = 0;

    while (depth < cfg_.max_tree_depth) {
      std::vector<double> rho_fwd(n, 0.0), rho_bck(n, 0.0);
      bool valid_subtree = false;
      double log_sum_weight_subtree = -kInf;

      if (rng_.uniform() > 0.5) {
        z_ = z_fwd;
        rho_bck = rho;
        p_bck_fwd = p_fwd_bck;
        ps_bck_fwd = ps_fwd_bck;
        valid_subtree = build_tree(depth, z_propose, ps_fwd_bck, ps_fwd_fwd, rho_fwd, p_fwd_bck, p_fwd_fwd, h0, 1.0,
                                   n_leapfrog, log_sum_weight_subtree, sum_metro_prob);
        z_fwd = z_;
      } else {
        z_ = z_bck;
        rho_fwd = rho;
        p_fwd_bck = p_bck_fwd;
        ps_fwd_bck = ps_bck_fwd;
        valid_subtree = build_tree(depth, z_propose, ps_bck_fwd, ps_bck_bck, rho_bck, p_bck_fwd, p_bck_bck, h0, -1.0,
                                   n_leapfrog, log_sum_weight_subtree, sum_metro_prob);
        z_bck = z_;
      }
      if (!valid_subtree) break;
      ++depth;

      if (log_sum_weight_subtree > log_sum_weight) {
        z_sample = z_propose;
      } else if (rng_.uniform() < std::exp(log_sum_weight_subtree - log_sum_weight)) {
        z_sample = z_propose;
      }
      log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

      rho = sum(rho_bck, rho_fwd);
      bool persist = no_u_turn(ps_bck_bck, ps_fwd_fwd, rho);
      persist = persist && no_u_turn(ps_bck_bck, ps_fwd_bck, sum(rho_bck, p_fwd_bck));
      persist = persist && no_u_turn(ps_bck_fwd, ps_fwd_fwd, sum(rho_fwd, p_bck_fwd));
      if (!persist) break;
    }

    z_ = z_sample;
    Transition t;
    t.depth = depth;
    t.n_leapfrog = n_leapfrog;
    t.accept_stat = n_leapfrog > 0 ? sum_metro_prob / n_leapfrog : 0.0;
    t.divergent = divergent_;
    t.energy = hamiltonian(z_, inv_metric_);
    return t;
  }

 private:
  void draw_momentum() {
    for (std::size_t i = 0; i < z_.p.size(); ++i) z_.p[i] = rng_.normal() / std::sqrt(inv_metric_[i]);
  }

  void sharp(std::span<const double> p, std::span<double> out) const {
    for (std::size_t i = 0; i < p.size(); ++i) out[i] = inv_metric_[i] * p[i];
  }

  bool update_gradient(PhasePoint& z) const {
    try {
      z.lp = grad_fn_(z.q, z.grad);
    } catch (const std::exception&) {
      z.lp = -kInf;
    }
    if (std::isnan(z.lp)) z.lp = -kInf;
    return std::isfinite(z.lp);
  }

  void evolve(PhasePoint& z, double eps) const { leapfrog(z, eps, inv_metric_, grad_fn_); }

  bool build_tree(int depth, PhasePoint& z_propose, std::vector<double>& ps_beg, std::vector<double>& ps_end,
                  std::vector<double>& rho, std::vector<double>& p_beg, std::vector<double>& p_end, double h0,
                  double sign, int& n_leapfrog, double& log_sum_weight, double& sum_metro_prob) {
    if (depth == 0) {
      evolve(z_, sign * eps_);
      ++n_leapfrog;
      double h = hamiltonian(z_, inv_metric_);
      if (std::isnan(h)) h = kInf;
      if (h - h0 > cfg_.max_delta_energy) divergent_ = true;
      log_sum_weight = log_sum_exp(log_sum_weight, h0 - h);
      sum_metro_prob += h0 - h > 0 ? 1.0 : std::exp(h0 - h);
      z_propose = z_;
      sharp(z_.p, ps_beg);
      ps_end = ps_beg;
      add_to(rho, z_.p);
      p_beg = z_.p;
      p_end = p_beg;
      return !divergent_;
    }

    const std::size_t n = z_.q.size();
    std::vector<double> ps_init_end(n), p_init_end(n), rho_init(n, 0.0);
    double log_sum_weight_init = -kInf;
    if (!build_tree(depth - 1, z_propose, ps_beg, ps_init_end, rho_init, p_beg, p_init_end, h0, sign, n_leapfrog,
                    log_sum_weight_init, sum_metro_prob))
      return false;

    PhasePoint z_propose_final = z_;
    std::vector<double> ps_final_beg(n), p_final_beg(n), rho_final(n, 0.0);
    double log_sum_weight_final = -kInf;
    if (!build_tree(depth - 1, z_propose_final, ps_final_beg, ps_end, rho_final, p_final_beg, p_end, h0, sign,
                    n_leapfrog, log_sum_weight_final, sum_metro_prob))
      return false;

    const double log_sum_weight_subtree = log_sum_exp(log_sum_weight_init, log_sum_weight_final);
    log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);
    if (log_sum_weight_final > log_sum_weight_subtree) {
      z_propose = std::move(z_propose_final);
    } else if (rng_.uniform() < std::exp(log_sum_weight_final - log_sum_weight_subtree)) {
      z_propose = std::move(z_propose_final);
    }

    const std::vector<double> rho_subtree = sum(rho_init, rho_final);
    add_to(rho, rho_subtree);
    bool persist = no_u_turn(ps_beg, ps_end, rho_subtree);
    persist = persist && no_u_turn(ps_beg, ps_final_beg, sum(rho_init, p_final_beg));
    persist = persist && no_u_turn(ps_init_end, ps_end, sum(rho_final, p_init_end));
    return persist;
  }

  const SamplerConfig& cfg_;
  Rng rng_;
  GradientFn grad_fn_;
  std::vector<double> inv_metric_;
  PhasePoint z_;
  double eps_ = 1.0;
  bool divergent_ = false;
};

struct ChainOutput {
  bool ok = false;
  std::string error;
  std::vector<double> values;
  std::vector<Transition> transitions;
  std::vector<double> lp;
  double step_size = 0.0;
  std::vector<double> inv_metric;
};

ChainOutput run_chain(const LogDensity& target, const SamplerConfig& cfg, std::size_t chain_id) {
  ChainOutput out;
  Rng chain_rng = Rng(cfg.seed).split(chain_id);
  Rng init_rng = chain_rng.split(1);
  Nuts nuts(target, cfg, chain_rng.split(2));

  bool initialized = false;
  for (int attempt = 0; attempt < 100 && !initialized; ++attempt) {
    try {
      initialized = nuts.initialize(target.initial_point(init_rng));
    } catch (const SamplingError& e) {
      out.error = e.what();
      break;
    }
  }
  if (!initialized) {
    if (out.error.empty()) out.error = "no initial point with finite log density and gradient";
    return out;
  }

  try {
    nuts.init_step_size();
    StepSizeAdapter step_adapter(cfg.target_accept);
    step_adapter.set_mu(std::log(10.0 * nuts.step_size()));
    step_adapter.restart();
    MetricAdapter metric_adapter(target.dimension(), cfg.n_warmup, cfg.init_buffer, cfg.base_window,
                                 cfg.term_buffer);

    for (std::size_t it = 0; it < cfg.n_warmup; ++it) {
      const Transition t = nuts.transition();
      nuts.set_step_size(step_adapter.learn(t.accept_stat));
      if (metric_adapter.learn(nuts.inv_metric(), nuts.state().q)) {
        nuts.init_step_size();
        step_adapter.set_mu(std::log(10.0 * nuts.step_size()));
        step_adapter.restart();
      }
    }
    if (cfg.n_warmup > 0) nuts.set_step_size(step_adapter.final_step_size());
    nuts.set_step_size(nuts.step_size() * cfg.step_size_scale);

    const std::size_t n_out = target.output_names().size();
    out.values.resize(cfg.n_samples * n_out);
    out.transitions.reserve(cfg.n_samples);
    out.lp.reserve(cfg.n_samples);
    for (std::size_t it = 0; it < cfg.n_samples; ++it) {
      out.transitions.push_back(nuts.transition());
      out.lp.push_back(nuts.state().lp);
      target.write_output(nuts.state().q, std::span<double>(out.values).subspan(it * n_out, n_out));
    }
    out.step_size = nuts.step_size();
    out.inv_metric = nuts.inv_metric();
    out.ok = true;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

}  // namespace

void SamplerConfig::validate() const {
  std::vector<std::string> bad;
  if (n_chains < 1) bad.push_back("n_chains: must be at least 1");
  if (n_samples < 1) bad.push_back("n_samples: must be at least 1");
  if (!(target_accept > 0.6 && target_accept < 0.99)) bad.push_back("target_accept: must lie in (0.6, 0.99)");
  if (max_tree_depth < 1 || max_tree_depth > 30) bad.push_back("max_tree_depth: must lie in [1, 30]");
  if (!(step_size_scale > 0.0) || !std::isfinite(step_size_scale)) bad.push_back("step_size_scale: must be positive");
  if (!(max_delta_energy > 0.0)) bad.push_back("max_delta_energy: must be positive");
  if (!bad.empty()) {
    std::ostringstream msg;
    msg << "invalid sampler config";
    for (const auto& b : bad) msg << "\n  " << b;
    throw ConfigError(msg.str());
  }
}

SamplerConfig SamplerConfig::single_unit_default() {
  SamplerConfig c;
  c.n_chains = 4;
  c.n_warmup = 3000;
  c.n_samples = 7000;
  return c;
}

SamplerConfig SamplerConfig::pooled_default() {
  SamplerConfig c;
  c.n_chains = 6;
  c.n_warmup = 1000;
  c.n_samples = 1000;
  return c;
}

bool Draws::has(const std::string& name) const { return std::find(names.begin(), names.end(), name) != names.end(); }

std::size_t Draws::column(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw StructuralError("draws have no column '" + name + "'");
  return static_cast<std::size_t>(it - names.begin());
}

std::vector<double> Draws::column_values(std::size_t col) const {
  std::vector<double> out(n_rows());
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = at(r, col);
  return out;
}

std::vector<double> Draws::column_values(const std::string& name) const { return column_values(column(name)); }

std::vector<std::vector<double>> Draws::by_chain(std::size_t col) const {
  std::vector<std::vector<double>> out(n_chains);
  for (std::size_t r = 0; r < n_rows(); ++r) out[static_cast<std::size_t>(chain[r])].push_back(at(r, col));
  return out;
}

std::size_t Draws::divergence_count() const {
  return static_cast<std::size_t>(std::count(divergent.begin(), divergent.end(), std::uint8_t{1}));
}

double hamiltonian(const PhasePoint& z, std::span<const double> inv_metric) {
  double kinetic = 0.0;
  for (std::size_t i = 0; i < z.p.size(); ++i) kinetic += inv_metric[i] * z.p[i] * z.p[i];
  return -z.lp + 0.5 * kinetic;
}

bool leapfrog(PhasePoint& z, double eps, std::span<const double> inv_metric, const GradientFn& grad_fn) {
  const std::size_t n = z.q.size();
  for (std::size_t i = 0; i < n; ++i) z.p[i] += 0.5 * eps * z.grad[i];
  for (std::size_t i = 0; i < n; ++i) z.q[i] += eps * inv_metric[i] * z.p[i];
  try {
    z.lp = grad_fn(z.q, z.grad);
  } catch (const std::exception&) {
    z.lp = -kInf;
    return false;
  }
  if (std::isnan(z.lp)) z.lp = -kInf;
  for (std::size_t i = 0; i < n; ++i) z.p[i] += 0.5 * eps * z.grad[i];
  return std::isfinite(hamiltonian(z, inv_metric));
}

Draws sample_nuts(const LogDensity& target, const SamplerConfig& config) {
  config.validate();
  const std::size_t n_chains = config.n_chains;
  std::vector<ChainOutput> outputs(n_chains);

  std::size_t n_threads = config.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : config.threads;
  n_threads = std::min(n_threads, n_chains);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c = next++; c < n_chains; c = next++) outputs[c] = run_chain(target, config, c);
  };
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }

  Draws d;
  d.names = target.output_names();
  d.n_per_chain = config.n_samples;
  for (std::size_t c = 0; c < n_chains; ++c) {
    auto& o = outputs[c];
    if (!o.ok) {
      d.failed_chains.push_back("chain " + std::to_string(c + 1) + ": " + o.error);
      continue;
    }
    const int id = static_cast<int>(d.n_chains++);
    d.values.insert(d.values.end(), o.values.begin(), o.values.end());
    for (std::size_t it = 0; it < o.transitions.size(); ++it) {
      const auto& t = o.transitions[it];
      d.chain.push_back(id);
      d.iteration.push_back(static_cast<int>(it + 1));
      d.divergent.push_back(t.divergent ? 1 : 0);
      d.energy.push_back(t.energy);
      d.lp.push_back(o.lp[it]);
      d.accept_stat.push_back(t.accept_stat);
      d.tree_depth.push_back(t.depth);
      d.n_leapfrog.push_back(t.n_leapfrog);
    }
    d.step_size.push_back(o.step_size);
    d.inv_metric.push_back(std::move(o.inv_metric));
  }
  if (d.n_chains == 0) {
    std::string msg = "every chain failed";
    for (const auto& e : d.failed_chains) msg += "\n  " + e;
    throw SamplingError(msg);
  }
  return d;
}

Draws run(const ModelSpec& spec, const Dataset& data, const SamplerConfig& config) {
  const Posterior posterior(spec, data);
  return sample_nuts(posterior, config);
}

}  // namespace gpdeg
