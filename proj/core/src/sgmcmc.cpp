#include "binfer/sgmcmc.hpp"

#include <cmath>
#include <numeric>

#include "binfer/harness/metrics.hpp"

namespace binfer::sgmcmc {

Schedule Schedule::constant(double alpha0) {
  Schedule s;
  s.kind = Kind::kConstant;
  s.alpha0 = alpha0;
  s.validate();
  return s;
}

Schedule Schedule::polynomial(double a, double b, double gamma) {
  Schedule s;
  s.kind = Kind::kPolynomial;
  s.a = a;
  s.b = b;
  s.gamma = gamma;
  s.validate();
  return s;
}

Schedule Schedule::cyclical(double alpha0, std::size_t cycles, std::size_t total_steps) {
  Schedule s;
  s.kind = Kind::kCyclical;
  s.alpha0 = alpha0;
  s.cycles = cycles;
  s.total_steps = total_steps;
  s.validate();
  return s;
}

void Schedule::validate() const {
  switch (kind) {
    case Kind::kConstant:
      if (!(alpha0 > 0.0)) throw std::invalid_argument("schedule: alpha0 must be > 0");
      break;
    case Kind::kPolynomial:
      if (!(a > 0.0)) throw std::invalid_argument("schedule: polynomial a must be > 0");
      if (b < 0.0) throw std::invalid_argument("schedule: polynomial b must be >= 0");
      if (!(gamma > 0.5 && gamma <= 1.0)) {
        throw std::invalid_argument("schedule: polynomial gamma must lie in (0.5, 1]");
      }
      break;
    case Kind::kCyclical:
      if (!(alpha0 > 0.0)) throw std::invalid_argument("schedule: alpha0 must be > 0");
      if (cycles == 0 || total_steps == 0) {
        throw std::invalid_argument("schedule: cyclical needs cycles >= 1 and T >= 1");
      }
      break;
  }
}

double schedule_step(const Schedule& sched, std::size_t t) {
  if (t == 0) throw std::invalid_argument("schedule_step: t is 1-based");
  switch (sched.kind) {
    case Schedule::Kind::kConstant:
      return sched.alpha0;
    case Schedule::Kind::kPolynomial:
      return sched.a * std::pow(sched.b + static_cast<double>(t), -sched.gamma);
    case Schedule::Kind::kCyclical: {
      if (t > sched.total_steps) {
        throw std::invalid_argument("schedule_step: t exceeds cyclical horizon T");
      }
      double period = std::ceil(static_cast<double>(sched.total_steps) /
                                static_cast<double>(sched.cycles));
      double phase = std::fmod(static_cast<double>(t - 1), period);
      return 0.5 * sched.alpha0 * (std::cos(M_PI * phase / period) + 1.0);
    }
  }
  return 0.0;
}

void SGHMCConfig::validate() const {
  // C = 0 is the frictionless (pure Hamiltonian) limit; the injected noise
  // scale sqrt(2 alpha C) vanishes with it.
  if (friction < 0.0) throw std::invalid_argument("sghmc: friction C must be >= 0");
  if (!(mass > 0.0)) throw std::invalid_argument("sghmc: mass must be > 0");
}

void sgld_step(std::span<double> theta, std::span<const double> grad, double alpha,
               RngStream& rng) {
  if (theta.size() != grad.size()) throw std::invalid_argument("sgld_step: size mismatch");
  if (!(alpha > 0.0)) throw std::invalid_argument("sgld_step: alpha must be > 0");
  double noise_scale = std::sqrt(2.0 * alpha);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (!std::isfinite(grad[i])) throw std::domain_error("sgld_step: non-finite gradient");
    theta[i] += -alpha * grad[i] + noise_scale * rng.normal();
  }
}

void sghmc_step(SGHMCState& state, std::span<const double> grad, double alpha,
                const SGHMCConfig& cfg, RngStream& rng) {
  cfg.validate();
  if (state.theta.size() != grad.size() || state.momentum.size() != grad.size()) {
    throw std::invalid_argument("sghmc_step: size mismatch");
  }
  double noise_scale = std::sqrt(2.0 * alpha * cfg.friction);
  double damp = alpha * cfg.friction / cfg.mass;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) throw std::domain_error("sghmc_step: non-finite gradient");
    state.momentum[i] += -alpha * grad[i] - damp * state.momentum[i] + noise_scale * rng.normal();
  }
  for (std::size_t i = 0; i < grad.size(); ++i) {
    state.theta[i] += alpha * state.momentum[i] / cfg.mass;
  }
}

std::vector<double> Chain::mean() const {
  std::vector<double> m(dim, 0.0);
  for (const auto& s : samples) {
    for (std::size_t i = 0; i < dim; ++i) m[i] += s[i];
  }
  for (double& v : m) v /= static_cast<double>(samples.size());
  return m;
}

std::vector<double> Chain::variance() const {
  std::vector<double> m = mean();
  std::vector<double> v(dim, 0.0);
  for (const auto& s : samples) {
    for (std::size_t i = 0; i < dim; ++i) {
      double d = s[i] - m[i];
      v[i] += d * d;
    }
  }
  for (double& x : v) x /= static_cast<double>(samples.size());
  return v;
}

namespace {

double linf_norm(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

}  // namespace

Chain run_chain(const nets::ModelContext& model, const nets::Batch& data,
                const nets::ParamVector& init, const SamplerConfig& cfg, RngStream& rng,
                harness::MetricsSink* metrics) {
  cfg.schedule.validate();
  const std::size_t n_data = data.size();
  const std::size_t burn_in = cfg.burn_in > 0 ? cfg.burn_in : cfg.steps / 5;

  Chain chain;
  chain.dim = init.dim();
  chain.burn_in = burn_in;
  chain.thin = cfg.thin == 0 ? 1 : cfg.thin;
  chain.meta.sampler = cfg.kind == SamplerConfig::Kind::kSgld ? "sgld" : "sghmc";
  chain.meta.seed = rng.seed();
  chain.meta.stream_id = rng.stream_id();

  nets::ParamVector theta = init;
  SGHMCState hmc;
  if (cfg.kind == SamplerConfig::Kind::kSghmc) {
    hmc.theta = theta.values;
    hmc.momentum.assign(theta.dim(), 0.0);
  }

  nets::MinibatchStream batches(std::max<std::size_t>(n_data, 1), cfg.batch_size, rng);

  for (std::size_t t = 1; t <= cfg.steps; ++t) {
    double alpha = schedule_step(cfg.schedule, t);

    double energy = 0.0;
    std::vector<double> grad;
    try {
      if (n_data == 0) {
        // No data: the target is the prior.
        Tape tape;
        nets::BoundParams bound = nets::bind_param_leaves(tape, theta);
        NodeId u = tape.neg(nets::log_prior_graph(tape, bound, model.prior));
        energy = tape.value(u).item();
        grad = nets::collect_param_grads(bound, tape.backward(u), theta);
      } else {
        nets::Batch mb = nets::subset(data, batches.next());
        grad = nets::minibatch_energy_grad(theta, model, mb, n_data, &energy);
      }

      if (cfg.kind == SamplerConfig::Kind::kSgld) {
        sgld_step(theta.values, grad, alpha, rng);
      } else {
        sghmc_step(hmc, grad, alpha, cfg.sghmc, rng);
        theta.values = hmc.theta;
      }
    } catch (const std::domain_error& e) {
      throw ChainDivergence(t, std::string("chain diverged at step ") + std::to_string(t) +
                                   ": " + e.what());
    }

    if (linf_norm(theta.values) > cfg.divergence_linf) {
      throw ChainDivergence(t, "chain diverged at step " + std::to_string(t) +
                                   ": |theta|_inf exceeded " +
                                   std::to_string(cfg.divergence_linf));
    }
    if (metrics) metrics->append(t, "train", "energy", energy);

    bool keep = t >= burn_in && (t - burn_in) % chain.thin == 0;
    if (keep && cfg.schedule.kind == Schedule::Kind::kCyclical &&
        cfg.collect_threshold < 1.0) {
      keep = alpha < cfg.collect_threshold * cfg.schedule.alpha0;
    }
    if (keep) {
      chain.samples.push_back(theta.values);
      chain.step_indices.push_back(t);
    }
  }
  return chain;
}

}  // namespace binfer::sgmcmc
