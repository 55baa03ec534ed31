#include "binfer/score_diffusion.hpp"

#include <cmath>
#include <stdexcept>

#include "binfer/harness/metrics.hpp"
#include "binfer/tape.hpp"

namespace binfer::score {

namespace {

Tensor append_sigma_column(const Tensor& x, const std::vector<double>& sigma_col) {
  Tensor out({x.rows(), x.cols() + 1});
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) out.at(i, j) = x.at(i, j);
    out.at(i, x.cols()) = sigma_col[i];
  }
  return out;
}

double tensor_norm(const Tensor& t) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) s += t.data()[i] * t.data()[i];
  return std::sqrt(s);
}

}  // namespace

void ScoreNet::validate() const {
  arch.validate();
  if (data_dim == 0 || arch.input_dim() != data_dim + 1 || arch.output_dim() != data_dim) {
    throw std::invalid_argument(
        "ScoreNet: architecture must map [d_in + 1] -> [d_in] with the noise channel appended");
  }
  if (params.dim() != arch.param_count()) {
    throw std::invalid_argument("ScoreNet: parameter count mismatch");
  }
}

Tensor score_eval(const ScoreNet& net, const Tensor& x, double sigma) {
  net.validate();
  if (!(sigma > 0.0)) throw std::invalid_argument("score_eval: sigma must be > 0");
  std::vector<double> col(x.rows(), sigma);
  return nets::mlp_forward(net.params, net.arch, append_sigma_column(x, col));
}

void NoiseLadder::validate() const {
  if (sigmas.empty()) throw std::invalid_argument("NoiseLadder: empty");
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    if (!(sigmas[i] > 0.0)) throw std::invalid_argument("NoiseLadder: scales must be positive");
    if (i > 0 && !(sigmas[i] < sigmas[i - 1])) {
      throw std::invalid_argument("NoiseLadder: scales must be strictly decreasing");
    }
  }
}

NoiseLadder NoiseLadder::geometric(double sigma_max, double sigma_min, std::size_t levels) {
  if (levels < 1 || !(sigma_max > sigma_min) || !(sigma_min > 0.0)) {
    throw std::invalid_argument("NoiseLadder::geometric: need sigma_max > sigma_min > 0");
  }
  NoiseLadder l;
  if (levels == 1) {
    l.sigmas = {sigma_max};
  } else {
    double ratio = std::pow(sigma_min / sigma_max, 1.0 / static_cast<double>(levels - 1));
    double s = sigma_max;
    for (std::size_t i = 0; i < levels; ++i) {
      l.sigmas.push_back(s);
      s *= ratio;
    }
  }
  l.validate();
  return l;
}

NodeId dsm_loss_graph(Tape& tape, const nets::BoundParams& params,
                      const nets::Architecture& arch, const Tensor& batch, double sigma,
                      RngStream& rng) {
  if (!(sigma > 0.0)) throw std::invalid_argument("dsm_loss_graph: sigma must be > 0");
  const std::size_t n = batch.rows(), d = batch.cols();
  Tensor eps = rng.normal_tensor({n, d});
  Tensor perturbed({n, d});
  Tensor target({n, d});  // eps / sigma
  for (std::size_t i = 0; i < n * d; ++i) {
    perturbed.data()[i] = batch.data()[i] + sigma * eps.data()[i];
    target.data()[i] = eps.data()[i] / sigma;
  }
  std::vector<double> col(n, sigma);
  NodeId input = tape.constant(append_sigma_column(perturbed, col));
  NodeId s = nets::mlp_forward_graph(tape, params, arch, input);
  NodeId resid = tape.add(s, tape.constant(target));
  return tape.scale(tape.sum(tape.square(resid)), 0.5 / static_cast<double>(n));
}

NodeId ncsn_loss_graph(Tape& tape, const nets::BoundParams& params,
                       const nets::Architecture& arch, const Tensor& batch,
                       const NoiseLadder& ladder, RngStream& rng) {
  ladder.validate();
  NodeId loss{};
  for (std::size_t l = 0; l < ladder.sigmas.size(); ++l) {
    double sigma = ladder.sigmas[l];
    NodeId term =
        tape.scale(dsm_loss_graph(tape, params, arch, batch, sigma, rng), sigma * sigma);
    loss = l == 0 ? term : tape.add(loss, term);
  }
  return loss;
}

double dsm_loss(const ScoreNet& net, const Tensor& batch, double sigma, RngStream& rng) {
  net.validate();
  if (!(sigma > 0.0)) throw std::invalid_argument("dsm_loss: sigma must be > 0");
  if (batch.rank() != 2 || batch.cols() != net.data_dim) {
    throw std::invalid_argument("dsm_loss: batch must be [n, data_dim]");
  }
  Tape tape;
  nets::BoundParams bound = nets::bind_param_leaves(tape, net.params, /*requires_grad=*/false);
  return tape.value(dsm_loss_graph(tape, bound, net.arch, batch, sigma, rng)).item();
}

double ncsn_loss(const ScoreNet& net, const Tensor& batch, const NoiseLadder& ladder,
                 RngStream& rng) {
  net.validate();
  ladder.validate();
  double total = 0.0;
  for (double sigma : ladder.sigmas) {
    total += sigma * sigma * dsm_loss(net, batch, sigma, rng);
  }
  return total;
}

Tensor annealed_langevin_sample(const ScoreFn& s, const NoiseLadder& ladder,
                                std::size_t steps_per_scale, double eps0, Tensor x0,
                                RngStream& rng) {
  ladder.validate();
  if (steps_per_scale == 0) throw std::invalid_argument("annealed_langevin: need steps >= 1");
  double sigma_last = ladder.sigmas.back();
  Tensor x = std::move(x0);
  for (double sigma : ladder.sigmas) {
    double alpha = eps0 * sigma * sigma / (sigma_last * sigma_last);
    double noise_scale = std::sqrt(2.0 * alpha);
    for (std::size_t k = 0; k < steps_per_scale; ++k) {
      Tensor sc = s(x, sigma);
      for (std::size_t i = 0; i < x.size(); ++i) {
        x.data()[i] += alpha * sc.data()[i] + noise_scale * rng.normal();
      }
      if (!x.all_finite()) throw std::domain_error("annealed_langevin: non-finite trajectory");
    }
  }
  return x;
}

void SDEConfig::validate() const {
  if (!(beta_min > 0.0) || !(beta_max > beta_min)) {
    throw std::invalid_argument("SDEConfig: need 0 < beta_min < beta_max");
  }
}

VpMarginal vp_forward_marginal(double t, const SDEConfig& sde) {
  sde.validate();
  if (t < 0.0 || t > 1.0) throw std::invalid_argument("vp_forward_marginal: t must be in [0, 1]");
  double integral = sde.beta_min * t + 0.5 * (sde.beta_max - sde.beta_min) * t * t;
  VpMarginal m;
  m.mean_coef = std::exp(-0.5 * integral);
  m.var = 1.0 - m.mean_coef * m.mean_coef;
  return m;
}

Tensor vp_forward_simulate(const Tensor& x0, std::size_t n_steps, const SDEConfig& sde,
                           RngStream& rng) {
  sde.validate();
  if (n_steps == 0) throw std::invalid_argument("vp_forward_simulate: need steps >= 1");
  double dt = 1.0 / static_cast<double>(n_steps);
  Tensor x = x0;
  for (std::size_t k = 0; k < n_steps; ++k) {
    double t = static_cast<double>(k) * dt;
    double beta = sde.beta(t);
    double diffusion = std::sqrt(beta * dt);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x.data()[i] += -0.5 * beta * x.data()[i] * dt + diffusion * rng.normal();
    }
  }
  return x;
}

Tensor pc_sample(const TimeScoreFn& s, const SDEConfig& sde, const PcConfig& cfg,
                 std::size_t n_paths, std::size_t dim, RngStream& rng) {
  sde.validate();
  if (cfg.n_steps == 0) throw std::invalid_argument("pc_sample: need steps >= 1");
  Tensor x = rng.normal_tensor({n_paths, dim});
  double dt = (1.0 - cfg.t_end) / static_cast<double>(cfg.n_steps);
  for (std::size_t k = 0; k < cfg.n_steps; ++k) {
    double t = 1.0 - static_cast<double>(k) * dt;
    double beta = sde.beta(t);

    // Predictor: one reverse-time Euler-Maruyama step.
    Tensor sc = s(x, t);
    double diffusion = std::sqrt(beta * dt);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x.data()[i] += dt * (0.5 * beta * x.data()[i] + beta * sc.data()[i]) +
                     diffusion * rng.normal();
    }
    if (!x.all_finite()) throw std::domain_error("pc_sample: non-finite predictor state");

    // Corrector: Langevin at the new time with the SNR step rule.
    double t_next = t - dt;
    for (std::size_t c = 0; c < cfg.corrector_steps; ++c) {
      Tensor grad = s(x, t_next);
      Tensor z = rng.normal_tensor({n_paths, dim});
      double gn = tensor_norm(grad), zn = tensor_norm(z);
      if (gn < 1e-12) break;
      double alpha = 2.0 * (cfg.snr * zn / gn) * (cfg.snr * zn / gn);
      double nscale = std::sqrt(2.0 * alpha);
      for (std::size_t i = 0; i < x.size(); ++i) {
        x.data()[i] += alpha * grad.data()[i] + nscale * z.data()[i];
      }
      if (!x.all_finite()) throw std::domain_error("pc_sample: non-finite corrector state");
    }
  }
  return x;
}

TimeScoreFn net_time_score(const ScoreNet& net, const SDEConfig& sde) {
  net.validate();
  sde.validate();
  return [&net, sde](const Tensor& x, double t) {
    VpMarginal m = vp_forward_marginal(t, sde);
    return score_eval(net, x, std::sqrt(std::max(m.var, 1e-12)));
  };
}

ScoreNet train_score_ncsn(const TrainConfig& cfg, const Tensor& data,
                          const NoiseLadder& ladder, RngStream& rng,
                          harness::MetricsSink* metrics) {
  ladder.validate();
  if (data.rank() != 2 || data.rows() == 0) {
    throw std::invalid_argument("train_score_ncsn: data must be [n, d]");
  }
  ScoreNet net{cfg.arch, nets::init_params(cfg.arch, rng), data.cols()};
  net.validate();

  nets::MinibatchStream batches(data.rows(), cfg.batch_size, rng);
  // One scale per step. The DSM target noise is 1/sigma per sample, so the
  // smallest scales need most of the sample budget: steps are allocated
  // proportionally to 1/sigma^2 (5% floor per scale) by a deterministic
  // deficit scheduler. Per-scale optimizer states keep the sigma^2 loss
  // weights from starving the small scales inside a shared normalizer; the
  // net fits every scale exactly at the joint optimum, so neither choice
  // moves the fixed point. Polyak tail-averaging then grinds the noisy
  // targets down to the statistical rate.
  optim::Sgd sgd(cfg.learning_rate);
  std::vector<optim::Adam> adams(ladder.sigmas.size(), optim::Adam(cfg.learning_rate));
  std::vector<double> share(ladder.sigmas.size());
  {
    double total = 0.0;
    for (std::size_t l = 0; l < share.size(); ++l) {
      share[l] = 1.0 / (ladder.sigmas[l] * ladder.sigmas[l]);
      total += share[l];
    }
    double floor_share = 0.05, renorm = 0.0;
    for (double& v : share) {
      v = std::max(v / total, floor_share);
      renorm += v;
    }
    for (double& v : share) v /= renorm;
  }
  std::vector<double> scheduled(ladder.sigmas.size(), 0.0);
  std::vector<double> avg(net.params.dim(), 0.0);
  std::size_t avg_from = cfg.steps - cfg.steps / 2, avg_count = 0;

  for (std::size_t t = 1; t <= cfg.steps; ++t) {
    double lr = cfg.learning_rate;
    if (cfg.cosine_decay) {
      double frac = static_cast<double>(t - 1) / static_cast<double>(cfg.steps);
      lr = cfg.learning_rate * (0.02 + 0.98 * 0.5 * (1.0 + std::cos(M_PI * frac)));
      sgd.set_lr(lr);
    }
    std::vector<std::size_t> idx = batches.next();
    Tensor mb({idx.size(), data.cols()});
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t j = 0; j < data.cols(); ++j) mb.at(i, j) = data.at(idx[i], j);
    }
    double loss_value = 0.0;
    try {
      Tape tape;
      nets::BoundParams bound = nets::bind_param_leaves(tape, net.params);
      // largest-deficit pick: deterministic and proportional to `share`
      std::size_t scale_idx = 0;
      double best = -1e300;
      for (std::size_t l = 0; l < ladder.sigmas.size(); ++l) {
        double deficit = share[l] * static_cast<double>(t) - scheduled[l];
        if (deficit > best) {
          best = deficit;
          scale_idx = l;
        }
      }
      scheduled[scale_idx] += 1.0;
      double sigma = ladder.sigmas[scale_idx];
      NodeId loss = tape.scale(dsm_loss_graph(tape, bound, net.arch, mb, sigma, rng),
                               sigma * sigma);
      loss_value = tape.value(loss).item();
      std::vector<double> grad = nets::collect_param_grads(bound, tape.backward(loss),
                                                           net.params);
      if (cfg.optimizer == optim::Kind::kAdam) {
        adams[scale_idx].set_lr(lr);
        adams[scale_idx].step(net.params.values, grad);
      } else {
        sgd.set_lr(lr / (sigma * sigma));
        sgd.step(net.params.values, grad);
      }
    } catch (const std::domain_error& e) {
      throw DivergenceError(t, "train_score_ncsn diverged at step " + std::to_string(t) +
                                   ": " + e.what());
    }
    if (cfg.tail_average && t >= avg_from) {
      for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += net.params.values[i];
      ++avg_count;
    }
    if (metrics) metrics->append(t, "train", "ncsn_loss", loss_value);
  }
  if (avg_count > 0) {
    for (std::size_t i = 0; i < avg.size(); ++i) {
      net.params.values[i] = avg[i] / static_cast<double>(avg_count);
    }
  }
  return net;
}

ScoreNet train_score_vp(const TrainConfig& cfg, const Tensor& data, const SDEConfig& sde,
                        RngStream& rng, harness::MetricsSink* metrics) {
  sde.validate();
  if (data.rank() != 2 || data.rows() == 0) {
    throw std::invalid_argument("train_score_vp: data must be [n, d]");
  }
  const std::size_t d = data.cols();
  ScoreNet net{cfg.arch, nets::init_params(cfg.arch, rng), d};
  net.validate();

  nets::MinibatchStream batches(data.rows(), cfg.batch_size, rng);
  optim::Sgd sgd(cfg.learning_rate);
  optim::Adam adam(cfg.learning_rate);
  std::vector<double> avg(net.params.dim(), 0.0);
  std::size_t avg_from = cfg.steps - cfg.steps / 2, avg_count = 0;

  for (std::size_t t = 1; t <= cfg.steps; ++t) {
    if (cfg.cosine_decay) {
      double frac = static_cast<double>(t - 1) / static_cast<double>(cfg.steps);
      double lr = cfg.learning_rate * (0.02 + 0.98 * 0.5 * (1.0 + std::cos(M_PI * frac)));
      sgd.set_lr(lr);
      adam.set_lr(lr);
    }
    std::vector<std::size_t> idx = batches.next();
    const std::size_t n = idx.size();

    // Per-row time draw, closed-form perturbation, weight v(t) folded in as
    // sqrt(v) on the residual.
    Tensor perturbed({n, d + 1});
    Tensor target({n, d});
    Tensor row_weight_sqrt({n, d});
    for (std::size_t i = 0; i < n; ++i) {
      double ti = cfg.t_min + (1.0 - cfg.t_min) * rng.uniform();
      VpMarginal m = vp_forward_marginal(ti, sde);
      double sd = std::sqrt(m.var);
      for (std::size_t j = 0; j < d; ++j) {
        double eps = rng.normal();
        perturbed.at(i, j) = m.mean_coef * data.at(idx[i], j) + sd * eps;
        target.at(i, j) = eps / sd;
        row_weight_sqrt.at(i, j) = sd;
      }
      perturbed.at(i, d) = sd;
    }

    double loss_value = 0.0;
    try {
      Tape tape;
      nets::BoundParams bound = nets::bind_param_leaves(tape, net.params);
      NodeId sn = nets::mlp_forward_graph(tape, bound, net.arch, tape.constant(perturbed));
      NodeId resid = tape.add(sn, tape.constant(target));
      NodeId weighted = tape.mul(resid, tape.constant(row_weight_sqrt));
      NodeId loss = tape.scale(tape.sum(tape.square(weighted)), 0.5 / static_cast<double>(n));
      loss_value = tape.value(loss).item();
      std::vector<double> grad = nets::collect_param_grads(bound, tape.backward(loss),
                                                           net.params);
      if (cfg.optimizer == optim::Kind::kAdam) {
        adam.step(net.params.values, grad);
      } else {
        sgd.step(net.params.values, grad);
      }
    } catch (const std::domain_error& e) {
      throw DivergenceError(t, "train_score_vp diverged at step " + std::to_string(t) + ": " +
                                   e.what());
    }
    if (cfg.tail_average && t >= avg_from) {
      for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += net.params.values[i];
      ++avg_count;
    }
    if (metrics) metrics->append(t, "train", "vp_loss", loss_value);
  }
  if (avg_count > 0) {
    for (std::size_t i = 0; i < avg.size(); ++i) {
      net.params.values[i] = avg[i] / static_cast<double>(avg_count);
    }
  }
  return net;
}

}  // namespace binfer::score
