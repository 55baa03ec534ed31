#include "binfer/dlvm.hpp"

#include <cmath>
#include <stdexcept>

#include "binfer/harness/metrics.hpp"
#include "binfer/smallmat.hpp"
#include "binfer/tape.hpp"

namespace binfer::dlvm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

Tensor as_row_matrix(const Tensor& x) {
  if (x.rank() == 2) return x;
  if (x.rank() == 1) {
    Tensor r({1, x.size()});
    for (std::size_t i = 0; i < x.size(); ++i) r.at(0, i) = x.data()[i];
    return r;
  }
  throw std::invalid_argument("expected a row or row batch");
}

/// Row sums via matmul with a ones column: [n, d] -> [n, 1].
NodeId row_sum(Tape& tape, NodeId a) {
  std::size_t d = tape.value(a).cols();
  return tape.matmul(a, tape.constant(Tensor::full({d, 1}, 1.0)));
}

struct EncoderHeads {
  NodeId mu;        // [n, d_z]
  NodeId log_sigma; // clamped
  NodeId sigma;
};

EncoderHeads encoder_graph(Tape& tape, const nets::BoundParams& enc, const VAEModel& m,
                           NodeId x) {
  NodeId out = nets::mlp_forward_graph(tape, enc, m.encoder_arch, x);
  EncoderHeads h;
  h.mu = tape.slice_cols(out, 0, m.d_z);
  h.log_sigma = clamp(tape, tape.slice_cols(out, m.d_z, 2 * m.d_z), kLogSigmaMin, kLogSigmaMax);
  h.sigma = tape.exp(h.log_sigma);
  return h;
}

/// Per-row Gaussian log-likelihood of the decoder: [n, 1].
NodeId decoder_loglik_rows(Tape& tape, const nets::BoundParams& dec, const VAEModel& m,
                           NodeId z, NodeId x) {
  NodeId mean = nets::mlp_forward_graph(tape, dec, m.decoder_arch, z);
  NodeId resid = tape.sub(mean, x);
  double s2 = m.lik_sigma * m.lik_sigma;
  double norm = -0.5 * static_cast<double>(m.decoder_arch.output_dim()) *
                (kLog2Pi + 2.0 * std::log(m.lik_sigma));
  return tape.add_const(tape.scale(row_sum(tape, tape.square(resid)), -0.5 / s2), norm);
}

/// Standard-normal prior rows: [n, 1].
NodeId prior_loglik_rows(Tape& tape, NodeId z, std::size_t d_z) {
  return tape.add_const(tape.scale(row_sum(tape, tape.square(z)), -0.5),
                        -0.5 * static_cast<double>(d_z) * kLog2Pi);
}

struct ReparamZ {
  NodeId z;                         // [n, d_z]
  std::vector<double> eps_row_sq;   // per-row sum of eps^2
};

ReparamZ reparam_z(Tape& tape, const EncoderHeads& h, std::size_t n, std::size_t d_z,
                   RngStream& rng) {
  Tensor eps = rng.normal_tensor({n, d_z});
  ReparamZ r;
  r.eps_row_sq.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d_z; ++j) r.eps_row_sq[i] += eps.at(i, j) * eps.at(i, j);
  }
  r.z = tape.add(h.mu, tape.mul(h.sigma, tape.constant(std::move(eps))));
  return r;
}

/// log q(z|x) rows at a reparameterized draw: (z - mu)/sigma is the drawn
/// eps, so the quadratic part is a constant and gradients flow through
/// -log sigma only. Values are exact.
NodeId q_loglik_rows(Tape& tape, const EncoderHeads& h, const ReparamZ& r, std::size_t d_z) {
  std::size_t n = r.eps_row_sq.size();
  Tensor eps_part({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    eps_part.at(i, 0) = -0.5 * r.eps_row_sq[i] - 0.5 * static_cast<double>(d_z) * kLog2Pi;
  }
  return tape.add(tape.neg(row_sum(tape, h.log_sigma)), tape.constant(std::move(eps_part)));
}

/// Analytic KL[q(.|x) || N(0, I)] rows: 1/2 sum (mu^2 + sigma^2 - 1 - 2 log sigma).
NodeId kl_rows(Tape& tape, const EncoderHeads& h) {
  NodeId inner = tape.sub(tape.add(tape.square(h.mu), tape.square(h.sigma)),
                          tape.add_const(tape.scale(h.log_sigma, 2.0), 1.0));
  return tape.scale(row_sum(tape, inner), 0.5);
}

}  // namespace

void PPCAModel::validate() const {
  if (w.rank() != 2 || b.rank() != 1 || b.size() != w.rows()) {
    throw std::invalid_argument("PPCAModel: W must be [d_x, d_z] and b [d_x]");
  }
  if (!(sigma > 0.0)) throw std::invalid_argument("PPCAModel: sigma must be > 0");
}

double ppca_exact_loglik(const PPCAModel& model, const std::vector<double>& x) {
  model.validate();
  const std::size_t dx = model.data_dim(), dz = model.latent_dim();
  if (x.size() != dx) throw std::invalid_argument("ppca_exact_loglik: dimension mismatch");

  // C = W W^T + sigma^2 I
  std::vector<double> cov(dx * dx, 0.0);
  for (std::size_t i = 0; i < dx; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < dz; ++k) s += model.w.at(i, k) * model.w.at(j, k);
      cov[i * dx + j] = s + (i == j ? model.sigma * model.sigma : 0.0);
      cov[j * dx + i] = cov[i * dx + j];
    }
  }
  SmallCholesky chol(std::move(cov), dx);
  std::vector<double> centered(dx);
  for (std::size_t i = 0; i < dx; ++i) centered[i] = x[i] - model.b.data()[i];
  return -0.5 * (static_cast<double>(dx) * kLog2Pi + chol.log_det() + chol.quad_inv(centered));
}

void VAEModel::validate() const {
  encoder_arch.validate();
  decoder_arch.validate();
  if (d_z == 0) throw std::invalid_argument("VAEModel: d_z must be >= 1");
  if (encoder_arch.output_dim() != 2 * d_z) {
    throw std::invalid_argument("VAEModel: encoder must emit 2 d_z outputs");
  }
  if (decoder_arch.input_dim() != d_z) {
    throw std::invalid_argument("VAEModel: decoder input must be d_z");
  }
  if (encoder_arch.input_dim() != decoder_arch.output_dim()) {
    throw std::invalid_argument("VAEModel: encoder input and decoder output dims differ");
  }
  if (!(lik_sigma > 0.0)) throw std::invalid_argument("VAEModel: lik_sigma must be > 0");
}

std::pair<Tensor, Tensor> encode(const VAEModel& m, const Tensor& x) {
  m.validate();
  Tensor out = nets::mlp_forward(m.encoder_params, m.encoder_arch, as_row_matrix(x));
  std::size_t n = out.rows();
  Tensor mu({n, m.d_z}), sigma({n, m.d_z});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m.d_z; ++j) {
      mu.at(i, j) = out.at(i, j);
      double ls = std::min(std::max(out.at(i, m.d_z + j), kLogSigmaMin), kLogSigmaMax);
      sigma.at(i, j) = std::exp(ls);
    }
  }
  return {std::move(mu), std::move(sigma)};
}

Tensor decode(const VAEModel& m, const Tensor& z) {
  m.validate();
  return nets::mlp_forward(m.decoder_params, m.decoder_arch, as_row_matrix(z));
}

double vae_elbo_estimate(const VAEModel& m, const Tensor& x_row, RngStream& rng) {
  m.validate();
  Tensor x = as_row_matrix(x_row);
  Tape tape;
  nets::BoundParams enc = nets::bind_param_leaves(tape, m.encoder_params, false);
  nets::BoundParams dec = nets::bind_param_leaves(tape, m.decoder_params, false);
  NodeId xn = tape.constant(x);
  EncoderHeads h = encoder_graph(tape, enc, m, xn);
  ReparamZ r = reparam_z(tape, h, x.rows(), m.d_z, rng);
  NodeId ll = decoder_loglik_rows(tape, dec, m, r.z, xn);
  NodeId elbo = tape.mean(tape.sub(ll, kl_rows(tape, h)));
  return tape.value(elbo).item();
}

double iwae_bound_estimate(const VAEModel& m, const Tensor& x_row, std::size_t M,
                           RngStream& rng) {
  m.validate();
  if (M == 0) throw std::invalid_argument("iwae_bound_estimate: M must be >= 1");
  Tensor x = as_row_matrix(x_row);
  Tape tape;
  nets::BoundParams enc = nets::bind_param_leaves(tape, m.encoder_params, false);
  nets::BoundParams dec = nets::bind_param_leaves(tape, m.decoder_params, false);
  NodeId xn = tape.constant(x);
  EncoderHeads h = encoder_graph(tape, enc, m, xn);

  NodeId w_mat{};  // [n, M] log-weights
  for (std::size_t s = 0; s < M; ++s) {
    ReparamZ r = reparam_z(tape, h, x.rows(), m.d_z, rng);
    NodeId w = tape.sub(tape.add(decoder_loglik_rows(tape, dec, m, r.z, xn),
                                 prior_loglik_rows(tape, r.z, m.d_z)),
                        q_loglik_rows(tape, h, r, m.d_z));
    w_mat = s == 0 ? w : tape.concat(w_mat, w, 1);
  }
  NodeId bound = tape.mean(tape.add_const(tape.log_sum_exp(w_mat, 1),
                                          -std::log(static_cast<double>(M))));
  return tape.value(bound).item();
}

VaeBoundBuild build_vae_bound(Tape& tape, const VAEModel& m, const Tensor& x,
                              std::size_t iwae_samples, RngStream& rng) {
  m.validate();
  Tensor xr = as_row_matrix(x);
  VaeBoundBuild out;
  out.encoder = nets::bind_param_leaves(tape, m.encoder_params);
  out.decoder = nets::bind_param_leaves(tape, m.decoder_params);
  NodeId xn = tape.constant(xr);
  EncoderHeads h = encoder_graph(tape, out.encoder, m, xn);
  if (iwae_samples == 0) {
    ReparamZ r = reparam_z(tape, h, xr.rows(), m.d_z, rng);
    NodeId ll = decoder_loglik_rows(tape, out.decoder, m, r.z, xn);
    out.bound = tape.mean(tape.sub(ll, kl_rows(tape, h)));
    return out;
  }
  NodeId w_mat{};
  for (std::size_t s = 0; s < iwae_samples; ++s) {
    ReparamZ r = reparam_z(tape, h, xr.rows(), m.d_z, rng);
    NodeId w = tape.sub(tape.add(decoder_loglik_rows(tape, out.decoder, m, r.z, xn),
                                 prior_loglik_rows(tape, r.z, m.d_z)),
                        q_loglik_rows(tape, h, r, m.d_z));
    w_mat = s == 0 ? w : tape.concat(w_mat, w, 1);
  }
  out.bound = tape.mean(tape.add_const(tape.log_sum_exp(w_mat, 1),
                                       -std::log(static_cast<double>(iwae_samples))));
  return out;
}

namespace {

struct JointEval {
  double value = 0.0;
  Tensor grad_z;
};

JointEval log_joint_grad_z(const VAEModel& m, const Tensor& x, const Tensor& z) {
  Tape tape;
  nets::BoundParams dec = nets::bind_param_leaves(tape, m.decoder_params, false);
  NodeId zn = tape.leaf(z);
  NodeId joint = tape.sum(tape.add(decoder_loglik_rows(tape, dec, m, zn, tape.constant(x)),
                                   prior_loglik_rows(tape, zn, m.d_z)));
  JointEval e;
  e.value = tape.value(joint).item();
  std::vector<Tensor> grads = tape.backward(joint);
  e.grad_z = grads[zn.index];
  if (e.grad_z.empty()) e.grad_z = Tensor(z.shape());
  return e;
}

}  // namespace

Tensor langevin_refine(const VAEModel& m, const Tensor& x, const Tensor& z0,
                       const RefineConfig& cfg, RngStream& rng) {
  m.validate();
  Tensor z = as_row_matrix(z0);
  Tensor xr = as_row_matrix(x);
  if (xr.rows() == 1 && z.rows() > 1) {
    Tensor tiled({z.rows(), xr.cols()});
    for (std::size_t i = 0; i < z.rows(); ++i) {
      for (std::size_t j = 0; j < xr.cols(); ++j) tiled.at(i, j) = xr.at(0, j);
    }
    xr = std::move(tiled);
  }
  if (xr.rows() != z.rows()) {
    throw std::invalid_argument("langevin_refine: x and z0 row counts differ");
  }
  for (std::size_t k = 0; k < cfg.steps; ++k) {
    JointEval e = log_joint_grad_z(m, xr, z);
    double noise_scale = std::sqrt(2.0 * cfg.step_size);
    for (std::size_t i = 0; i < z.size(); ++i) {
      z.data()[i] += cfg.step_size * e.grad_z.data()[i] + noise_scale * rng.normal();
    }
    if (!z.all_finite()) throw std::domain_error("langevin_refine: non-finite z");
  }
  return z;
}

std::vector<double> distill_init_gradient(const VAEModel& m, const Tensor& x,
                                          const Tensor& z_refined) {
  m.validate();
  Tensor xr = as_row_matrix(x);
  Tensor zr = as_row_matrix(z_refined);
  if (xr.rows() != zr.rows()) {
    throw std::invalid_argument("distill_init_gradient: row counts differ");
  }
  Tape tape;
  nets::BoundParams enc = nets::bind_param_leaves(tape, m.encoder_params);
  EncoderHeads h = encoder_graph(tape, enc, m, tape.constant(xr));
  // -log q(z*|x) with z* constant: gradients flow through both mu and sigma.
  NodeId diff = tape.sub(tape.constant(zr), h.mu);
  NodeId ratio = tape.div(diff, h.sigma);
  NodeId nll_rows = row_sum(tape, tape.add(h.log_sigma, tape.scale(tape.square(ratio), 0.5)));
  NodeId loss = tape.mean(nll_rows);  // constant d_z/2 log 2pi dropped
  return nets::collect_param_grads(enc, tape.backward(loss), m.encoder_params);
}

TrainResult train_vae(const TrainConfig& cfg, const Tensor& data, RngStream& rng,
                      harness::MetricsSink* metrics) {
  if (data.rank() != 2 || data.rows() == 0) {
    throw std::invalid_argument("train_vae: data must be [n, d_x]");
  }
  VAEModel model;
  model.encoder_arch = cfg.encoder_arch;
  model.decoder_arch = cfg.decoder_arch;
  model.d_z = cfg.d_z;
  model.lik_sigma = cfg.lik_sigma;
  model.encoder_params = nets::init_params(cfg.encoder_arch, rng);
  model.decoder_params = nets::init_params(cfg.decoder_arch, rng);
  model.validate();
  if (model.encoder_arch.input_dim() != data.cols()) {
    throw std::invalid_argument("train_vae: encoder input dim does not match data");
  }

  nets::MinibatchStream batches(data.rows(), cfg.batch_size, rng);
  optim::Sgd enc_sgd(cfg.learning_rate), dec_sgd(cfg.learning_rate);
  optim::Adam enc_adam(cfg.learning_rate), dec_adam(cfg.learning_rate);
  auto enc_step = [&](std::vector<double>& p, const std::vector<double>& g) {
    cfg.optimizer == optim::Kind::kAdam ? enc_adam.step(p, g) : enc_sgd.step(p, g);
  };
  auto dec_step = [&](std::vector<double>& p, const std::vector<double>& g) {
    cfg.optimizer == optim::Kind::kAdam ? dec_adam.step(p, g) : dec_sgd.step(p, g);
  };

  const bool refining = cfg.refine && cfg.refine->steps > 0;

  for (std::size_t t = 1; t <= cfg.steps; ++t) {
    std::vector<std::size_t> idx = batches.next();
    Tensor mb({idx.size(), data.cols()});
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t j = 0; j < data.cols(); ++j) mb.at(i, j) = data.at(idx[i], j);
    }

    double objective_value = 0.0;
    try {
      if (!refining) {
        Tape tape;
        std::size_t m_samples =
            cfg.objective == TrainConfig::Objective::kElbo ? 0 : cfg.iwae_samples;
        VaeBoundBuild b = build_vae_bound(tape, model, mb, m_samples, rng);
        objective_value = tape.value(b.bound).item();
        std::vector<Tensor> grads = tape.backward(b.bound);
        std::vector<double> genc =
            nets::collect_param_grads(b.encoder, grads, model.encoder_params);
        std::vector<double> gdec =
            nets::collect_param_grads(b.decoder, grads, model.decoder_params);
        for (double& g : genc) g = -g;  // ascend
        for (double& g : gdec) g = -g;
        enc_step(model.encoder_params.values, genc);
        dec_step(model.decoder_params.values, gdec);
      } else {
        // Refined training: z0 ~ q, K Langevin steps with stop-gradient,
        // decoder ascends log p(x, z_K), encoder distills toward z_K.
        auto [mu, sigma] = encode(model, mb);
        Tensor z0({idx.size(), model.d_z});
        for (std::size_t i = 0; i < z0.size(); ++i) {
          z0.data()[i] = mu.data()[i] + sigma.data()[i] * rng.normal();
        }
        Tensor zk = langevin_refine(model, mb, z0, *cfg.refine, rng);

        Tape tape;
        nets::BoundParams dec = nets::bind_param_leaves(tape, model.decoder_params);
        NodeId joint = tape.mean(
            tape.add(decoder_loglik_rows(tape, dec, model, tape.constant(zk),
                                         tape.constant(mb)),
                     prior_loglik_rows(tape, tape.constant(zk), model.d_z)));
        objective_value = tape.value(joint).item();
        std::vector<double> gdec =
            nets::collect_param_grads(dec, tape.backward(joint), model.decoder_params);
        for (double& g : gdec) g = -g;
        dec_step(model.decoder_params.values, gdec);

        std::vector<double> genc = distill_init_gradient(model, mb, zk);
        enc_step(model.encoder_params.values, genc);
      }
    } catch (const std::domain_error& e) {
      throw DivergenceError(t, "train_vae diverged at step " + std::to_string(t) + ": " +
                                   e.what());
    }

    for (double v : model.decoder_params.values) {
      if (!std::isfinite(v) || std::fabs(v) > cfg.divergence_linf) {
        throw DivergenceError(t, "train_vae diverged at step " + std::to_string(t));
      }
    }
    if (metrics) metrics->append(t, "train", "bound", objective_value);
  }
  return TrainResult{std::move(model)};
}

}  // namespace binfer::dlvm
