#include "binfer/vi.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "binfer/harness/metrics.hpp"
#include "binfer/smallmat.hpp"

namespace binfer::vi {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double softplus_value(double x) {
  double r = x > 0.0 ? x : 0.0;
  return r + std::log1p(std::exp(x - 2.0 * r));
}

Tensor block_of(const std::vector<double>& flat, const nets::ParamBlock& blk) {
  std::vector<double> v(flat.begin() + static_cast<std::ptrdiff_t>(blk.offset),
                        flat.begin() + static_cast<std::ptrdiff_t>(blk.offset + blk.size()));
  return Tensor::from(std::move(v), blk.shape);
}

// Non-owning view so estimates over an existing DatasetTarget never copy the
// dataset into a fresh variant.
struct TargetView {
  const DatasetTarget* dataset = nullptr;
  const DensityTarget* density = nullptr;
};

TargetView view_of(const Target& target) {
  if (const auto* ds = std::get_if<DatasetTarget>(&target)) return {ds, nullptr};
  return {nullptr, &std::get<DensityTarget>(target)};
}

std::vector<nets::ParamBlock> target_layout(const TargetView& target) {
  if (target.dataset) {
    return nets::make_params(target.dataset->model.arch).layout;
  }
  const DensityTarget& dt = *target.density;
  if (dt.dim == 0 || !dt.log_density) {
    throw std::invalid_argument("DensityTarget: dim and log_density required");
  }
  return {{"theta", 0, {1, dt.dim}}};
}

// Variational parameters bound to one tape: per-block mu/rho leaves plus the
// softplus sigma nodes.
struct MfGraph {
  std::vector<nets::ParamBlock> layout;
  std::vector<NodeId> mu, rho, sigma;
  std::size_t dim = 0;
};

MfGraph bind_mf(Tape& tape, const MeanFieldGaussian& q,
                std::vector<nets::ParamBlock> layout, bool requires_grad) {
  MfGraph g;
  g.layout = std::move(layout);
  for (const nets::ParamBlock& blk : g.layout) {
    Tensor mu_t = block_of(q.mu, blk);
    Tensor rho_t = block_of(q.rho, blk);
    NodeId mu = requires_grad ? tape.leaf(std::move(mu_t)) : tape.constant(std::move(mu_t));
    NodeId rho = requires_grad ? tape.leaf(std::move(rho_t)) : tape.constant(std::move(rho_t));
    g.mu.push_back(mu);
    g.rho.push_back(rho);
    g.sigma.push_back(softplus(tape, rho));
    g.dim += blk.size();
  }
  return g;
}

struct ReparamDraw {
  nets::BoundParams theta;
  double eps_sq_sum = 0.0;
};

ReparamDraw draw_theta(Tape& tape, const MfGraph& g, RngStream& rng) {
  ReparamDraw d;
  for (std::size_t b = 0; b < g.layout.size(); ++b) {
    Tensor eps = rng.normal_tensor(g.layout[b].shape);
    for (std::size_t i = 0; i < eps.size(); ++i) d.eps_sq_sum += eps.data()[i] * eps.data()[i];
    NodeId eps_node = tape.constant(std::move(eps));
    d.theta.blocks.push_back(tape.add(g.mu[b], tape.mul(g.sigma[b], eps_node)));
  }
  return d;
}

// Analytic KL[q || N(0, tau^2 I)] as a tape expression over mu/rho leaves:
// sum_i [ln tau - ln sigma_i + (sigma_i^2 + mu_i^2) / (2 tau^2) - 1/2].
NodeId kl_graph(Tape& tape, const MfGraph& g, double tau) {
  NodeId total{};
  bool first = true;
  double c = std::log(tau) - 0.5;
  for (std::size_t b = 0; b < g.layout.size(); ++b) {
    NodeId quad = tape.scale(tape.add(tape.square(g.sigma[b]), tape.square(g.mu[b])),
                             1.0 / (2.0 * tau * tau));
    NodeId term = tape.sum(tape.add_const(tape.sub(quad, tape.log(g.sigma[b])), c));
    total = first ? term : tape.add(total, term);
    first = false;
  }
  return total;
}

// H[q] = sum log sigma_i + d/2 (1 + ln 2 pi).
NodeId entropy_graph(Tape& tape, const MfGraph& g) {
  NodeId total{};
  bool first = true;
  for (std::size_t b = 0; b < g.layout.size(); ++b) {
    NodeId term = tape.sum(tape.log(g.sigma[b]));
    total = first ? term : tape.add(total, term);
    first = false;
  }
  return tape.add_const(total, 0.5 * static_cast<double>(g.dim) * (1.0 + kLog2Pi));
}

// log q(theta) at a reparameterized draw. (theta - mu) / sigma is the drawn
// eps identically in phi, so the quadratic part enters as a constant and the
// phi-gradient flows only through -sum log sigma. The value is exact.
NodeId log_q_graph(Tape& tape, const MfGraph& g, const ReparamDraw& d) {
  NodeId total{};
  bool first = true;
  for (std::size_t b = 0; b < g.layout.size(); ++b) {
    NodeId term = tape.neg(tape.sum(tape.log(g.sigma[b])));
    total = first ? term : tape.add(total, term);
    first = false;
  }
  return tape.add_const(total,
                        -0.5 * d.eps_sq_sum - 0.5 * static_cast<double>(g.dim) * kLog2Pi);
}

// log ptilde(theta): joint log p(D|theta) p(theta) for dataset targets (with
// the minibatch likelihood scaled by N/B), or the user density.
NodeId log_ptilde_graph(Tape& tape, const TargetView& target, const ReparamDraw& d,
                        const nets::Batch* minibatch, std::size_t dataset_size) {
  if (const auto* ds = target.dataset) {
    const nets::Batch& mb = minibatch ? *minibatch : ds->data;
    std::size_t n = dataset_size ? dataset_size : ds->data.size();
    NodeId ll = nets::log_likelihood_graph(tape, d.theta, ds->model.arch,
                                           ds->model.likelihood, mb);
    double lik_scale = static_cast<double>(n) / static_cast<double>(mb.size());
    NodeId prior = nets::log_prior_graph(tape, d.theta, ds->model.prior);
    return tape.add(tape.scale(ll, lik_scale), prior);
  }
  return target.density->log_density(tape, d.theta.blocks[0]);
}

NodeId elbo_graph(Tape& tape, const MfGraph& g, const TargetView& target,
                  const nets::Batch* minibatch, std::size_t dataset_size,
                  std::size_t mc_samples, RngStream& rng) {
  if (mc_samples == 0) throw std::invalid_argument("elbo: mc_samples must be >= 1");
  NodeId acc{};
  for (std::size_t m = 0; m < mc_samples; ++m) {
    ReparamDraw d = draw_theta(tape, g, rng);
    NodeId term;
    if (const auto* ds = target.dataset) {
      const nets::Batch& mb = minibatch ? *minibatch : ds->data;
      std::size_t n = dataset_size ? dataset_size : ds->data.size();
      NodeId ll = nets::log_likelihood_graph(tape, d.theta, ds->model.arch,
                                             ds->model.likelihood, mb);
      term = tape.scale(ll, static_cast<double>(n) / static_cast<double>(mb.size()));
    } else {
      term = log_ptilde_graph(tape, target, d, nullptr, 0);
    }
    acc = m == 0 ? term : tape.add(acc, term);
  }
  NodeId avg = tape.scale(acc, 1.0 / static_cast<double>(mc_samples));
  if (target.dataset) {
    return tape.sub(avg, kl_graph(tape, g, target.dataset->model.prior.tau));
  }
  return tape.add(avg, entropy_graph(tape, g));
}

NodeId alpha_graph(Tape& tape, const MfGraph& g, const TargetView& target, double alpha,
                   std::size_t mc_samples, const nets::Batch* minibatch,
                   std::size_t dataset_size, RngStream& rng) {
  if (mc_samples == 0) throw std::invalid_argument("alpha bound: mc_samples must be >= 1");
  std::vector<NodeId> w;
  w.reserve(mc_samples);
  for (std::size_t m = 0; m < mc_samples; ++m) {
    ReparamDraw d = draw_theta(tape, g, rng);
    NodeId lp = log_ptilde_graph(tape, target, d, minibatch, dataset_size);
    w.push_back(tape.sub(lp, log_q_graph(tape, g, d)));
  }
  NodeId ws = tape.stack(w);
  if (alpha == 1.0) return tape.mean(ws);
  double one_minus = 1.0 - alpha;
  NodeId lse = tape.log_sum_exp(tape.scale(ws, one_minus), 0);
  return tape.scale(tape.add_const(lse, -std::log(static_cast<double>(mc_samples))),
                    1.0 / one_minus);
}

}  // namespace

std::vector<double> MeanFieldGaussian::sigma() const {
  std::vector<double> s(rho.size());
  for (std::size_t i = 0; i < rho.size(); ++i) s[i] = softplus_value(rho[i]);
  return s;
}

double MeanFieldGaussian::log_density(const std::vector<double>& theta) const {
  if (theta.size() != dim()) throw std::invalid_argument("log_density: dimension mismatch");
  double lp = -0.5 * static_cast<double>(dim()) * kLog2Pi;
  for (std::size_t i = 0; i < dim(); ++i) {
    double s = softplus_value(rho[i]);
    double z = (theta[i] - mu[i]) / s;
    lp += -std::log(s) - 0.5 * z * z;
  }
  return lp;
}

double MeanFieldGaussian::rho_for_sigma(double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("rho_for_sigma: sigma must be > 0");
  return std::log(std::expm1(sigma));
}

MeanFieldGaussian MeanFieldGaussian::init(std::size_t dim, double mu0, double sigma0) {
  MeanFieldGaussian q;
  q.mu.assign(dim, mu0);
  q.rho.assign(dim, rho_for_sigma(sigma0));
  return q;
}

void LowRankGaussian::validate() const {
  if (lfac.rank() != 2 || lfac.rows() != dim() || diag.size() != dim()) {
    throw std::invalid_argument("LowRankGaussian: inconsistent shapes");
  }
  for (double d : diag) {
    if (!(d > 0.0)) throw std::invalid_argument("LowRankGaussian: diag entries must be > 0");
  }
}

double LowRankGaussian::log_density(const std::vector<double>& theta) const {
  validate();
  if (theta.size() != dim()) throw std::invalid_argument("log_density: dimension mismatch");
  const std::size_t d = dim(), r = rank();

  // u = theta - mu, scaled by D^-1.
  std::vector<double> u(d), dinv_u(d);
  for (std::size_t i = 0; i < d; ++i) {
    u[i] = theta[i] - mu[i];
    dinv_u[i] = u[i] / diag[i];
  }

  // Capacitance: C = I_r + L^T D^-1 L.
  std::vector<double> cap(r * r, 0.0);
  for (std::size_t a = 0; a < r; ++a) {
    for (std::size_t b = 0; b <= a; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += lfac.at(i, a) * lfac.at(i, b) / diag[i];
      cap[a * r + b] = s + (a == b ? 1.0 : 0.0);
      cap[b * r + a] = cap[a * r + b];
    }
  }
  SmallCholesky chol(cap, r);

  // Quadratic form via Woodbury:
  // u^T Sigma^-1 u = u^T D^-1 u - (L^T D^-1 u)^T C^-1 (L^T D^-1 u).
  std::vector<double> lt_dinv_u(r, 0.0);
  for (std::size_t a = 0; a < r; ++a) {
    for (std::size_t i = 0; i < d; ++i) lt_dinv_u[a] += lfac.at(i, a) * dinv_u[i];
  }
  std::vector<double> solved = chol.solve(lt_dinv_u);
  double quad = 0.0, log_det_d = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    quad += u[i] * dinv_u[i];
    log_det_d += std::log(diag[i]);
  }
  for (std::size_t a = 0; a < r; ++a) quad -= lt_dinv_u[a] * solved[a];

  // log det Sigma = log det D + log det C (matrix determinant lemma).
  double log_det = log_det_d + chol.log_det();
  return -0.5 * (static_cast<double>(d) * kLog2Pi + log_det + quad);
}

MfDraw mf_sample(const MeanFieldGaussian& q, RngStream& rng) {
  MfDraw d;
  d.theta.resize(q.dim());
  d.eps.resize(q.dim());
  for (std::size_t i = 0; i < q.dim(); ++i) {
    d.eps[i] = rng.normal();
    d.theta[i] = q.mu[i] + softplus_value(q.rho[i]) * d.eps[i];
  }
  return d;
}

double gaussian_kl(const MeanFieldGaussian& q, const nets::PriorConfig& prior) {
  prior.validate();
  double tau = prior.tau;
  double kl = 0.0;
  for (std::size_t i = 0; i < q.dim(); ++i) {
    double s = softplus_value(q.rho[i]);
    kl += std::log(tau / s) + (s * s + q.mu[i] * q.mu[i]) / (2.0 * tau * tau) - 0.5;
  }
  return kl;
}

std::vector<double> lowrank_sample(const LowRankGaussian& q, RngStream& rng) {
  q.validate();
  const std::size_t d = q.dim(), r = q.rank();
  std::vector<double> xi(r), theta(q.mu);
  for (std::size_t a = 0; a < r; ++a) xi[a] = rng.normal();
  for (std::size_t i = 0; i < d; ++i) {
    double acc = 0.0;
    for (std::size_t a = 0; a < r; ++a) acc += q.lfac.at(i, a) * xi[a];
    theta[i] += acc + std::sqrt(q.diag[i]) * rng.normal();
  }
  return theta;
}

void AlphaConfig::validate() const {
  if (alpha == 1.0) {
    throw std::invalid_argument("alpha bound: alpha = 1 is the ELBO; use the elbo objective");
  }
  if (mc_samples == 0) throw std::invalid_argument("alpha bound: mc_samples must be >= 1");
}

namespace {

// Plain-math bound value and (mu, rho) gradient for a density target with a
// log_density_plain twin. Mathematically identical to the tape path
// (unit-tested against it); exists because the small-alpha objective needs
// orders of magnitude more draws than tape construction can afford.
struct FastBoundEval {
  double value = 0.0;
  std::vector<double> grad_mu, grad_rho;
};

FastBoundEval fast_density_bound(const MeanFieldGaussian& q, const DensityTarget& target,
                                 ViConfig::Objective objective, double alpha,
                                 std::size_t mc_samples, RngStream& rng) {
  const std::size_t d = q.dim(), m_draws = mc_samples;
  FastBoundEval out;
  out.grad_mu.assign(d, 0.0);
  out.grad_rho.assign(d, 0.0);

  std::vector<double> sigma(d), sp_prime(d);
  for (std::size_t i = 0; i < d; ++i) {
    sigma[i] = softplus_value(q.rho[i]);
    sp_prime[i] = 1.0 / (1.0 + std::exp(-q.rho[i]));  // d sigma / d rho
  }

  std::vector<double> w(m_draws);
  std::vector<double> eps(m_draws * d), glp(m_draws * d);
  std::vector<double> theta(d), grad_theta(d);
  double log_sigma_sum = 0.0;
  for (std::size_t i = 0; i < d; ++i) log_sigma_sum += std::log(sigma[i]);

  for (std::size_t m = 0; m < m_draws; ++m) {
    double eps_sq = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      double e = rng.normal();
      eps[m * d + i] = e;
      theta[i] = q.mu[i] + sigma[i] * e;
      eps_sq += e * e;
    }
    double lp = target.log_density_plain(theta.data(), grad_theta.data());
    for (std::size_t i = 0; i < d; ++i) glp[m * d + i] = grad_theta[i];
    double log_q = -log_sigma_sum - 0.5 * eps_sq - 0.5 * static_cast<double>(d) * kLog2Pi;
    w[m] = lp - log_q;
    if (!std::isfinite(w[m])) throw std::domain_error("fast bound: non-finite log-weight");
  }

  const bool elbo_like = objective == ViConfig::Objective::kElbo || alpha == 1.0;
  std::vector<double> weight(m_draws, 1.0 / static_cast<double>(m_draws));
  if (elbo_like) {
    double mean_w = 0.0;
    for (double v : w) mean_w += v;
    out.value = mean_w / static_cast<double>(m_draws);
  } else {
    double one_minus = 1.0 - alpha;
    double mx = w[0];
    for (double v : w) mx = std::max(mx, v);
    double z = 0.0;
    for (std::size_t m = 0; m < m_draws; ++m) {
      weight[m] = std::exp(one_minus * (w[m] - mx));
      z += weight[m];
    }
    for (double& v : weight) v /= z;
    out.value = (std::log(z / static_cast<double>(m_draws)) + one_minus * mx) / one_minus;
  }

  // d w_m / d mu_i = glp_i; d w_m / d rho_i = (glp_i eps_i + 1/sigma_i) sp'_i
  // (the +1/sigma term is the -log q path); bound grad = sum_m weight_m dw_m.
  for (std::size_t m = 0; m < m_draws; ++m) {
    double wm = weight[m];
    for (std::size_t i = 0; i < d; ++i) {
      double g = glp[m * d + i];
      out.grad_mu[i] += wm * g;
      out.grad_rho[i] += wm * (g * eps[m * d + i] + 1.0 / sigma[i]) * sp_prime[i];
    }
  }
  return out;
}

}  // namespace

BoundBuild build_bound(Tape& tape, const MeanFieldGaussian& q, const Target& target,
                       ViConfig::Objective objective, double alpha, std::size_t mc_samples,
                       const nets::Batch* minibatch, RngStream& rng, bool requires_grad) {
  TargetView tv = view_of(target);
  MfGraph g = bind_mf(tape, q, target_layout(tv), requires_grad);
  std::size_t n_data = tv.dataset ? tv.dataset->data.size() : 0;
  BoundBuild out;
  out.bound = objective == ViConfig::Objective::kElbo
                  ? elbo_graph(tape, g, tv, minibatch, n_data, mc_samples, rng)
                  : alpha_graph(tape, g, tv, alpha, mc_samples, minibatch, n_data, rng);
  out.mu = g.mu;
  out.rho = g.rho;
  out.layout = std::move(g.layout);
  return out;
}

std::size_t target_dim(const Target& target) {
  if (const auto* ds = std::get_if<DatasetTarget>(&target)) {
    return ds->model.arch.param_count();
  }
  return std::get<DensityTarget>(target).dim;
}

double elbo_minibatch_estimate(const MeanFieldGaussian& q, const DatasetTarget& target,
                               const nets::Batch& minibatch, std::size_t mc_samples,
                               RngStream& rng) {
  if (minibatch.size() == 0) throw std::invalid_argument("elbo: empty minibatch");
  Tape tape;
  TargetView tv{&target, nullptr};
  MfGraph g = bind_mf(tape, q, target_layout(tv), /*requires_grad=*/false);
  NodeId bound = elbo_graph(tape, g, tv, &minibatch, target.data.size(), mc_samples, rng);
  return tape.value(bound).item();
}

double elbo_estimate(const MeanFieldGaussian& q, const Target& target,
                     std::size_t mc_samples, RngStream& rng) {
  Tape tape;
  TargetView tv = view_of(target);
  MfGraph g = bind_mf(tape, q, target_layout(tv), /*requires_grad=*/false);
  NodeId bound = elbo_graph(tape, g, tv, nullptr, 0, mc_samples, rng);
  return tape.value(bound).item();
}

double alpha_bound_estimate(const MeanFieldGaussian& q, const Target& target,
                            const AlphaConfig& cfg, RngStream& rng) {
  if (cfg.mc_samples == 0) throw std::invalid_argument("alpha bound: mc_samples must be >= 1");
  Tape tape;
  TargetView tv = view_of(target);
  MfGraph g = bind_mf(tape, q, target_layout(tv), /*requires_grad=*/false);
  NodeId bound = alpha_graph(tape, g, tv, cfg.alpha, cfg.mc_samples, nullptr, 0, rng);
  return tape.value(bound).item();
}

FitResult fit_vi(const ViConfig& cfg, const Target& target, RngStream& rng,
                 harness::MetricsSink* metrics) {
  const bool dataset = std::holds_alternative<DatasetTarget>(target);
  if (cfg.objective == ViConfig::Objective::kAlpha) {
    AlphaConfig ac{cfg.alpha, cfg.mc_samples};
    ac.validate();
  }

  TargetView tv = view_of(target);
  std::vector<nets::ParamBlock> layout = target_layout(tv);
  const std::size_t dim = target_dim(target);

  MeanFieldGaussian q;
  if (cfg.init_mu) {
    if (cfg.init_mu->size() != dim) throw std::invalid_argument("fit_vi: init_mu size mismatch");
    q.mu = *cfg.init_mu;
  } else if (dataset) {
    q.mu = nets::init_params(std::get<DatasetTarget>(target).model.arch, rng).values;
  } else {
    q.mu.assign(dim, 0.0);
  }
  double sigma0 = cfg.init_sigma.value_or(
      dataset ? 0.05 * std::get<DatasetTarget>(target).model.prior.tau : 0.5);
  q.rho.assign(dim, MeanFieldGaussian::rho_for_sigma(sigma0));

  std::unique_ptr<nets::MinibatchStream> batches;
  std::size_t n_data = 0;
  if (dataset) {
    n_data = std::get<DatasetTarget>(target).data.size();
    if (n_data == 0) throw std::invalid_argument("fit_vi: empty dataset");
    batches = std::make_unique<nets::MinibatchStream>(n_data, cfg.batch_size, rng);
  }

  FitResult result;
  result.bound_trace.reserve(cfg.steps);

  std::size_t window = static_cast<std::size_t>(static_cast<double>(cfg.steps) *
                                                 std::min(std::max(cfg.tail_fraction, 0.0), 1.0));
  const std::size_t avg_from = cfg.tail_average ? cfg.steps - window + 1 : cfg.steps + 1;
  std::vector<double> mu_acc(dim, 0.0), rho_acc(dim, 0.0);
  std::size_t avg_count = 0;

  // Frozen draws: one fixed noise stream replayed every step.
  const std::uint64_t frozen_seed = rng.raw();

  for (std::size_t t = 1; t <= cfg.steps; ++t) {
    double bound_value = 0.0;
    try {
      Tape tape;
      MfGraph g = bind_mf(tape, q, layout, /*requires_grad=*/true);

      nets::Batch mb;
      const nets::Batch* mb_ptr = nullptr;
      if (dataset) {
        mb = nets::subset(std::get<DatasetTarget>(target).data, batches->next());
        mb_ptr = &mb;
      }

      RngStream replay(frozen_seed, 0x5aa);
      RngStream& noise = cfg.frozen_draws ? replay : rng;
      if (tv.density && tv.density->log_density_plain) {
        FastBoundEval fast = fast_density_bound(q, *tv.density, cfg.objective, cfg.alpha,
                                                cfg.mc_samples, noise);
        bound_value = fast.value;
        for (std::size_t i = 0; i < dim; ++i) {
          q.mu[i] += cfg.step_size * fast.grad_mu[i];
          q.rho[i] += cfg.step_size * fast.grad_rho[i];
        }
      } else {
        NodeId bound = cfg.objective == ViConfig::Objective::kElbo
                           ? elbo_graph(tape, g, tv, mb_ptr, n_data, cfg.mc_samples, noise)
                           : alpha_graph(tape, g, tv, cfg.alpha, cfg.mc_samples, mb_ptr,
                                         n_data, noise);
        bound_value = tape.value(bound).item();
        std::vector<Tensor> grads = tape.backward(bound);

        // Ascent on the bound.
        for (std::size_t b = 0; b < layout.size(); ++b) {
          const nets::ParamBlock& blk = layout[b];
          const Tensor& gmu = grads[g.mu[b].index];
          const Tensor& grho = grads[g.rho[b].index];
          for (std::size_t i = 0; i < blk.size(); ++i) {
            if (!gmu.empty()) q.mu[blk.offset + i] += cfg.step_size * gmu.data()[i];
            if (!grho.empty()) q.rho[blk.offset + i] += cfg.step_size * grho.data()[i];
          }
        }
      }
    } catch (const std::domain_error& e) {
      throw DivergenceError(t, "fit_vi diverged at step " + std::to_string(t) + ": " + e.what());
    }

    for (double v : q.mu) {
      if (!std::isfinite(v) || std::fabs(v) > cfg.divergence_linf) {
        throw DivergenceError(t, "fit_vi diverged at step " + std::to_string(t));
      }
    }
    result.bound_trace.push_back(bound_value);
    if (metrics) metrics->append(t, "train", "bound", bound_value);

    if (t >= avg_from) {
      for (std::size_t i = 0; i < dim; ++i) {
        mu_acc[i] += q.mu[i];
        rho_acc[i] += q.rho[i];
      }
      ++avg_count;
    }
  }
  if (avg_count > 0) {
    for (std::size_t i = 0; i < dim; ++i) {
      q.mu[i] = mu_acc[i] / static_cast<double>(avg_count);
      q.rho[i] = rho_acc[i] / static_cast<double>(avg_count);
    }
  }
  result.q = std::move(q);
  return result;
}

}  // namespace binfer::vi
