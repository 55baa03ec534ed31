#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <variant>
#include <vector>

#include "binfer/errors.hpp"
#include "binfer/nets.hpp"
#include "binfer/rng.hpp"
#include "binfer/tape.hpp"

namespace binfer::harness {
class MetricsSink;
}

namespace binfer::vi {

/// Factorized Gaussian over a flat parameter vector; sigma = softplus(rho)
/// keeps every marginal std positive without constraints.
struct MeanFieldGaussian {
  std::vector<double> mu;
  std::vector<double> rho;

  std::size_t dim() const { return mu.size(); }
  std::vector<double> sigma() const;
  double log_density(const std::vector<double>& theta) const;

  static MeanFieldGaussian init(std::size_t dim, double mu0, double sigma0);
  static double rho_for_sigma(double sigma);
};

/// Gaussian with covariance L L^T + D; D entries positive keeps it SPD.
struct LowRankGaussian {
  std::vector<double> mu;
  Tensor lfac;               // [d, r]
  std::vector<double> diag;  // d positive entries

  std::size_t dim() const { return mu.size(); }
  std::size_t rank() const { return lfac.cols(); }
  void validate() const;
  /// Exact log q(theta) via the Woodbury identity and the matrix
  /// determinant lemma; only r x r factorizations are formed.
  double log_density(const std::vector<double>& theta) const;
};

struct MfDraw {
  std::vector<double> theta;
  std::vector<double> eps;
};

/// Reparameterized draw theta = mu + sigma .* eps; the noise comes back to
/// the caller so gradients can flow through the same draw.
MfDraw mf_sample(const MeanFieldGaussian& q, RngStream& rng);

/// KL[q || N(0, tau^2 I)] in closed form.
double gaussian_kl(const MeanFieldGaussian& q, const nets::PriorConfig& prior);

/// theta = mu + L xi + sqrt(D) .* eps (xi drawn first, then eps).
std::vector<double> lowrank_sample(const LowRankGaussian& q, RngStream& rng);

struct AlphaConfig {
  double alpha = 0.5;
  std::size_t mc_samples = 1;
  void validate() const;  // alpha != 1; the ELBO path covers that case
};

/// Dataset-backed target: the usual BNN posterior over model parameters.
struct DatasetTarget {
  nets::ModelContext model;
  nets::Batch data;
};

/// Explicit unnormalized log-density over a [1, dim] parameter row.
/// `log_density_plain`, when provided, is a plain-math twin (value plus
/// gradient) that lets fit_vi run its draw loop without building tapes; it
/// must agree with the tape form (unit-tested for the Gaussian target).
struct DensityTarget {
  std::size_t dim = 0;
  std::function<NodeId(Tape&, NodeId theta)> log_density;
  std::function<double(const double* theta, double* grad_out)> log_density_plain;
};

using Target = std::variant<DatasetTarget, DensityTarget>;

std::size_t target_dim(const Target& target);

/// Reparameterized minibatch ELBO estimate,
///   (|D|/|batch|) sum log p(y | f_{mu+sigma.*eps}(x)) - KL[q||p],
/// averaged over `mc_samples` draws (the KL term is analytic).
double elbo_minibatch_estimate(const MeanFieldGaussian& q, const DatasetTarget& target,
                               const nets::Batch& minibatch, std::size_t mc_samples,
                               RngStream& rng);

/// Full-data ELBO estimate for either target kind.
double elbo_estimate(const MeanFieldGaussian& q, const Target& target,
                     std::size_t mc_samples, RngStream& rng);

/// Monte Carlo alpha-bound with log-weights w_m = log ptilde(theta_m)
/// - log q(theta_m), combined through a shifted log-sum-exp of (1-alpha) w.
/// alpha == 1 is served by the limit path, (1/M) sum w_m.
double alpha_bound_estimate(const MeanFieldGaussian& q, const Target& target,
                            const AlphaConfig& cfg, RngStream& rng);

struct ViConfig {
  enum class Objective { kElbo, kAlpha };
  Objective objective = Objective::kElbo;
  double alpha = 0.5;           // alpha objective only
  std::size_t mc_samples = 1;
  std::size_t steps = 1000;
  double step_size = 1e-3;
  std::size_t batch_size = 32;  // dataset targets
  std::optional<double> init_sigma;  // default: 0.05 tau (dataset), 0.5 (density)
  std::optional<std::vector<double>> init_mu;
  /// Report the mean of the trailing `tail_fraction` of the (mu, rho)
  /// iterates instead of the final one; damps the stationary wobble of
  /// constant-step SGD.
  bool tail_average = false;
  double tail_fraction = 0.5;
  /// Reuse one frozen set of reparameterization draws for every step
  /// (sample-average approximation). Makes the bound deterministic in phi;
  /// the alpha objective at small alpha needs this to converge inside a
  /// sane budget. Fresh draws per step when false.
  bool frozen_draws = false;
  double divergence_linf = 1e6;
};

struct FitResult {
  MeanFieldGaussian q;
  std::vector<double> bound_trace;
};

/// One tape construction of the chosen bound over per-block (mu, rho)
/// leaves. fit_vi and the estimators run through this; it is public so
/// gradient checks can exercise the exact same path.
struct BoundBuild {
  NodeId bound;
  std::vector<NodeId> mu, rho;  // leaves, layout order
  std::vector<nets::ParamBlock> layout;
};

BoundBuild build_bound(Tape& tape, const MeanFieldGaussian& q, const Target& target,
                       ViConfig::Objective objective, double alpha, std::size_t mc_samples,
                       const nets::Batch* minibatch, RngStream& rng,
                       bool requires_grad = true);

/// SGD ascent on the chosen bound via reparameterized gradients (plain SGD,
/// constant step). Per-step bound values go to the trace and to `metrics`
/// under "bound".
FitResult fit_vi(const ViConfig& cfg, const Target& target, RngStream& rng,
                 harness::MetricsSink* metrics = nullptr);

}  // namespace binfer::vi
