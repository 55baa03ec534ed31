#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "binfer/errors.hpp"
#include "binfer/nets.hpp"
#include "binfer/optim.hpp"
#include "binfer/rng.hpp"

namespace binfer::harness {
class MetricsSink;
}

namespace binfer::dlvm {

/// Linear-Gaussian latent model z ~ N(0, I), x ~ N(W z + b, sigma^2 I); the
/// tractable marginal makes it the oracle anchor for every VAE bound test.
struct PPCAModel {
  Tensor w;      // [d_x, d_z]
  Tensor b;      // [d_x]
  double sigma = 1.0;
  std::size_t data_dim() const { return w.rows(); }
  std::size_t latent_dim() const { return w.cols(); }
  void validate() const;
};

/// log N(x; b, W W^T + sigma^2 I) via a Cholesky solve.
double ppca_exact_loglik(const PPCAModel& model, const std::vector<double>& x);

/// Amortized Gaussian VAE. The encoder emits [mu, log sigma] rows (2 d_z
/// columns); log sigma is clamped to [-7, 2] before exponentiation. The
/// decoder emits the mean of a Gaussian with fixed std `lik_sigma`.
struct VAEModel {
  nets::Architecture encoder_arch;
  nets::ParamVector encoder_params;
  nets::Architecture decoder_arch;
  nets::ParamVector decoder_params;
  double lik_sigma = 1.0;
  std::size_t d_z = 1;
  void validate() const;
};

inline constexpr double kLogSigmaMin = -7.0;
inline constexpr double kLogSigmaMax = 2.0;

/// Encoder pass: (mu, sigma) rows, clamp already applied.
std::pair<Tensor, Tensor> encode(const VAEModel& m, const Tensor& x);
Tensor decode(const VAEModel& m, const Tensor& z);

/// Single-eps reparameterized ELBO at one observation (analytic KL).
double vae_elbo_estimate(const VAEModel& m, const Tensor& x_row, RngStream& rng);

/// M-sample importance-weighted bound, log-sum-exp of the log-weights.
double iwae_bound_estimate(const VAEModel& m, const Tensor& x_row, std::size_t M,
                           RngStream& rng);

struct RefineConfig {
  std::size_t steps = 0;  // K = 0 is a no-op
  double step_size = 1e-3;
};

/// K Langevin steps ascending log p(x, z) in z only; encoder and decoder
/// parameters are bound without gradients, so nothing flows back to them.
/// Rows of z0 are independent chains; x may be a single row (tiled) or
/// paired rows.
Tensor langevin_refine(const VAEModel& m, const Tensor& x, const Tensor& z0,
                       const RefineConfig& cfg, RngStream& rng);

/// Gradient for the encoder parameters of mean_i -log q_phi(z_i | x_i) at
/// fixed refined samples (inclusive-KL distillation of the initial
/// distribution; the samples are constants).
std::vector<double> distill_init_gradient(const VAEModel& m, const Tensor& x,
                                          const Tensor& z_refined);

struct TrainConfig {
  nets::Architecture encoder_arch;
  nets::Architecture decoder_arch;
  std::size_t d_z = 1;
  double lik_sigma = 1.0;
  enum class Objective { kElbo, kIwae };
  Objective objective = Objective::kElbo;
  std::size_t iwae_samples = 8;
  std::size_t steps = 2000;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  optim::Kind optimizer = optim::Kind::kAdam;
  std::optional<RefineConfig> refine;  // Langevin-refined posterior training
  double divergence_linf = 1e8;
};

struct TrainResult {
  VAEModel model;
};

/// One tape construction of the ELBO (iwae_samples == 0) or IWAE bound over
/// bound encoder/decoder leaves; the training path, public for gradient
/// checks.
struct VaeBoundBuild {
  NodeId bound;
  nets::BoundParams encoder;
  nets::BoundParams decoder;
};
VaeBoundBuild build_vae_bound(Tape& tape, const VAEModel& m, const Tensor& x,
                              std::size_t iwae_samples, RngStream& rng);

/// Joint SGD on encoder and decoder. Objective "bound" goes to metrics; with
/// refinement enabled the decoder ascends log p(x, z_K) at stop-gradient
/// refined samples and the encoder follows the distillation gradient.
TrainResult train_vae(const TrainConfig& cfg, const Tensor& data, RngStream& rng,
                      harness::MetricsSink* metrics = nullptr);

}  // namespace binfer::dlvm
