#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "binfer/errors.hpp"
#include "binfer/nets.hpp"
#include "binfer/optim.hpp"
#include "binfer/rng.hpp"

namespace binfer::harness {
class MetricsSink;
}

namespace binfer::score {

/// Noise-conditional score network s_theta(x, sigma): the MLP input is the
/// data row with the noise scale appended as one extra coordinate, output has
/// the data dimension.
struct ScoreNet {
  nets::Architecture arch;
  nets::ParamVector params;
  std::size_t data_dim = 0;
  void validate() const;
};

/// s_theta(x, sigma) for a row batch x: [n, d] -> [n, d].
Tensor score_eval(const ScoreNet& net, const Tensor& x, double sigma);

/// Strictly decreasing positive noise scales sigma_1 > ... > sigma_L.
struct NoiseLadder {
  std::vector<double> sigmas;
  void validate() const;
  static NoiseLadder geometric(double sigma_max, double sigma_min, std::size_t levels);
};

/// Denoising score-matching loss at one noise scale:
/// (1/n) sum_i 1/2 || s_theta(x_i + sigma eps_i, sigma) + eps_i / sigma ||^2.
double dsm_loss(const ScoreNet& net, const Tensor& batch, double sigma, RngStream& rng);

/// sum_i sigma_i^2 * dsm_loss(sigma_i) over the ladder.
double ncsn_loss(const ScoreNet& net, const Tensor& batch, const NoiseLadder& ladder,
                 RngStream& rng);

/// Tape form of the DSM term over bound score-net parameters (the training
/// path; public so gradient checks can drive it).
NodeId dsm_loss_graph(Tape& tape, const nets::BoundParams& params,
                      const nets::Architecture& arch, const Tensor& batch, double sigma,
                      RngStream& rng);
NodeId ncsn_loss_graph(Tape& tape, const nets::BoundParams& params,
                       const nets::Architecture& arch, const Tensor& batch,
                       const NoiseLadder& ladder, RngStream& rng);

using ScoreFn = std::function<Tensor(const Tensor& x, double sigma)>;

/// Annealed Langevin: for each sigma_i (largest first) run `steps_per_scale`
/// updates x += alpha_i s(x, sigma_i) + sqrt(2 alpha_i) eps with
/// alpha_i = eps0 sigma_i^2 / sigma_L^2, chaining states across scales.
Tensor annealed_langevin_sample(const ScoreFn& s, const NoiseLadder& ladder,
                                std::size_t steps_per_scale, double eps0, Tensor x0,
                                RngStream& rng);

/// Variance-preserving SDE dx = -1/2 beta(t) x dt + sqrt(beta(t)) dw with
/// linear beta(t) on t in [0, 1].
struct SDEConfig {
  double beta_min = 0.1;
  double beta_max = 20.0;
  void validate() const;
  double beta(double t) const { return beta_min + t * (beta_max - beta_min); }
};

struct VpMarginal {
  double mean_coef = 1.0;  // m(t); x_t | x_0 ~ N(m x_0, v I)
  double var = 0.0;        // v(t) = 1 - m^2
};

/// Closed-form marginal coefficients; m(t)^2 + v(t) = 1 for all t.
VpMarginal vp_forward_marginal(double t, const SDEConfig& sde);

/// Euler-Maruyama forward simulation to t = 1 (used against the closed form).
Tensor vp_forward_simulate(const Tensor& x0, std::size_t n_steps, const SDEConfig& sde,
                           RngStream& rng);

using TimeScoreFn = std::function<Tensor(const Tensor& x, double t)>;

struct PcConfig {
  std::size_t n_steps = 1000;
  std::size_t corrector_steps = 0;
  double snr = 0.16;
  double t_end = 1e-3;
};

/// Predictor-corrector reverse sampler: Euler-Maruyama on the reverse-time
/// SDE plus `corrector_steps` Langevin corrections with the SNR step rule
/// alpha = 2 (snr |eps| / |s|)^2. Starts from N(0, I) at t = 1.
Tensor pc_sample(const TimeScoreFn& s, const SDEConfig& sde, const PcConfig& cfg,
                 std::size_t n_paths, std::size_t dim, RngStream& rng);

/// Adapts a trained ScoreNet to the reverse SDE: the conditioning channel
/// carries sqrt(v(t)).
TimeScoreFn net_time_score(const ScoreNet& net, const SDEConfig& sde);

struct TrainConfig {
  nets::Architecture arch;  // input d+1, output d
  std::size_t steps = 2000;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  optim::Kind optimizer = optim::Kind::kAdam;
  /// Cosine-decay the learning rate to 2% of the initial value; the noisy
  /// per-sample DSM target (std 1/sigma) otherwise leaves a constant-lr
  /// accuracy floor well above the score tolerance.
  bool cosine_decay = true;
  /// Return the mean of the last-half parameter iterates instead of the
  /// final ones. The small-sigma DSM targets carry std 1/sigma noise, and
  /// averaging is what brings the fitted score inside the tolerance.
  bool tail_average = true;
  double t_min = 1e-3;  // VP objective: t ~ U(t_min, 1)
};

/// NCSN training: per step one minibatch and the full-ladder weighted loss.
/// Metrics: "ncsn_loss".
ScoreNet train_score_ncsn(const TrainConfig& cfg, const Tensor& data,
                          const NoiseLadder& ladder, RngStream& rng,
                          harness::MetricsSink* metrics = nullptr);

/// Time-conditional DSM for the VP SDE: per-row t ~ U(t_min, 1), perturbation
/// from the closed-form marginal, weight v(t). Metrics: "vp_loss".
ScoreNet train_score_vp(const TrainConfig& cfg, const Tensor& data, const SDEConfig& sde,
                        RngStream& rng, harness::MetricsSink* metrics = nullptr);

}  // namespace binfer::score
