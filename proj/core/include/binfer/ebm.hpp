#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "binfer/errors.hpp"
#include "binfer/nets.hpp"
#include "binfer/optim.hpp"
#include "binfer/rng.hpp"

namespace binfer::harness {
class MetricsSink;
}

namespace binfer::ebm {

/// Scalar energy E_theta(x) given by an MLP with d_out = 1. The density
/// exp(-E)/Z is never materialized; Z only exists inside the quadrature
/// oracle.
struct EnergyModel {
  nets::Architecture arch;
  nets::ParamVector params;
  void validate() const;
};

/// Per-row energies: [n, d] -> n values.
std::vector<double> energy_batch(const EnergyModel& model, const Tensor& x);

/// d/dx E_theta(x) per row, parameters frozen.
Tensor grad_x(const EnergyModel& model, const Tensor& x);

/// Axis-aligned clamp box for data-space sampling (empty = unclamped).
struct Box {
  std::vector<double> lo, hi;
  bool active() const { return !lo.empty(); }
  void clamp(Tensor& x) const;
};

/// x_{k+1} = x_k - alpha_k grad E(x_k) + sqrt(2 alpha_k) eps_k for each entry
/// of `alphas`. `noise` off gives plain gradient descent on E (used by
/// fixed-point tests).
Tensor langevin_sample(const EnergyModel& model, const Tensor& x0,
                       const std::vector<double>& alphas, RngStream& rng,
                       const Box* box = nullptr, bool noise = true);

/// Same dynamics driven by an explicit x-gradient of the energy (analytic
/// targets).
using EnergyGradFn = std::function<Tensor(const Tensor& x)>;
Tensor langevin_sample(const EnergyGradFn& grad_energy, const Tensor& x0,
                       const std::vector<double>& alphas, RngStream& rng,
                       const Box* box = nullptr, bool noise = true);

std::vector<double> constant_steps(std::size_t k, double alpha);

/// Contrastive-divergence estimate of the MLE ascent direction:
/// mean_theta-grad E at negatives minus mean theta-grad E at data points.
std::vector<double> cd_gradient(const EnergyModel& model, const Tensor& batch,
                                const Tensor& negatives);

/// FIFO reservoir of persistent negative-chain states.
class SampleBuffer {
 public:
  explicit SampleBuffer(std::size_t capacity, std::size_t dim);
  std::size_t size() const { return points_.size(); }
  void push(const Tensor& rows);
  Tensor draw(std::size_t n, RngStream& rng) const;

 private:
  std::size_t capacity_, dim_;
  std::vector<std::vector<double>> points_;
  std::size_t next_ = 0;  // FIFO replacement cursor once full
};

struct InitStrategy {
  enum class Kind { kData, kNoiseGaussian, kNoiseUniform, kPersistent };
  Kind kind = Kind::kData;
  double noise_scale = 1.0;   // gaussian std; uniform draws from the box
  double reinit_prob = 0.05;  // persistent: chance of a fresh-noise restart
};

struct TrainConfig {
  nets::Architecture arch;
  std::size_t steps = 2000;
  std::size_t batch_size = 64;
  std::size_t langevin_steps = 60;
  double langevin_alpha = 1e-2;
  InitStrategy init;
  std::size_t buffer_capacity = 1024;
  Box box;
  optim::Kind optimizer = optim::Kind::kAdam;
  double learning_rate = 1e-3;
  double energy_guard = 1e6;
};

struct TrainResult {
  EnergyModel model;
};

/// Algorithm loop: init x0 per the strategy, K Langevin steps to get the
/// negative sample, contrastive-divergence gradient from positive/negative
/// pairs, optimizer step. Metrics: "cd_loss", "energy_pos", "energy_neg".
TrainResult train_ebm(const TrainConfig& cfg, const Tensor& data, RngStream& rng,
                      harness::MetricsSink* metrics = nullptr);

}  // namespace binfer::ebm
