#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "binfer/errors.hpp"
#include "binfer/nets.hpp"
#include "binfer/rng.hpp"

namespace binfer::harness {
class MetricsSink;
}

namespace binfer::sgmcmc {

/// Step-size schedules. Polynomial is a(b+t)^-gamma with gamma in (0.5, 1]
/// so the step sum diverges while the squared sum converges; cyclical is the
/// cosine schedule alpha0/2 [cos(pi mod(t-1, ceil(T/M)) / ceil(T/M)) + 1].
struct Schedule {
  enum class Kind { kConstant, kPolynomial, kCyclical };
  Kind kind = Kind::kConstant;
  double alpha0 = 1e-3;
  double a = 1.0, b = 0.0, gamma = 1.0;   // polynomial
  std::size_t cycles = 1, total_steps = 0;  // cyclical

  static Schedule constant(double alpha0);
  static Schedule polynomial(double a, double b, double gamma);
  static Schedule cyclical(double alpha0, std::size_t cycles, std::size_t total_steps);
  void validate() const;
};

/// alpha_t for 1-based step t.
double schedule_step(const Schedule& sched, std::size_t t);

struct SGHMCConfig {
  double friction = 1.0;  // C
  double mass = 1.0;      // M = mass * I
  void validate() const;
};

struct SGHMCState {
  std::vector<double> theta;
  std::vector<double> momentum;
};

/// theta <- theta - alpha grad + sqrt(2 alpha) eps. Consumes exactly
/// dim(theta) normal draws.
void sgld_step(std::span<double> theta, std::span<const double> grad, double alpha,
               RngStream& rng);

/// Euler step of the friction dynamics:
///   r <- r - alpha grad - alpha C r / m + N(0, 2 alpha C I)
///   theta <- theta + alpha r / m
void sghmc_step(SGHMCState& state, std::span<const double> grad, double alpha,
                const SGHMCConfig& cfg, RngStream& rng);

using ChainDivergence = binfer::DivergenceError;

struct ChainMeta {
  std::string sampler;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
};

/// Ordered posterior samples. A step index t (1-based) is stored iff
/// t > burn_in, (t - burn_in - 1) % thin == 0 and, for cyclical schedules,
/// the in-cycle collection gate passes.
struct Chain {
  std::size_t dim = 0;
  std::size_t burn_in = 0;
  std::size_t thin = 1;
  std::vector<std::vector<double>> samples;
  std::vector<std::size_t> step_indices;
  ChainMeta meta;

  std::vector<double> mean() const;
  std::vector<double> variance() const;  // per-coordinate, population form
};

struct SamplerConfig {
  enum class Kind { kSgld, kSghmc };
  Kind kind = Kind::kSgld;
  Schedule schedule;
  SGHMCConfig sghmc;
  std::size_t steps = 1000;
  std::size_t batch_size = 32;
  std::size_t burn_in = 0;  // 0 -> steps/5
  std::size_t thin = 10;
  /// Cyclical collection gate: keep samples only while
  /// alpha_t < collect_threshold * alpha0. Set >= 1 to disable.
  double collect_threshold = 0.1;
  double divergence_linf = 1e6;
};

/// Algorithm loop: sample minibatch, stochastic gradient of the minibatch
/// energy, sampler update with alpha_t. Per-step energy goes to `metrics`
/// (metric "energy") when given. An empty dataset is legal: the posterior is
/// then the prior and only the prior term drives the chain.
Chain run_chain(const nets::ModelContext& model, const nets::Batch& data,
                const nets::ParamVector& init, const SamplerConfig& cfg, RngStream& rng,
                harness::MetricsSink* metrics = nullptr);

}  // namespace binfer::sgmcmc
