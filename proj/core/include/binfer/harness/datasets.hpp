#pragma once

#include <cstddef>
#include <cstdint>
#include <variant>
#include <vector>

#include "binfer/nets.hpp"
#include "binfer/tensor.hpp"
#include "binfer/vi.hpp"

namespace binfer::harness {

/// y = sin(2x) + noise, x uniform on [-3, 3].
struct Regression1dSpec {
  std::size_t n = 64;
  double noise = 0.25;
};

/// Two interleaved half-circles in 2-D with isotropic Gaussian jitter.
struct TwoMoonsSpec {
  std::size_t n = 256;
  double noise = 0.1;
};

struct GaussianMixture1dSpec {
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> stds;
  std::size_t n = 512;
};

/// Defaults to the correlated 2-D Gaussian used by the VI coverage study:
/// mean (0, 0), cov [[2.0, 1.5], [1.5, 1.6]].
struct CorrelatedGaussian2dSpec {
  std::vector<double> mean{0.0, 0.0};
  Tensor cov = Tensor::matrix(2, 2, {2.0, 1.5, 1.5, 1.6});
  std::size_t n = 0;  // sample count when drawing points
};

/// Bayesian linear regression: X entries N(0,1), y = X w + sigma eps.
struct BlrSpec {
  std::size_t n = 128;
  std::size_t dim = 5;
  std::vector<double> true_w;
  double sigma = 0.5;
  double tau = 1.0;
};

struct DatasetSpec {
  std::variant<Regression1dSpec, TwoMoonsSpec, GaussianMixture1dSpec, CorrelatedGaussian2dSpec,
               BlrSpec>
      kind;
  std::uint64_t seed = 0;
};

struct Dataset {
  bool supervised = false;
  nets::Batch batch;  // supervised: x [n, d_in], y [n, d_out]
  Tensor points;      // unsupervised samples [n, d]
};

/// Pure function of (spec, seed): regeneration is byte-identical.
Dataset generate(const DatasetSpec& spec);

/// Unnormalized Gaussian log-density target over a [1, d] parameter row,
/// for fitting VI against an explicit density.
vi::DensityTarget gaussian_density_target(const std::vector<double>& mean, const Tensor& cov);

}  // namespace binfer::harness
