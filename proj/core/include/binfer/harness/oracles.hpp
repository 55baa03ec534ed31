#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "binfer/dlvm.hpp"
#include "binfer/ebm.hpp"
#include "binfer/tensor.hpp"

namespace binfer::harness {

// Closed-form anchors for the trainers. Everything here is independent of
// the tape/sampler code paths it is used to judge.

struct BlrPosterior {
  std::vector<double> mean;
  Tensor cov;
  double log_evidence = 0.0;
};

/// Conjugate Bayesian linear regression, y = X w + N(0, sigma^2),
/// w ~ N(0, tau^2 I): precision XtX/sigma^2 + I/tau^2, plus the exact log
/// evidence. Zero rows recover the prior with evidence 0.
BlrPosterior exact_blr_posterior(const Tensor& x, const Tensor& y, double sigma, double tau);

struct GaussianPrediction {
  double mean = 0.0;
  double variance = 0.0;
};

/// Closed-form posterior predictive at x*: N(x*^T m, x*^T S x* + sigma^2).
GaussianPrediction blr_posterior_predictive(const BlrPosterior& post,
                                            const std::vector<double>& x_star, double sigma);

/// Exclusive-KL mean-field optimum for a Gaussian target: v_i = 1/(cov^-1)_ii.
std::vector<double> mf_fixed_point_oracle(const Tensor& cov);

double dense_gaussian_logpdf(const std::vector<double>& x, const std::vector<double>& mean,
                             const Tensor& cov);

struct GridDensity {
  Tensor points;                 // [n, d] grid nodes (row-major over axes)
  std::vector<double> energy;    // E at each node
  std::vector<double> density;   // exp(-E)/Z, trapezoid-normalized
  double log_z = 0.0;

  /// Trapezoid integral of the stored density (1 up to quadrature error).
  double integral() const;
  std::vector<double> weights;   // quadrature weights per node
};

using EnergyFn = std::function<double(const std::vector<double>&)>;

/// Trapezoid-rule normalization of exp(-E) over an axis-aligned box in one
/// or two dimensions with n_points nodes per axis.
GridDensity grid_normalize(const EnergyFn& energy, const ebm::Box& box, std::size_t n_points);
GridDensity grid_normalize(const ebm::EnergyModel& model, const ebm::Box& box,
                           std::size_t n_points);

/// Total variation distance (1/2) integral |p - q| between two densities
/// tabulated on the same grid.
double grid_tv_distance(const GridDensity& p, const std::vector<double>& q_density);

struct PpcaPosterior {
  std::vector<double> mean;
  Tensor cov;
};

/// Exact PPCA posterior p(z|x): precision I + W^T W / sigma^2.
PpcaPosterior ppca_posterior(const dlvm::PPCAModel& model, const std::vector<double>& x);

struct PpcaMle {
  dlvm::PPCAModel model;
  double mean_loglik = 0.0;  // per-datapoint maximum of the log marginal
};

/// Closed-form PPCA maximum likelihood (principal eigenpairs of the sample
/// covariance; sigma^2 is the mean of the discarded eigenvalues).
PpcaMle ppca_mle(const Tensor& data, std::size_t d_z);

}  // namespace binfer::harness
