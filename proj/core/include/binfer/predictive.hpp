#pragma once

#include <cstddef>
#include <vector>

#include "binfer/nets.hpp"
#include "binfer/rng.hpp"
#include "binfer/sgmcmc.hpp"
#include "binfer/vi.hpp"

namespace binfer::predictive {

/// Source of posterior members: a finite chain or a variational posterior
/// sampled `draws` times.
struct PosteriorHandle {
  const sgmcmc::Chain* chain = nullptr;
  const vi::MeanFieldGaussian* variational = nullptr;
  std::size_t draws = 0;

  static PosteriorHandle from_chain(const sgmcmc::Chain& c);
  static PosteriorHandle from_variational(const vi::MeanFieldGaussian& q, std::size_t draws);
  void validate() const;
};

/// Entropy decomposition of an ensemble of categorical predictions (nats,
/// natural log, 0 log 0 := 0). `mutual_info_kl` recomputes the epistemic term
/// independently as the mean row-wise KL(row || mean) for cross-checking.
struct Decomposition {
  double total = 0.0;
  double aleatoric = 0.0;
  double epistemic = 0.0;
  double mutual_info_kl = 0.0;
};

/// member_probs: [M, C], each row a probability vector (tolerance 1e-9).
Decomposition decompose_uncertainty(const Tensor& member_probs);

struct PredictiveSummary {
  bool classification = false;
  // regression: per output dim (total variance = sigma^2 + spread of means)
  std::vector<double> mean;
  std::vector<double> variance;
  // classification
  std::vector<double> probs;
  Decomposition uncertainty;
};

/// Posterior predictive at one input row x* (shape [1, d_in] or [d_in]).
/// Regression: mixture mean and the law-of-total-variance variance.
/// Classification: ensemble-averaged softmax plus the entropy decomposition.
/// `rng` is only touched for variational handles.
PredictiveSummary posterior_predictive(const PosteriorHandle& handle,
                                       const nets::ModelContext& model, const Tensor& x_star,
                                       RngStream* rng = nullptr);

}  // namespace binfer::predictive
