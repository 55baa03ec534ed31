#include "binfer/predictive.hpp"

#include <cmath>
#include <stdexcept>

namespace binfer::predictive {

namespace {

double xlogx(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

Tensor as_row(const Tensor& x) {
  if (x.rank() == 2) return x;
  if (x.rank() == 1) {
    Tensor r({1, x.size()});
    for (std::size_t i = 0; i < x.size(); ++i) r.at(0, i) = x.data()[i];
    return r;
  }
  throw std::invalid_argument("posterior_predictive: x* must be a row");
}

}  // namespace

PosteriorHandle PosteriorHandle::from_chain(const sgmcmc::Chain& c) {
  PosteriorHandle h;
  h.chain = &c;
  return h;
}

PosteriorHandle PosteriorHandle::from_variational(const vi::MeanFieldGaussian& q,
                                                  std::size_t draws) {
  PosteriorHandle h;
  h.variational = &q;
  h.draws = draws;
  return h;
}

void PosteriorHandle::validate() const {
  if (chain) {
    if (chain->samples.empty()) throw std::invalid_argument("posterior handle: empty chain");
    return;
  }
  if (variational) {
    if (draws == 0) throw std::invalid_argument("posterior handle: draws must be >= 1");
    return;
  }
  throw std::invalid_argument("posterior handle: no posterior attached");
}

Decomposition decompose_uncertainty(const Tensor& member_probs) {
  if (member_probs.rank() != 2 || member_probs.rows() == 0) {
    throw std::invalid_argument("decompose_uncertainty: need [M, C] member probabilities");
  }
  const std::size_t m = member_probs.rows(), c = member_probs.cols();
  std::vector<double> mean(c, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double row_sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      double p = member_probs.at(i, j);
      if (p < 0.0) throw std::invalid_argument("decompose_uncertainty: negative probability");
      row_sum += p;
    }
    if (std::fabs(row_sum - 1.0) > 1e-9) {
      throw std::invalid_argument("decompose_uncertainty: row " + std::to_string(i) +
                                  " is not normalized");
    }
    for (std::size_t j = 0; j < c; ++j) mean[j] += member_probs.at(i, j);
  }
  for (double& p : mean) p /= static_cast<double>(m);

  Decomposition d;
  for (std::size_t j = 0; j < c; ++j) d.total -= xlogx(mean[j]);
  for (std::size_t i = 0; i < m; ++i) {
    double h = 0.0, kl = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      double p = member_probs.at(i, j);
      h -= xlogx(p);
      if (p > 0.0) kl += p * (std::log(p) - std::log(mean[j]));
    }
    d.aleatoric += h;
    d.mutual_info_kl += kl;
  }
  d.aleatoric /= static_cast<double>(m);
  d.mutual_info_kl /= static_cast<double>(m);
  d.epistemic = d.total - d.aleatoric;
  return d;
}

PredictiveSummary posterior_predictive(const PosteriorHandle& handle,
                                       const nets::ModelContext& model, const Tensor& x_star,
                                       RngStream* rng) {
  handle.validate();
  Tensor x = as_row(x_star);
  if (x.cols() != model.arch.input_dim()) {
    throw std::invalid_argument("posterior_predictive: x* dimension mismatch");
  }

  const std::size_t n_members = handle.chain ? handle.chain->samples.size() : handle.draws;
  if (handle.variational && !rng) {
    throw std::invalid_argument("posterior_predictive: variational handle needs an RngStream");
  }

  nets::ParamVector params = nets::make_params(model.arch);
  const std::size_t d_out = model.arch.output_dim();

  PredictiveSummary summary;
  summary.classification = model.likelihood.kind == nets::LikelihoodConfig::Kind::kCategorical;

  Tensor member_probs;
  if (summary.classification) member_probs = Tensor({n_members, d_out});

  std::vector<double> mean(d_out, 0.0), sq_mean(d_out, 0.0);
  for (std::size_t mIdx = 0; mIdx < n_members; ++mIdx) {
    if (handle.chain) {
      params.values = handle.chain->samples[mIdx];
    } else {
      params.values = vi::mf_sample(*handle.variational, *rng).theta;
    }
    Tensor f = nets::mlp_forward(params, model.arch, x);
    if (summary.classification) {
      // softmax with max-shift
      double mx = f.at(0, 0);
      for (std::size_t j = 1; j < d_out; ++j) mx = std::max(mx, f.at(0, j));
      double z = 0.0;
      for (std::size_t j = 0; j < d_out; ++j) z += std::exp(f.at(0, j) - mx);
      for (std::size_t j = 0; j < d_out; ++j) {
        member_probs.at(mIdx, j) = std::exp(f.at(0, j) - mx) / z;
      }
    } else {
      for (std::size_t j = 0; j < d_out; ++j) {
        mean[j] += f.at(0, j);
        sq_mean[j] += f.at(0, j) * f.at(0, j);
      }
    }
  }

  if (summary.classification) {
    summary.uncertainty = decompose_uncertainty(member_probs);
    summary.probs.assign(d_out, 0.0);
    for (std::size_t i = 0; i < n_members; ++i) {
      for (std::size_t j = 0; j < d_out; ++j) summary.probs[j] += member_probs.at(i, j);
    }
    for (double& p : summary.probs) p /= static_cast<double>(n_members);
    return summary;
  }

  double sigma2 = model.likelihood.sigma * model.likelihood.sigma;
  summary.mean.resize(d_out);
  summary.variance.resize(d_out);
  for (std::size_t j = 0; j < d_out; ++j) {
    double mu = mean[j] / static_cast<double>(n_members);
    double spread = sq_mean[j] / static_cast<double>(n_members) - mu * mu;
    summary.mean[j] = mu;
    summary.variance[j] = sigma2 + std::max(spread, 0.0);
  }
  return summary;
}

}  // namespace binfer::predictive
