#include "binfer/harness/datasets.hpp"

#include <cmath>
#include <stdexcept>

#include "binfer/rng.hpp"
#include "binfer/smallmat.hpp"

namespace binfer::harness {

namespace {

constexpr std::uint64_t kDataStream = 0xDA7Aull;

Dataset gen_regression(const Regression1dSpec& spec, RngStream& rng) {
  Dataset d;
  d.supervised = true;
  d.batch.x = Tensor({spec.n, 1});
  d.batch.y = Tensor({spec.n, 1});
  for (std::size_t i = 0; i < spec.n; ++i) {
    double x = -3.0 + 6.0 * rng.uniform();
    d.batch.x.at(i, 0) = x;
    d.batch.y.at(i, 0) = std::sin(2.0 * x) + spec.noise * rng.normal();
  }
  return d;
}

Dataset gen_two_moons(const TwoMoonsSpec& spec, RngStream& rng) {
  Dataset d;
  d.points = Tensor({spec.n, 2});
  for (std::size_t i = 0; i < spec.n; ++i) {
    double t = M_PI * rng.uniform();
    double px, py;
    if (i % 2 == 0) {
      px = std::cos(t);
      py = std::sin(t);
    } else {
      px = 1.0 - std::cos(t);
      py = 0.5 - std::sin(t);
    }
    d.points.at(i, 0) = px + spec.noise * rng.normal();
    d.points.at(i, 1) = py + spec.noise * rng.normal();
  }
  return d;
}

Dataset gen_mixture(const GaussianMixture1dSpec& spec, RngStream& rng) {
  if (spec.weights.size() != spec.means.size() || spec.means.size() != spec.stds.size() ||
      spec.weights.empty()) {
    throw std::invalid_argument("gaussian_mixture_1d: weights/means/stds must align");
  }
  double wsum = 0.0;
  for (double w : spec.weights) {
    if (w < 0.0) throw std::invalid_argument("gaussian_mixture_1d: negative weight");
    wsum += w;
  }
  Dataset d;
  d.points = Tensor({spec.n, 1});
  for (std::size_t i = 0; i < spec.n; ++i) {
    double u = rng.uniform() * wsum;
    std::size_t k = 0;
    double acc = spec.weights[0];
    while (u > acc && k + 1 < spec.weights.size()) acc += spec.weights[++k];
    d.points.at(i, 0) = spec.means[k] + spec.stds[k] * rng.normal();
  }
  return d;
}

Dataset gen_correlated(const CorrelatedGaussian2dSpec& spec, RngStream& rng) {
  if (spec.mean.size() != 2 || spec.cov.rank() != 2 || spec.cov.rows() != 2 ||
      spec.cov.cols() != 2) {
    throw std::invalid_argument("correlated_gaussian_2d: need 2-d mean and 2x2 cov");
  }
  if (!(spec.cov.at(0, 0) > 0.0)) throw std::invalid_argument("correlated_gaussian_2d: cov not SPD");
  double l00 = std::sqrt(spec.cov.at(0, 0));
  double l10 = spec.cov.at(1, 0) / l00;
  double det_term = spec.cov.at(1, 1) - l10 * l10;
  if (!(det_term > 0.0)) throw std::invalid_argument("correlated_gaussian_2d: cov not SPD");
  double l11 = std::sqrt(det_term);
  Dataset d;
  d.points = Tensor({spec.n, 2});
  for (std::size_t i = 0; i < spec.n; ++i) {
    double z0 = rng.normal(), z1 = rng.normal();
    d.points.at(i, 0) = spec.mean[0] + l00 * z0;
    d.points.at(i, 1) = spec.mean[1] + l10 * z0 + l11 * z1;
  }
  return d;
}

Dataset gen_blr(const BlrSpec& spec, RngStream& rng) {
  if (spec.true_w.size() != spec.dim) {
    throw std::invalid_argument("blr: true_w must have length dim");
  }
  Dataset d;
  d.supervised = true;
  d.batch.x = Tensor({spec.n, spec.dim});
  d.batch.y = Tensor({spec.n, 1});
  for (std::size_t i = 0; i < spec.n; ++i) {
    double dotp = 0.0;
    for (std::size_t j = 0; j < spec.dim; ++j) {
      double x = rng.normal();
      d.batch.x.at(i, j) = x;
      dotp += x * spec.true_w[j];
    }
    d.batch.y.at(i, 0) = dotp + spec.sigma * rng.normal();
  }
  return d;
}

}  // namespace

Dataset generate(const DatasetSpec& spec) {
  RngStream rng(spec.seed, kDataStream);
  return std::visit(
      [&rng](const auto& s) -> Dataset {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Regression1dSpec>) return gen_regression(s, rng);
        else if constexpr (std::is_same_v<T, TwoMoonsSpec>) return gen_two_moons(s, rng);
        else if constexpr (std::is_same_v<T, GaussianMixture1dSpec>) return gen_mixture(s, rng);
        else if constexpr (std::is_same_v<T, CorrelatedGaussian2dSpec>) return gen_correlated(s, rng);
        else return gen_blr(s, rng);
      },
      spec.kind);
}

vi::DensityTarget gaussian_density_target(const std::vector<double>& mean, const Tensor& cov) {
  const std::size_t d = mean.size();
  if (cov.rank() != 2 || cov.rows() != d || cov.cols() != d) {
    throw std::invalid_argument("gaussian_density_target: cov must be [d, d]");
  }
  // Precision matrix via column-wise Cholesky solves.
  SmallCholesky chol(cov.values(), d);
  Tensor precision({d, d});
  for (std::size_t j = 0; j < d; ++j) {
    std::vector<double> e(d, 0.0);
    e[j] = 1.0;
    std::vector<double> col = chol.solve(e);
    for (std::size_t i = 0; i < d; ++i) precision.at(i, j) = col[i];
  }
  Tensor mean_row({1, d});
  for (std::size_t i = 0; i < d; ++i) mean_row.at(0, i) = mean[i];

  vi::DensityTarget target;
  target.dim = d;
  target.log_density = [precision, mean_row](Tape& tape, NodeId theta) {
    NodeId diff = tape.sub(theta, tape.constant(mean_row));
    NodeId quad = tape.sum(tape.mul(tape.matmul(diff, tape.constant(precision)), diff));
    return tape.scale(quad, -0.5);
  };
  target.log_density_plain = [precision, mean_row, d](const double* theta, double* grad_out) {
    double quad = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      double gi = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        gi += precision.at(i, j) * (theta[j] - mean_row.at(0, j));
      }
      grad_out[i] = -gi;
      quad += (theta[i] - mean_row.at(0, i)) * gi;
    }
    return -0.5 * quad;
  };
  return target;
}

}  // namespace binfer::harness
