#include "binfer/harness/oracles.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace binfer::harness {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

Eigen::MatrixXd to_eigen(const Tensor& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) m(i, j) = t.at(i, j);
  }
  return m;
}

Tensor from_eigen(const Eigen::MatrixXd& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) t.at(i, j) = m(i, j);
  }
  return t;
}

}  // namespace

BlrPosterior exact_blr_posterior(const Tensor& x, const Tensor& y, double sigma, double tau) {
  if (!(sigma > 0.0) || !(tau > 0.0)) {
    throw std::invalid_argument("exact_blr_posterior: sigma and tau must be > 0");
  }
  const std::size_t n = x.rank() == 2 ? x.rows() : 0;
  const std::size_t d = x.rank() == 2 ? x.cols() : y.size();  // dim from x when present
  if (n > 0 && (y.size() != n)) {
    throw std::invalid_argument("exact_blr_posterior: y must have one entry per row of X");
  }

  Eigen::MatrixXd xm = n > 0 ? to_eigen(x) : Eigen::MatrixXd(0, d);
  Eigen::VectorXd yv(n);
  for (std::size_t i = 0; i < n; ++i) yv(static_cast<Eigen::Index>(i)) = y.data()[i];

  const double s2 = sigma * sigma, t2 = tau * tau;
  Eigen::MatrixXd xtx = xm.transpose() * xm;
  Eigen::MatrixXd lambda = xtx / s2 + Eigen::MatrixXd::Identity(d, d) / t2;
  Eigen::LLT<Eigen::MatrixXd> llt(lambda);
  if (llt.info() != Eigen::Success) {
    throw std::domain_error("exact_blr_posterior: precision not positive definite");
  }
  Eigen::VectorXd xty = xm.transpose() * yv;
  Eigen::VectorXd mean = llt.solve(xty / s2);
  Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(d, d));

  // log p(y) = -n/2 log(2 pi sigma^2) - 1/2 log det(I + tau^2 XtX / sigma^2)
  //            - |y|^2 / (2 sigma^2) + 1/2 m^T Lambda m
  Eigen::MatrixXd cap = Eigen::MatrixXd::Identity(d, d) + (t2 / s2) * xtx;
  double log_det_cap = Eigen::LLT<Eigen::MatrixXd>(cap).matrixL().toDenseMatrix().diagonal()
                           .array().log().sum() * 2.0;
  double quad = n > 0 ? yv.squaredNorm() / s2 - mean.dot(lambda * mean) : 0.0;
  double log_evidence = n == 0 ? 0.0
                               : -0.5 * static_cast<double>(n) * (kLog2Pi + 2.0 * std::log(sigma)) -
                                     0.5 * log_det_cap - 0.5 * quad;

  BlrPosterior post;
  post.mean.assign(mean.data(), mean.data() + d);
  post.cov = from_eigen(cov);
  post.log_evidence = log_evidence;
  return post;
}

GaussianPrediction blr_posterior_predictive(const BlrPosterior& post,
                                            const std::vector<double>& x_star, double sigma) {
  const std::size_t d = post.mean.size();
  if (x_star.size() != d) throw std::invalid_argument("blr predictive: dimension mismatch");
  GaussianPrediction p;
  for (std::size_t i = 0; i < d; ++i) p.mean += x_star[i] * post.mean[i];
  double quad = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) quad += x_star[i] * post.cov.at(i, j) * x_star[j];
  }
  p.variance = quad + sigma * sigma;
  return p;
}

std::vector<double> mf_fixed_point_oracle(const Tensor& cov) {
  if (cov.rank() != 2 || cov.rows() != cov.cols()) {
    throw std::invalid_argument("mf_fixed_point_oracle: square matrix required");
  }
  Eigen::MatrixXd c = to_eigen(cov);
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  if (llt.info() != Eigen::Success) {
    throw std::domain_error("mf_fixed_point_oracle: covariance not SPD");
  }
  Eigen::MatrixXd prec = llt.solve(Eigen::MatrixXd::Identity(c.rows(), c.cols()));
  std::vector<double> v(static_cast<std::size_t>(c.rows()));
  for (Eigen::Index i = 0; i < c.rows(); ++i) v[static_cast<std::size_t>(i)] = 1.0 / prec(i, i);
  return v;
}

double dense_gaussian_logpdf(const std::vector<double>& x, const std::vector<double>& mean,
                             const Tensor& cov) {
  const std::size_t d = x.size();
  if (mean.size() != d || cov.rows() != d || cov.cols() != d) {
    throw std::invalid_argument("dense_gaussian_logpdf: shape mismatch");
  }
  Eigen::MatrixXd c = to_eigen(cov);
  Eigen::VectorXd diff(d);
  for (std::size_t i = 0; i < d; ++i) diff(static_cast<Eigen::Index>(i)) = x[i] - mean[i];
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  if (llt.info() != Eigen::Success) {
    throw std::domain_error("dense_gaussian_logpdf: covariance not SPD");
  }
  double log_det =
      llt.matrixL().toDenseMatrix().diagonal().array().log().sum() * 2.0;
  double quad = diff.dot(llt.solve(diff));
  return -0.5 * (static_cast<double>(d) * kLog2Pi + log_det + quad);
}

double GridDensity::integral() const {
  double s = 0.0;
  for (std::size_t i = 0; i < density.size(); ++i) s += weights[i] * density[i];
  return s;
}

GridDensity grid_normalize(const EnergyFn& energy, const ebm::Box& box, std::size_t n_points) {
  const std::size_t d = box.lo.size();
  if (d == 0 || d > 2) throw std::invalid_argument("grid_normalize: 1-D or 2-D only");
  if (box.hi.size() != d) throw std::invalid_argument("grid_normalize: box lo/hi mismatch");
  if (n_points < 2) throw std::invalid_argument("grid_normalize: need >= 2 points per axis");

  std::vector<std::vector<double>> axes(d);
  std::vector<double> h(d);
  for (std::size_t a = 0; a < d; ++a) {
    if (!(box.hi[a] > box.lo[a])) throw std::invalid_argument("grid_normalize: empty box");
    h[a] = (box.hi[a] - box.lo[a]) / static_cast<double>(n_points - 1);
    axes[a].resize(n_points);
    for (std::size_t i = 0; i < n_points; ++i) {
      axes[a][i] = box.lo[a] + static_cast<double>(i) * h[a];
    }
  }

  const std::size_t total = d == 1 ? n_points : n_points * n_points;
  GridDensity g;
  g.points = Tensor({total, d});
  g.energy.resize(total);
  g.weights.resize(total);
  g.density.resize(total);

  std::vector<double> pt(d);
  for (std::size_t i = 0; i < total; ++i) {
    double w = 1.0;
    if (d == 1) {
      pt[0] = axes[0][i];
      w = (i == 0 || i == n_points - 1) ? 0.5 * h[0] : h[0];
    } else {
      std::size_t r = i / n_points, c = i % n_points;
      pt[0] = axes[0][r];
      pt[1] = axes[1][c];
      double wr = (r == 0 || r == n_points - 1) ? 0.5 * h[0] : h[0];
      double wc = (c == 0 || c == n_points - 1) ? 0.5 * h[1] : h[1];
      w = wr * wc;
    }
    for (std::size_t a = 0; a < d; ++a) g.points.at(i, a) = pt[a];
    g.energy[i] = energy(pt);
    g.weights[i] = w;
  }

  // Shifted normalization keeps exp in range for any energy offset.
  double emin = g.energy[0];
  for (double e : g.energy) emin = std::min(emin, e);
  double z = 0.0;
  for (std::size_t i = 0; i < total; ++i) z += g.weights[i] * std::exp(-(g.energy[i] - emin));
  g.log_z = std::log(z) - emin;
  for (std::size_t i = 0; i < total; ++i) {
    g.density[i] = std::exp(-(g.energy[i] - emin)) / z;
  }
  return g;
}

GridDensity grid_normalize(const ebm::EnergyModel& model, const ebm::Box& box,
                           std::size_t n_points) {
  model.validate();
  return grid_normalize(
      [&model](const std::vector<double>& pt) {
        Tensor x({1, pt.size()});
        for (std::size_t j = 0; j < pt.size(); ++j) x.at(0, j) = pt[j];
        return ebm::energy_batch(model, x)[0];
      },
      box, n_points);
}

double grid_tv_distance(const GridDensity& p, const std::vector<double>& q_density) {
  if (q_density.size() != p.density.size()) {
    throw std::invalid_argument("grid_tv_distance: grids differ");
  }
  double tv = 0.0;
  for (std::size_t i = 0; i < p.density.size(); ++i) {
    tv += p.weights[i] * std::fabs(p.density[i] - q_density[i]);
  }
  return 0.5 * tv;
}

PpcaPosterior ppca_posterior(const dlvm::PPCAModel& model, const std::vector<double>& x) {
  model.validate();
  const std::size_t dx = model.data_dim(), dz = model.latent_dim();
  if (x.size() != dx) throw std::invalid_argument("ppca_posterior: dimension mismatch");
  const double s2 = model.sigma * model.sigma;

  Eigen::MatrixXd w = to_eigen(model.w);
  Eigen::MatrixXd prec = Eigen::MatrixXd::Identity(dz, dz) + w.transpose() * w / s2;
  Eigen::LLT<Eigen::MatrixXd> llt(prec);
  Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(dz, dz));
  Eigen::VectorXd centered(dx);
  for (std::size_t i = 0; i < dx; ++i) {
    centered(static_cast<Eigen::Index>(i)) = x[i] - model.b.data()[i];
  }
  Eigen::VectorXd mean = llt.solve(w.transpose() * centered / s2);

  PpcaPosterior post;
  post.mean.assign(mean.data(), mean.data() + dz);
  post.cov = from_eigen(cov);
  return post;
}

PpcaMle ppca_mle(const Tensor& data, std::size_t d_z) {
  if (data.rank() != 2 || data.rows() < 2) {
    throw std::invalid_argument("ppca_mle: need a [n, d] sample matrix with n >= 2");
  }
  const std::size_t n = data.rows(), dx = data.cols();
  if (d_z == 0 || d_z >= dx) throw std::invalid_argument("ppca_mle: need 1 <= d_z < d_x");

  Eigen::MatrixXd xm = to_eigen(data);
  Eigen::RowVectorXd mean = xm.colwise().mean();
  Eigen::MatrixXd centered = xm.rowwise() - mean;
  Eigen::MatrixXd s = centered.transpose() * centered / static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
  if (eig.info() != Eigen::Success) throw std::domain_error("ppca_mle: eigensolver failed");
  // Ascending eigenvalues; take the top d_z.
  Eigen::VectorXd evals = eig.eigenvalues();
  Eigen::MatrixXd evecs = eig.eigenvectors();

  double sigma2 = 0.0;
  for (std::size_t i = 0; i < dx - d_z; ++i) sigma2 += evals(static_cast<Eigen::Index>(i));
  sigma2 /= static_cast<double>(dx - d_z);
  if (!(sigma2 > 0.0)) throw std::domain_error("ppca_mle: degenerate sample covariance");

  Tensor w({dx, d_z});
  for (std::size_t k = 0; k < d_z; ++k) {
    Eigen::Index col = static_cast<Eigen::Index>(dx - 1 - k);  // largest first
    double lam = evals(col);
    if (lam < sigma2) throw std::domain_error("ppca_mle: eigenvalue below noise floor");
    double scale = std::sqrt(lam - sigma2);
    for (std::size_t i = 0; i < dx; ++i) {
      w.at(i, k) = evecs(static_cast<Eigen::Index>(i), col) * scale;
    }
  }

  PpcaMle out;
  out.model.w = std::move(w);
  out.model.b = Tensor({dx});
  for (std::size_t i = 0; i < dx; ++i) out.model.b[i] = mean(static_cast<Eigen::Index>(i));
  out.model.sigma = std::sqrt(sigma2);

  // Evaluate the achieved marginal likelihood with the dense Gaussian form so
  // the oracle stays independent of dlvm::ppca_exact_loglik.
  Eigen::MatrixXd wm = to_eigen(out.model.w);
  Eigen::MatrixXd cov = wm * wm.transpose() +
                        sigma2 * Eigen::MatrixXd::Identity(dx, dx);
  Tensor cov_t = from_eigen(cov);
  std::vector<double> mean_v(out.model.b.values());
  double total = 0.0;
  std::vector<double> row(dx);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dx; ++j) row[j] = data.at(i, j);
    total += dense_gaussian_logpdf(row, mean_v, cov_t);
  }
  out.mean_loglik = total / static_cast<double>(n);
  return out;
}

}  // namespace binfer::harness
