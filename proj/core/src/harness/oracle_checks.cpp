#include <cmath>
#include <sstream>

#include "binfer/harness/checks.hpp"
#include "binfer/harness/oracles.hpp"
#include "binfer/rng.hpp"

namespace binfer::harness {

namespace {

OracleCheck check(const std::string& name, bool pass, double observed, double want,
                  const char* relation = "~") {
  std::ostringstream os;
  os << "observed " << observed << " " << relation << " " << want;
  return {name, pass, os.str()};
}

Tensor random_spd(std::size_t d, RngStream& rng) {
  Tensor a({d, d});
  for (std::size_t i = 0; i < d * d; ++i) a.data()[i] = rng.normal();
  Tensor s({d, d});
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double acc = i == j ? 0.3 : 0.0;  // diagonal lift keeps it well-conditioned
      for (std::size_t k = 0; k < d; ++k) acc += a.at(i, k) * a.at(j, k) / static_cast<double>(d);
      s.at(i, j) = acc;
    }
  }
  return s;
}

}  // namespace

std::vector<OracleCheck> oracle_selftests() {
  std::vector<OracleCheck> out;
  RngStream rng(0xa11c, 4);

  // BLR: hand-computable 1-D case, X = [1], y = [1], sigma = tau = 1.
  {
    Tensor x = Tensor::matrix(1, 1, {1.0});
    Tensor y = Tensor::matrix(1, 1, {1.0});
    BlrPosterior post = exact_blr_posterior(x, y, 1.0, 1.0);
    bool ok = std::fabs(post.mean[0] - 0.5) < 1e-12 && std::fabs(post.cov.at(0, 0) - 0.5) < 1e-12;
    out.push_back(check("blr_hand_1d", ok, post.mean[0], 0.5, "=="));
  }
  // BLR: no data recovers the prior with evidence 0.
  {
    Tensor x({0, 3});
    Tensor y({0, 1});
    BlrPosterior post = exact_blr_posterior(x, y, 0.7, 2.0);
    bool ok = std::fabs(post.log_evidence) < 1e-14;
    for (std::size_t i = 0; i < 3; ++i) {
      ok = ok && std::fabs(post.mean[i]) < 1e-14 && std::fabs(post.cov.at(i, i) - 4.0) < 1e-12;
    }
    out.push_back(check("blr_prior_recovery", ok, post.log_evidence, 0.0, "=="));
  }
  // BLR: posterior mean approaches least squares at N = 1e4.
  {
    const std::size_t n = 10000, d = 3;
    std::vector<double> w{0.8, -1.1, 0.4};
    Tensor x({n, d}), y({n, 1});
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        x.at(i, j) = rng.normal();
        dot += x.at(i, j) * w[j];
      }
      y.at(i, 0) = dot + 0.3 * rng.normal();
    }
    BlrPosterior post = exact_blr_posterior(x, y, 0.3, 1.0);
    // Least squares via normal equations with the prior term dropped.
    BlrPosterior ls = exact_blr_posterior(x, y, 0.3, 1e6);
    double rel = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      rel = std::max(rel, std::fabs(post.mean[j] - ls.mean[j]) / std::fabs(ls.mean[j]));
    }
    out.push_back(check("blr_consistency_n1e4", rel < 0.01, rel, 0.01, "<"));
  }
  // Quadrature: standard Gaussian energy on [-8, 8], 2048 points.
  {
    ebm::Box box{{-8.0}, {8.0}};
    GridDensity g = grid_normalize(
        [](const std::vector<double>& p) { return 0.5 * p[0] * p[0]; }, box, 2048);
    double max_err = 0.0;
    for (std::size_t i = 0; i < g.density.size(); ++i) {
      double pdf = std::exp(-0.5 * g.points.at(i, 0) * g.points.at(i, 0)) /
                   std::sqrt(2.0 * M_PI);
      max_err = std::max(max_err, std::fabs(g.density[i] - pdf));
    }
    bool ok = max_err < 1e-4 && std::fabs(g.integral() - 1.0) < 1e-6;
    out.push_back(check("quadrature_gaussian", ok, max_err, 1e-4, "<"));
  }
  // Quadrature: flat energy is uniform.
  {
    ebm::Box box{{-2.0}, {3.0}};
    GridDensity g = grid_normalize([](const std::vector<double>&) { return 1.7; }, box, 256);
    double max_err = 0.0;
    for (double d : g.density) max_err = std::max(max_err, std::fabs(d - 1.0 / 5.0));
    out.push_back(check("quadrature_flat", max_err < 1e-12, max_err, 1e-12, "<"));
  }
  // Quadrature: trapezoid error drops ~4x when the grid is refined 2x. The
  // integrand must have nonzero boundary slope (a truncated Gaussian is
  // super-algebraically accurate, hiding the h^2 term), so use E(x) = x.
  {
    ebm::Box box{{0.0}, {3.0}};
    auto energy = [](const std::vector<double>& p) { return p[0]; };
    double z_true = 1.0 - std::exp(-3.0);
    auto z_err = [&](std::size_t n) {
      GridDensity g = grid_normalize(energy, box, n);
      return std::fabs(std::exp(g.log_z) - z_true);
    };
    double ratio = z_err(33) / z_err(65);
    bool ok = ratio > 3.4 && ratio < 4.6;
    out.push_back(check("quadrature_order", ok, ratio, 4.0));
  }
  // Mean-field fixed point: diagonal target is exact.
  {
    Tensor cov = Tensor::matrix(2, 2, {1.7, 0.0, 0.0, 0.4});
    std::vector<double> v = mf_fixed_point_oracle(cov);
    bool ok = std::fabs(v[0] - 1.7) < 1e-12 && std::fabs(v[1] - 0.4) < 1e-12;
    out.push_back(check("mf_fixed_point_diagonal", ok, v[0], 1.7, "=="));
  }
  // Mean-field fixed point: the correlated 2-D study target.
  {
    Tensor cov = Tensor::matrix(2, 2, {2.0, 1.5, 1.5, 1.6});
    std::vector<double> v = mf_fixed_point_oracle(cov);
    bool ok = std::fabs(v[0] - 0.59375) < 1e-12 && std::fabs(v[1] - 0.475) < 1e-12;
    out.push_back(check("mf_fixed_point_study_target", ok, v[0], 0.59375, "=="));
  }
  // Mean-field fixed point: v_i <= cov_ii on random SPD matrices.
  {
    bool ok = true;
    for (int trial = 0; trial < 100 && ok; ++trial) {
      std::size_t d = 2 + rng.uniform_index(4);
      Tensor cov = random_spd(d, rng);
      std::vector<double> v = mf_fixed_point_oracle(cov);
      for (std::size_t i = 0; i < d; ++i) ok = ok && v[i] <= cov.at(i, i) + 1e-12;
    }
    out.push_back({"mf_fixed_point_underestimates", ok, "v_i <= cov_ii on 100 random SPD"});
  }
  // PPCA posterior: log p(x|z) + log p(z) - log post(z) constant over z.
  {
    dlvm::PPCAModel m;
    m.w = Tensor::matrix(3, 2, {0.9, -0.3, 0.5, 0.7, -0.2, 0.4});
    m.b = Tensor::vector({0.1, -0.2, 0.3});
    m.sigma = 0.6;
    std::vector<double> x{0.7, -0.4, 0.9};
    PpcaPosterior post = ppca_posterior(m, x);
    Tensor lik_cov({3, 3});
    for (std::size_t i = 0; i < 3; ++i) lik_cov.at(i, i) = m.sigma * m.sigma;
    Tensor z_prior_cov = Tensor::matrix(2, 2, {1, 0, 0, 1});
    double ref = 0.0;
    bool ok = true;
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> z{rng.normal(), rng.normal()};
      std::vector<double> mean_x(3);
      for (std::size_t i = 0; i < 3; ++i) {
        mean_x[i] = m.b[i];
        for (std::size_t k = 0; k < 2; ++k) mean_x[i] += m.w.at(i, k) * z[k];
      }
      double joint = dense_gaussian_logpdf(x, mean_x, lik_cov) +
                     dense_gaussian_logpdf(z, {0.0, 0.0}, z_prior_cov);
      double post_lp = dense_gaussian_logpdf(z, post.mean, post.cov);
      double c = joint - post_lp;
      if (trial == 0) ref = c;
      ok = ok && std::fabs(c - ref) < 1e-9;
    }
    out.push_back({"ppca_posterior_bayes_identity", ok,
                   "joint/posterior ratio constant over 20 z draws"});
  }
  // PPCA MLE beats the generating model in-sample.
  {
    dlvm::PPCAModel gen;
    gen.w = Tensor::matrix(2, 1, {1.2, 0.7});
    gen.b = Tensor::vector({0.4, -0.1});
    gen.sigma = 0.5;
    const std::size_t n = 2000;
    Tensor data({n, 2});
    for (std::size_t i = 0; i < n; ++i) {
      double z = rng.normal();
      data.at(i, 0) = gen.b[0] + gen.w.at(0, 0) * z + gen.sigma * rng.normal();
      data.at(i, 1) = gen.b[1] + gen.w.at(1, 0) * z + gen.sigma * rng.normal();
    }
    PpcaMle mle = ppca_mle(data, 1);
    Tensor gen_cov({2, 2});
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t j = 0; j < 2; ++j) {
        gen_cov.at(i, j) = gen.w.at(i, 0) * gen.w.at(j, 0) +
                           (i == j ? gen.sigma * gen.sigma : 0.0);
      }
    }
    double gen_ll = 0.0;
    std::vector<double> mean_v(gen.b.values());
    std::vector<double> row(2);
    for (std::size_t i = 0; i < n; ++i) {
      row[0] = data.at(i, 0);
      row[1] = data.at(i, 1);
      gen_ll += dense_gaussian_logpdf(row, mean_v, gen_cov);
    }
    gen_ll /= static_cast<double>(n);
    out.push_back(check("ppca_mle_optimality", mle.mean_loglik >= gen_ll - 1e-9,
                        mle.mean_loglik, gen_ll, ">="));
  }
  return out;
}

}  // namespace binfer::harness
