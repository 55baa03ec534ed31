#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "binfer/harness/metrics.hpp"
#include "binfer/harness/oracles.hpp"
#include "binfer/sgmcmc.hpp"

using namespace binfer;
using sgmcmc::Schedule;
using sgmcmc::SGHMCConfig;
using sgmcmc::SGHMCState;

TEST_CASE("cyclical schedule golden values") {
  Schedule s = Schedule::cyclical(0.1, 2, 100);
  CHECK(std::fabs(sgmcmc::schedule_step(s, 1) - 0.1) < 1e-15);
  CHECK(std::fabs(sgmcmc::schedule_step(s, 26) - 0.05) < 1e-15);
  CHECK(std::fabs(sgmcmc::schedule_step(s, 51) - 0.1) < 1e-15);
}

TEST_CASE("cyclical schedule stays in (0, alpha0], peaks at cycle starts, is periodic") {
  Schedule s = Schedule::cyclical(0.2, 4, 400);
  const std::size_t period = 100;
  for (std::size_t t = 1; t <= 400; ++t) {
    double a = sgmcmc::schedule_step(s, t);
    CHECK(a > 0.0);
    CHECK(a <= 0.2 + 1e-15);
    if (t > period) {
      CHECK(a == doctest::Approx(sgmcmc::schedule_step(s, t - period)).epsilon(1e-14));
    }
  }
  CHECK(sgmcmc::schedule_step(s, 1) == doctest::Approx(0.2));
  CHECK(sgmcmc::schedule_step(s, 101) == doctest::Approx(0.2));
  CHECK_THROWS_AS(sgmcmc::schedule_step(s, 401), std::invalid_argument);
  CHECK_THROWS_AS(sgmcmc::schedule_step(s, 0), std::invalid_argument);
}

TEST_CASE("polynomial schedule satisfies the step-size conditions numerically") {
  Schedule s = Schedule::polynomial(1.0, 0.0, 1.0);  // alpha_t = 1/t
  double sum5 = 0.0, sum6 = 0.0, sq = 0.0;
  for (std::size_t t = 1; t <= 100000; ++t) sum5 += sgmcmc::schedule_step(s, t);
  sum6 = sum5;
  for (std::size_t t = 100001; t <= 1000000; ++t) sum6 += sgmcmc::schedule_step(s, t);
  // divergent sum: still growing by ~ln(10) between horizons
  CHECK(sum6 - sum5 > 2.0);
  for (std::size_t t = 1; t <= 1000000; ++t) {
    double a = sgmcmc::schedule_step(s, t);
    sq += a * a;
  }
  // convergent square sum: pi^2/6 up to the 1/T tail
  CHECK(std::fabs(sq - M_PI * M_PI / 6.0) < 2e-6);
}

TEST_CASE("schedule validation enforces gamma in (0.5, 1]") {
  CHECK_THROWS_AS(Schedule::polynomial(1.0, 0.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(Schedule::polynomial(1.0, 0.0, 1.2), std::invalid_argument);
  CHECK_THROWS_AS(Schedule::polynomial(-1.0, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(Schedule::constant(0.0), std::invalid_argument);
  CHECK_NOTHROW(Schedule::polynomial(0.3, 10.0, 0.6));
}

TEST_CASE("sgld step follows its update rule exactly") {
  std::vector<double> theta{0.5, -1.0, 2.0};
  std::vector<double> grad{1.0, 0.0, -2.0};
  double alpha = 1e-3;

  RngStream rng(42, 0);
  RngStream shadow(42, 0);
  std::vector<double> updated = theta;
  sgmcmc::sgld_step(updated, grad, alpha, rng);

  for (std::size_t i = 0; i < theta.size(); ++i) {
    double eps = shadow.normal();
    CHECK(updated[i] == theta[i] - alpha * grad[i] + std::sqrt(2 * alpha) * eps);
  }
  // exactly dim normal draws consumed: both streams now aligned
  CHECK(rng.raw() == shadow.raw());
}

TEST_CASE("sgld rejects non-finite gradients and bad step sizes") {
  std::vector<double> theta{0.0};
  std::vector<double> bad{std::nan("")};
  RngStream rng(1, 0);
  CHECK_THROWS_AS(sgmcmc::sgld_step(theta, bad, 1e-3, rng), std::domain_error);
  std::vector<double> g{1.0};
  CHECK_THROWS_AS(sgmcmc::sgld_step(theta, g, 0.0, rng), std::invalid_argument);
}

TEST_CASE("sghmc frictionless limit is pure Hamiltonian drift") {
  SGHMCState s;
  s.theta = {1.0, -0.5};
  s.momentum = {0.3, 0.8};
  std::vector<double> grad{0.0, 0.0};
  SGHMCConfig cfg{0.0, 2.0};  // C = 0: noise scale vanishes
  RngStream rng(7, 0);
  double alpha = 0.01;
  sgmcmc::sghmc_step(s, grad, alpha, cfg, rng);
  CHECK(s.momentum[0] == 0.3);
  CHECK(s.momentum[1] == 0.8);
  CHECK(s.theta[0] == doctest::Approx(1.0 + alpha * 0.3 / 2.0).epsilon(1e-15));
  CHECK(s.theta[1] == doctest::Approx(-0.5 + alpha * 0.8 / 2.0).epsilon(1e-15));
}

TEST_CASE("sghmc friction contracts the momentum by (1 - alpha C / m) per step") {
  SGHMCState s;
  s.theta = {0.0};
  s.momentum = {1.0};
  std::vector<double> grad{0.0};
  SGHMCConfig cfg{2.0, 1.5};
  double alpha = 0.01;
  RngStream rng(3, 0);
  RngStream shadow(3, 0);
  sgmcmc::sghmc_step(s, grad, alpha, cfg, rng);
  double eps = shadow.normal();
  double expect = 1.0 * (1.0 - alpha * cfg.friction / cfg.mass) +
                  std::sqrt(2 * alpha * cfg.friction) * eps;
  CHECK(s.momentum[0] == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("sgld matches the moments of a standard normal target") {
  // U = theta^2 / 2 per coordinate; 64 independent replicas run as one
  // vector so the chain-mean noise (autocorrelation time ~ 2/alpha) pools
  // below the stated band.
  RngStream rng(1234, 0);
  const double alpha = 1e-3;
  const std::size_t steps = 200000, reps = 64;
  std::vector<double> th(reps, 0.0), g(reps);
  double sum = 0.0, sq = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    g = th;
    sgmcmc::sgld_step(th, g, alpha, rng);
    for (double v : th) {
      sum += v;
      sq += v * v;
    }
  }
  double n = static_cast<double>(steps * reps);
  double mean = sum / n;
  double var = sq / n - mean * mean;
  CHECK(std::fabs(mean) < 0.03);
  CHECK(std::fabs(var - 1.0) < 0.05);
}

TEST_CASE("sghmc matches the moments of a standard normal target") {
  RngStream rng(99, 0);
  const std::size_t steps = 200000, reps = 64;
  SGHMCState s;
  s.theta.assign(reps, 0.0);
  s.momentum.assign(reps, 0.0);
  SGHMCConfig cfg{1.0, 1.0};
  double alpha = 1e-3;
  std::vector<double> g(reps);
  double sum = 0.0, sq = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    g = s.theta;
    sgmcmc::sghmc_step(s, g, alpha, cfg, rng);
    for (double v : s.theta) {
      sum += v;
      sq += v * v;
    }
  }
  double n = static_cast<double>(steps * reps);
  double mean = sum / n;
  double var = sq / n - mean * mean;
  CHECK(std::fabs(mean) < 0.05);
  CHECK(std::fabs(var - 1.0) < 0.07);
}

namespace {

nets::ModelContext linear_model(std::size_t dim, double sigma, double tau) {
  nets::Architecture arch{{dim, 1}, nets::Activation::kRelu};
  return {arch, nets::LikelihoodConfig::gaussian(sigma), {tau}};
}

// Zero out the bias coordinate so the model is y = w.x exactly: keep the bias
// but give the oracle an extra constant column instead.
nets::Batch blr_batch_with_bias_column(const Tensor& x, const Tensor& y) {
  nets::Batch b;
  b.x = x;
  b.y = y;
  return b;
}

}  // namespace

TEST_CASE("zero-data chain matches the prior") {
  // 24 parameters give 24 independent prior coordinates; moments pooled
  // across coordinates stay inside the 5% band.
  nets::ModelContext model = linear_model(23, 0.5, 1.0);
  nets::Batch empty;
  empty.x = Tensor({0, 23});

  sgmcmc::SamplerConfig cfg;
  cfg.kind = sgmcmc::SamplerConfig::Kind::kSgld;
  cfg.schedule = Schedule::constant(2e-2);
  cfg.steps = 60000;
  cfg.burn_in = 5000;
  cfg.thin = 2;

  RngStream rng(2024, 0);
  nets::ParamVector init = nets::make_params(model.arch);
  sgmcmc::Chain chain = sgmcmc::run_chain(model, empty, init, cfg, rng);

  std::vector<double> mean = chain.mean();
  std::vector<double> var = chain.variance();
  double pooled_mean = 0.0, pooled_var = 0.0;
  for (std::size_t i = 0; i < chain.dim; ++i) {
    pooled_mean += mean[i];
    pooled_var += var[i];
  }
  pooled_mean /= static_cast<double>(chain.dim);
  pooled_var /= static_cast<double>(chain.dim);
  CHECK(std::fabs(pooled_mean) < 0.05);
  CHECK(std::fabs(pooled_var - 1.0) < 0.05);
}

TEST_CASE("identical config and seed give bit-identical chains") {
  nets::ModelContext model = linear_model(2, 0.5, 1.0);
  RngStream data_rng(5, 77);
  nets::Batch data;
  data.x = data_rng.normal_tensor({16, 2});
  data.y = data_rng.normal_tensor({16, 1});

  sgmcmc::SamplerConfig cfg;
  cfg.schedule = Schedule::constant(1e-3);
  cfg.steps = 500;
  cfg.batch_size = 4;

  nets::ParamVector init = nets::make_params(model.arch);
  RngStream r1(42, 3), r2(42, 3);
  sgmcmc::Chain a = sgmcmc::run_chain(model, data, init, cfg, r1);
  sgmcmc::Chain b = sgmcmc::run_chain(model, data, init, cfg, r2);
  REQUIRE(a.samples.size() == b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    for (std::size_t j = 0; j < a.dim; ++j) CHECK(a.samples[i][j] == b.samples[i][j]);
  }
}

TEST_CASE("divergence aborts with the offending step index") {
  nets::ModelContext model = linear_model(1, 0.1, 1.0);
  RngStream data_rng(6, 0);
  nets::Batch data;
  data.x = data_rng.normal_tensor({8, 1});
  data.y = data_rng.normal_tensor({8, 1});

  sgmcmc::SamplerConfig cfg;
  cfg.schedule = Schedule::constant(50.0);  // absurd step size
  cfg.steps = 1000;
  cfg.batch_size = 8;

  RngStream rng(1, 0);
  nets::ParamVector init = nets::make_params(model.arch);
  try {
    sgmcmc::run_chain(model, data, init, cfg, rng);
    FAIL("expected divergence");
  } catch (const sgmcmc::ChainDivergence& e) {
    CHECK(e.step() >= 1);
    CHECK(e.step() <= 1000);
  }
}

TEST_CASE("burn-in, thinning and the cyclical collection gate") {
  nets::ModelContext model = linear_model(1, 0.5, 1.0);
  RngStream data_rng(8, 0);
  nets::Batch data;
  data.x = data_rng.normal_tensor({8, 1});
  data.y = data_rng.normal_tensor({8, 1});
  nets::ParamVector init = nets::make_params(model.arch);

  SUBCASE("constant schedule follows (t >= burn_in) && (t - burn_in) % thin == 0") {
    sgmcmc::SamplerConfig cfg;
    cfg.schedule = Schedule::constant(1e-4);
    cfg.steps = 200;
    cfg.burn_in = 50;
    cfg.thin = 7;
    RngStream rng(9, 0);
    sgmcmc::Chain chain = sgmcmc::run_chain(model, data, init, cfg, rng);
    REQUIRE(!chain.step_indices.empty());
    for (std::size_t t : chain.step_indices) {
      CHECK(t >= 50);
      CHECK((t - 50) % 7 == 0);
    }
    std::size_t expected = 0;
    for (std::size_t t = 1; t <= 200; ++t) {
      if (t >= 50 && (t - 50) % 7 == 0) ++expected;
    }
    CHECK(chain.step_indices.size() == expected);
  }

  SUBCASE("cyclical gate keeps only low-step-size samples") {
    sgmcmc::SamplerConfig cfg;
    cfg.schedule = Schedule::cyclical(1e-3, 4, 400);
    cfg.steps = 400;
    cfg.burn_in = 1;
    cfg.thin = 1;
    cfg.collect_threshold = 0.1;
    RngStream rng(10, 0);
    sgmcmc::Chain chain = sgmcmc::run_chain(model, data, init, cfg, rng);
    REQUIRE(!chain.step_indices.empty());
    for (std::size_t t : chain.step_indices) {
      CHECK(sgmcmc::schedule_step(cfg.schedule, t) < 0.1 * 1e-3);
    }
    // and the gate actually rejects the exploration phase
    CHECK(chain.step_indices.size() < 400 / 2);
  }
}

TEST_CASE("metrics record one energy row per step") {
  nets::ModelContext model = linear_model(1, 0.5, 1.0);
  RngStream data_rng(11, 0);
  nets::Batch data;
  data.x = data_rng.normal_tensor({8, 1});
  data.y = data_rng.normal_tensor({8, 1});
  nets::ParamVector init = nets::make_params(model.arch);

  sgmcmc::SamplerConfig cfg;
  cfg.schedule = Schedule::constant(1e-4);
  cfg.steps = 97;
  harness::MemoryMetrics metrics;
  RngStream rng(12, 0);
  sgmcmc::run_chain(model, data, init, cfg, rng, &metrics);
  CHECK(metrics.series("energy").size() == 97);
}

TEST_CASE("SGLD bias on a Gaussian target shrinks as alpha decreases") {
  // 1-D conjugate regression; exact posterior from the oracle.
  RngStream data_rng(14, 0);
  const std::size_t n = 32;
  Tensor x({n, 1}), y({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    x.at(i, 0) = data_rng.normal();
    y.at(i, 0) = 0.7 * x.at(i, 0) + 0.5 * data_rng.normal();
  }
  harness::BlrPosterior post = harness::exact_blr_posterior(x, y, 0.5, 1.0);

  // Model = linear [1,1] with a bias; pin the bias-free structure by adding a
  // zero column: simpler to regress through the 2-parameter model and compare
  // against the matching 2-feature oracle.
  Tensor x2({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    x2.at(i, 0) = x.at(i, 0);
    x2.at(i, 1) = 1.0;  // bias feature
  }
  harness::BlrPosterior post2 = harness::exact_blr_posterior(x2, y, 0.5, 1.0);

  nets::ModelContext model = linear_model(1, 0.5, 1.0);
  nets::Batch data = blr_batch_with_bias_column(x, y);

  double prev_err = 1e9;
  for (double alpha : {1e-2, 1e-3, 1e-4}) {
    sgmcmc::SamplerConfig cfg;
    cfg.schedule = Schedule::constant(alpha);
    cfg.steps = static_cast<std::size_t>(60.0 / alpha / 100) * 100;
    cfg.steps = std::min<std::size_t>(cfg.steps, 300000);
    cfg.steps = std::max<std::size_t>(cfg.steps, 20000);
    cfg.batch_size = n;
    cfg.burn_in = cfg.steps / 5;
    cfg.thin = 5;
    RngStream rng(2000 + static_cast<std::uint64_t>(1.0 / alpha), 0);
    nets::ParamVector init = nets::make_params(model.arch);
    sgmcmc::Chain chain = sgmcmc::run_chain(model, data, init, cfg, rng);
    std::vector<double> var = chain.variance();
    // parameter order: W then b; oracle order: [w, bias]
    double err = std::fabs(var[0] - post2.cov.at(0, 0)) / post2.cov.at(0, 0) +
                 std::fabs(var[1] - post2.cov.at(1, 1)) / post2.cov.at(1, 1);
    CHECK(err < prev_err + 0.05);  // monotone up to Monte Carlo slack
    prev_err = err;
  }
  CHECK(prev_err < 0.25);
  (void)post;
}
