#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "binfer/nets.hpp"
#include "binfer/rng.hpp"
#include "binfer/tape.hpp"

using namespace binfer;
using nets::Activation;
using nets::Architecture;
using nets::Batch;
using nets::LikelihoodConfig;
using nets::ModelContext;
using nets::ParamVector;

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// All C(n, b) index subsets, lexicographic.
void subsets(std::size_t n, std::size_t b, std::vector<std::vector<std::size_t>>& out) {
  std::vector<std::size_t> idx(b);
  for (std::size_t i = 0; i < b; ++i) idx[i] = i;
  while (true) {
    out.push_back(idx);
    std::size_t i = b;
    while (i-- > 0) {
      if (idx[i] != i + n - b) break;
      if (i == 0) return;
    }
    if (idx[i] == i + n - b) return;
    ++idx[i];
    for (std::size_t j = i + 1; j < b; ++j) idx[j] = idx[j - 1] + 1;
  }
}
}  // namespace

TEST_CASE("depth-1 architecture is an exact linear model") {
  Architecture arch{{2, 1}, Activation::kRelu};
  ParamVector p = nets::make_params(arch);
  CHECK(p.dim() == 3);
  p.values = {1.5, -0.5, 0.25};  // W = [1.5, -0.5]^T, b = 0.25
  Tensor x = Tensor::matrix(2, 2, {1.0, 2.0, -1.0, 0.5});
  Tensor y = nets::mlp_forward(p, arch, x);
  CHECK(y.at(0, 0) == doctest::Approx(1.5 * 1.0 - 0.5 * 2.0 + 0.25));
  CHECK(y.at(1, 0) == doctest::Approx(1.5 * -1.0 - 0.5 * 0.5 + 0.25));
}

TEST_CASE("all-zero parameters map every input to zero") {
  Architecture arch{{3, 4, 2}, Activation::kTanh};
  ParamVector p = nets::make_params(arch);
  RngStream rng(5, 0);
  Tensor x = rng.normal_tensor({6, 3});
  Tensor y = nets::mlp_forward(p, arch, x);
  for (double v : y.values()) CHECK(v == 0.0);
}

TEST_CASE("two-layer relu forward against hand computation") {
  Architecture arch{{2, 2, 2}, Activation::kRelu};
  ParamVector p = nets::make_params(arch);
  // W1 = [[1, -1], [2, 0]], b1 = [0.5, -0.5], W2 = [[1, 2], [3, 4]], b2 = [0, 1]
  p.values = {1, -1, 2, 0, 0.5, -0.5, 1, 2, 3, 4, 0, 1};
  Tensor x = Tensor::matrix(1, 2, {1.0, 1.0});
  // h_pre = [1*1+2*1+0.5, -1*1+0*1-0.5] = [3.5, -1.5]; relu -> [3.5, 0]
  // out = [3.5*1+0*3+0, 3.5*2+0*4+1] = [3.5, 8]
  Tensor y = nets::mlp_forward(p, arch, x);
  CHECK(y.at(0, 0) == doctest::Approx(3.5));
  CHECK(y.at(0, 1) == doctest::Approx(8.0));
}

TEST_CASE("gaussian log-likelihood at the mean") {
  Architecture arch{{1, 1}, Activation::kRelu};
  ParamVector p = nets::make_params(arch);
  p.values = {2.0, 0.0};  // f(x) = 2x
  Batch b;
  b.x = Tensor::matrix(1, 1, {1.5});
  b.y = Tensor::matrix(1, 1, {3.0});  // y == f(x)
  double ll = nets::log_likelihood(p, arch, LikelihoodConfig::gaussian(1.0), b);
  CHECK(ll == doctest::Approx(-0.5 * kLog2Pi).epsilon(1e-12));
}

TEST_CASE("categorical likelihood with equal logits is uniform") {
  Architecture arch{{1, 4}, Activation::kRelu};
  ParamVector p = nets::make_params(arch);  // zeros: equal logits
  Batch b;
  b.x = Tensor::matrix(1, 1, {0.3});
  b.labels = {2};
  double ll = nets::log_likelihood(p, arch, LikelihoodConfig::categorical(4), b);
  CHECK(ll == doctest::Approx(std::log(0.25)).epsilon(1e-12));
}

TEST_CASE("categorical log-likelihoods normalize over labels") {
  Architecture arch{{2, 3, 3}, Activation::kTanh};
  RngStream rng(21, 0);
  ParamVector p = nets::init_params(arch, rng);
  Batch b;
  b.x = Tensor::matrix(1, 2, {0.7, -0.2});
  double total = 0.0;
  for (std::size_t y = 0; y < 3; ++y) {
    b.labels = {y};
    total += std::exp(nets::log_likelihood(p, arch, LikelihoodConfig::categorical(3), b));
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("label out of range is rejected") {
  Architecture arch{{1, 3}, Activation::kRelu};
  ParamVector p = nets::make_params(arch);
  Batch b;
  b.x = Tensor::matrix(1, 1, {0.0});
  b.labels = {3};
  CHECK_THROWS_AS(nets::log_likelihood(p, arch, LikelihoodConfig::categorical(3), b),
                  std::invalid_argument);
}

TEST_CASE("log prior closed forms") {
  Architecture arch{{1, 1}, Activation::kRelu};
  ParamVector p = nets::make_params(arch);
  SUBCASE("zero parameters") {
    double lp = nets::log_prior(p, {1.0});
    CHECK(lp == doctest::Approx(-0.5 * 2 * kLog2Pi).epsilon(1e-12));
  }
  SUBCASE("single unit parameter") {
    Architecture a1{{1, 1}, Activation::kRelu};
    ParamVector q = nets::make_params(a1);
    q.values = {1.0, 0.0};
    // matches sum over both coordinates: -(ln 2pi) - 1/2
    double lp = nets::log_prior(q, {1.0});
    CHECK(lp == doctest::Approx(-kLog2Pi - 0.5).epsilon(1e-12));
  }
}

TEST_CASE("gradient of log prior is -theta / tau^2") {
  Architecture arch{{2, 3}, Activation::kRelu};
  RngStream rng(2, 0);
  ParamVector p = nets::init_params(arch, rng);
  double tau = 1.7;
  Tape tape;
  nets::BoundParams bound = nets::bind_param_leaves(tape, p);
  std::vector<Tensor> grads = tape.backward(nets::log_prior_graph(tape, bound, {tau}));
  std::vector<double> flat = nets::collect_param_grads(bound, grads, p);
  for (std::size_t i = 0; i < p.dim(); ++i) {
    CHECK(flat[i] == doctest::Approx(-p.values[i] / (tau * tau)).epsilon(1e-12));
  }
}

TEST_CASE("full-batch energy equals the exact energy and scaling is |D|/|batch|") {
  Architecture arch{{1, 1}, Activation::kRelu};
  ModelContext model{arch, LikelihoodConfig::gaussian(0.5), {1.0}};
  RngStream rng(3, 0);
  ParamVector p = nets::init_params(arch, rng);

  Batch data;
  data.x = rng.normal_tensor({10, 1});
  data.y = rng.normal_tensor({10, 1});

  double full = nets::minibatch_energy(p, model, data, 10);
  double by_hand = -nets::log_likelihood(p, arch, model.likelihood, data) -
                   nets::log_prior(p, model.prior);
  CHECK(full == doctest::Approx(by_hand).epsilon(1e-12));

  // |D| = 10, |batch| = 2: likelihood term scaled by 5.
  std::vector<std::size_t> idx{1, 4};
  Batch mb = nets::subset(data, idx);
  double u = nets::minibatch_energy(p, model, mb, 10);
  double expect = -5.0 * nets::log_likelihood(p, arch, model.likelihood, mb) -
                  nets::log_prior(p, model.prior);
  CHECK(u == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("empty batch is rejected") {
  Architecture arch{{1, 1}, Activation::kRelu};
  ModelContext model{arch, LikelihoodConfig::gaussian(0.5), {1.0}};
  ParamVector p = nets::make_params(arch);
  Batch empty;
  empty.x = Tensor({0, 1});
  CHECK_THROWS_AS(nets::minibatch_energy(p, model, empty, 10), std::invalid_argument);
}

TEST_CASE("minibatch energy is unbiased: exhaustive enumeration at N = 6") {
  Architecture arch{{2, 3, 1}, Activation::kTanh};
  ModelContext model{arch, LikelihoodConfig::gaussian(0.4), {1.2}};
  RngStream rng(9, 0);
  ParamVector p = nets::init_params(arch, rng);

  const std::size_t n = 6, bsize = 2;
  Batch data;
  data.x = rng.normal_tensor({n, 2});
  data.y = rng.normal_tensor({n, 1});

  double full = nets::minibatch_energy(p, model, data, n);
  std::vector<std::vector<std::size_t>> all;
  subsets(n, bsize, all);
  double mean = 0.0;
  for (const auto& idx : all) {
    mean += nets::minibatch_energy(p, model, nets::subset(data, idx), n);
  }
  mean /= static_cast<double>(all.size());
  CHECK(mean == doctest::Approx(full).epsilon(1e-10));
}

TEST_CASE("minibatch energy is unbiased: 1000 uniform resamples") {
  Architecture arch{{1, 3, 1}, Activation::kRelu};
  ModelContext model{arch, LikelihoodConfig::gaussian(0.3), {1.0}};
  RngStream rng(31, 0);
  ParamVector p = nets::init_params(arch, rng);

  const std::size_t n = 24, bsize = 6;
  Batch data;
  data.x = rng.normal_tensor({n, 1});
  data.y = rng.normal_tensor({n, 1});
  double full = nets::minibatch_energy(p, model, data, n);

  double mean = 0.0;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (int rep = 0; rep < 1000; ++rep) {
    rng.shuffle(order);
    std::vector<std::size_t> idx(order.begin(), order.begin() + bsize);
    mean += nets::minibatch_energy(p, model, nets::subset(data, idx), n);
  }
  mean /= 1000.0;
  CHECK(std::fabs(mean - full) / std::fabs(full) < 0.01);
}

TEST_CASE("energy gradient matches finite differences") {
  Architecture arch{{2, 4, 1}, Activation::kTanh};
  ModelContext model{arch, LikelihoodConfig::gaussian(0.5), {1.0}};
  RngStream rng(13, 0);
  ParamVector p = nets::init_params(arch, rng);
  Batch data;
  data.x = rng.normal_tensor({5, 2});
  data.y = rng.normal_tensor({5, 1});

  std::vector<double> grad = nets::minibatch_energy_grad(p, model, data, 5);
  const double h = 1e-5;
  for (std::size_t i = 0; i < p.dim(); ++i) {
    ParamVector up = p, down = p;
    up.values[i] += h;
    down.values[i] -= h;
    double fd = (nets::minibatch_energy(up, model, data, 5) -
                 nets::minibatch_energy(down, model, data, 5)) /
                (2 * h);
    CHECK(std::fabs(grad[i] - fd) / std::max({1.0, std::fabs(fd), std::fabs(grad[i])}) < 1e-5);
  }
}

TEST_CASE("graph and plain forward agree") {
  Architecture arch{{3, 5, 2}, Activation::kRelu};
  RngStream rng(17, 0);
  ParamVector p = nets::init_params(arch, rng);
  Tensor x = rng.normal_tensor({4, 3});
  Tensor direct = nets::mlp_forward(p, arch, x);

  Tape tape;
  nets::BoundParams bound = nets::bind_param_leaves(tape, p, false);
  NodeId out = nets::mlp_forward_graph(tape, bound, arch, tape.constant(x));
  for (std::size_t i = 0; i < direct.size(); ++i) {
    CHECK(direct.data()[i] == doctest::Approx(tape.value(out).data()[i]).epsilon(1e-14));
  }
}

TEST_CASE("parameter layout round-trips exactly") {
  Architecture arch{{3, 4, 2}, Activation::kRelu};
  RngStream rng(19, 0);
  ParamVector p = nets::init_params(arch, rng);
  CHECK(p.dim() == arch.param_count());
  ParamVector q = nets::make_params(arch);
  for (std::size_t b = 0; b < p.layout.size(); ++b) q.set_block(b, p.block_tensor(b));
  for (std::size_t i = 0; i < p.dim(); ++i) CHECK(p.values[i] == q.values[i]);
}

TEST_CASE("architecture validation") {
  Architecture bad{{3}, Activation::kRelu};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  Architecture zero{{3, 0, 1}, Activation::kRelu};
  CHECK_THROWS_AS(zero.validate(), std::invalid_argument);
  CHECK_THROWS_AS(LikelihoodConfig::gaussian(-1.0).validate({{1, 1}, Activation::kRelu}),
                  std::invalid_argument);
  CHECK_THROWS_AS(LikelihoodConfig::categorical(4).validate({{1, 3}, Activation::kRelu}),
                  std::invalid_argument);
}
