#include <doctest.h>

#include <cmath>
#include <limits>
#include <stdexcept>

#include "binfer/rng.hpp"
#include "binfer/tape.hpp"
#include "binfer/tensor.hpp"

using namespace binfer;

TEST_CASE("matmul identity returns the other operand") {
  Tape t;
  NodeId eye = t.constant(Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
  NodeId a = t.constant(Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6}));
  NodeId out = t.matmul(eye, a);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(t.value(out).data()[i] == t.value(a).data()[i]);
  }
}

TEST_CASE("relu matches its definition") {
  Tape t;
  NodeId x = t.constant(Tensor::vector({-2.0, 3.5}));
  const Tensor& y = t.value(t.relu(x));
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 3.5);
}

TEST_CASE("log_sum_exp is shift-stabilized") {
  Tape t;
  NodeId x = t.constant(Tensor::vector({1000.0, 1000.0}));
  double lse = t.value(t.log_sum_exp(x, 0)).item();
  CHECK(lse == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("backward of sum of squares") {
  Tape t;
  NodeId x = t.leaf(Tensor::vector({1.0, 2.0, 3.0}));
  NodeId loss = t.sum(t.square(x));
  std::vector<Tensor> g = t.backward(loss);
  CHECK(g[x.index][0] == doctest::Approx(2.0));
  CHECK(g[x.index][1] == doctest::Approx(4.0));
  CHECK(g[x.index][2] == doctest::Approx(6.0));
}

TEST_CASE("backward of log_sum_exp is softmax") {
  Tape t;
  NodeId x = t.leaf(Tensor::vector({0.3, -1.2, 2.0}));
  NodeId loss = t.log_sum_exp(x, 0);
  std::vector<Tensor> g = t.backward(loss);
  NodeId sm = t.softmax(x, 0);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(g[x.index][i] == doctest::Approx(t.value(sm)[i]).epsilon(1e-12));
  }
}

TEST_CASE("softmax rows are nonnegative and normalized") {
  RngStream rng(11, 0);
  Tape t;
  Tensor x({5, 7});
  for (double& v : x.values()) v = 4.0 * rng.normal();
  NodeId sm = t.softmax(t.constant(x), 1);
  for (std::size_t i = 0; i < 5; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < 7; ++j) {
      CHECK(t.value(sm).at(i, j) >= 0.0);
      row += t.value(sm).at(i, j);
    }
    CHECK(std::fabs(row - 1.0) < 1e-12);
  }
}

TEST_CASE("adjoints of independent subgraphs match their separate gradients") {
  Tensor xa = Tensor::vector({0.4, -1.1});
  Tensor xb = Tensor::vector({2.0, 0.3, -0.7});

  // combined: loss = sum(square(a)) + sum(exp(b))
  Tape t;
  NodeId a = t.leaf(xa);
  NodeId b = t.leaf(xb);
  NodeId loss = t.add(t.sum(t.square(a)), t.sum(t.exp(b)));
  std::vector<Tensor> g = t.backward(loss);

  Tape ta;
  NodeId a2 = ta.leaf(xa);
  std::vector<Tensor> ga = ta.backward(ta.sum(ta.square(a2)));
  Tape tb;
  NodeId b2 = tb.leaf(xb);
  std::vector<Tensor> gb = tb.backward(tb.sum(tb.exp(b2)));

  for (std::size_t i = 0; i < 2; ++i) CHECK(g[a.index][i] == ga[a2.index][i]);
  for (std::size_t i = 0; i < 3; ++i) CHECK(g[b.index][i] == gb[b2.index][i]);
}

TEST_CASE("adjoints accumulate across fan-out") {
  Tape t;
  NodeId x = t.leaf(Tensor::vector({1.5}));
  // loss = x*x + x -> dloss/dx = 2x + 1
  NodeId loss = t.sum(t.add(t.mul(x, x), x));
  std::vector<Tensor> g = t.backward(loss);
  CHECK(g[x.index][0] == doctest::Approx(4.0));
}

TEST_CASE("shape mismatch raises invalid_argument") {
  Tape t;
  NodeId a = t.constant(Tensor({2, 3}));
  NodeId b = t.constant(Tensor({4, 2}));
  CHECK_THROWS_AS(t.matmul(a, b), std::invalid_argument);
  CHECK_THROWS_AS(t.add(a, b), std::invalid_argument);
  CHECK_THROWS_AS(t.concat(a, b, 0), std::invalid_argument);
  CHECK_THROWS_AS(t.slice_cols(a, 2, 2), std::invalid_argument);
}

TEST_CASE("non-finite forward results raise domain_error") {
  Tape t;
  NodeId big = t.constant(Tensor::vector({1000.0}));
  CHECK_THROWS_AS(t.exp(big), std::domain_error);
  NodeId neg = t.constant(Tensor::vector({-1.0}));
  CHECK_THROWS_AS(t.log(neg), std::domain_error);
  NodeId zero = t.constant(Tensor::vector({0.0}));
  CHECK_THROWS_AS(t.div(big, zero), std::domain_error);
}

TEST_CASE("backward requires a scalar loss") {
  Tape t;
  NodeId x = t.leaf(Tensor::vector({1.0, 2.0}));
  NodeId y = t.square(x);
  CHECK_THROWS_AS(t.backward(y), std::invalid_argument);
}

TEST_CASE("generic forward dispatch matches the named builders") {
  Tape t;
  NodeId a = t.leaf(Tensor::matrix(2, 2, {0.5, -1.0, 2.0, 0.1}));
  Tape::OpAttrs attrs;
  attrs.axis = 1;
  NodeId via_dispatch = t.forward("softmax", {a}, attrs);
  NodeId direct = t.softmax(a, 1);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(t.value(via_dispatch).data()[i] == t.value(direct).data()[i]);
  }
  CHECK_THROWS_AS(t.forward("conv2d", {a}), std::invalid_argument);
}

TEST_CASE("softplus composite is stable and correct at extremes") {
  Tape t;
  NodeId x = t.constant(Tensor::vector({-40.0, 0.0, 0.5, 40.0}));
  const Tensor& y = t.value(softplus(t, x));
  CHECK(y[0] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(y[1] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(y[2] == doctest::Approx(std::log1p(std::exp(0.5))).epsilon(1e-12));
  CHECK(y[3] == doctest::Approx(40.0).epsilon(1e-12));
}

TEST_CASE("clamp composite saturates with unit slope inside") {
  Tape t;
  NodeId x = t.leaf(Tensor::vector({-5.0, 0.2, 5.0}));
  NodeId y = clamp(t, x, -1.0, 1.0);
  CHECK(t.value(y)[0] == doctest::Approx(-1.0));
  CHECK(t.value(y)[1] == doctest::Approx(0.2));
  CHECK(t.value(y)[2] == doctest::Approx(1.0));
  std::vector<Tensor> g = t.backward(t.sum(y));
  CHECK(g[x.index][0] == 0.0);
  CHECK(g[x.index][1] == 1.0);
  CHECK(g[x.index][2] == 0.0);
}

// ---------------------------------------------------------------------------
// RngStream
// ---------------------------------------------------------------------------

TEST_CASE("normal stream moments at one million draws") {
  RngStream rng(123, 0);
  const std::size_t n = 1'000'000;
  double sum = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  double mean = sum / n;
  double var = sq / n - mean * mean;
  CHECK(std::fabs(mean) < 0.005);
  CHECK(std::fabs(var - 1.0) < 0.01);
}

TEST_CASE("identical (seed, stream) reproduces the sequence exactly") {
  RngStream a(7, 0), b(7, 0);
  for (int i = 0; i < 1000; ++i) {
    CHECK(a.raw() == b.raw());
  }
  RngStream c(7, 0), d(7, 0);
  for (int i = 0; i < 100; ++i) {
    CHECK(c.normal() == d.normal());
  }
}

TEST_CASE("distinct streams are uncorrelated") {
  RngStream a(7, 0), b(7, 1);
  const std::size_t n = 100'000;
  double sa = 0, sb = 0, sab = 0, sa2 = 0, sb2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double x = a.normal(), y = b.normal();
    sa += x;
    sb += y;
    sab += x * y;
    sa2 += x * x;
    sb2 += y * y;
  }
  double ma = sa / n, mb = sb / n;
  double cov = sab / n - ma * mb;
  double corr = cov / std::sqrt((sa2 / n - ma * ma) * (sb2 / n - mb * mb));
  CHECK(std::fabs(corr) < 0.02);
}

TEST_CASE("uniform draws live in [0, 1)") {
  RngStream rng(3, 9);
  for (int i = 0; i < 10000; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("leaf rejects non-finite input") {
  Tape t;
  Tensor bad = Tensor::vector({1.0, std::numeric_limits<double>::infinity()});
  CHECK_THROWS_AS(t.leaf(bad), std::domain_error);
}
