// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <limits>

#include "doctest.h"
#include "mind/grad_check.hpp"
#include "mind/rng.hpp"
#include "mind/tensor_ops.hpp"
#include "oracles.hpp"

using namespace mind;

TEST_CASE("softmax basics") {
  auto thirds = softmax(std::vector<double>{0.0, 0.0, 0.0});
  for (double v : thirds) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  auto quarters = softmax(std::vector<double>{0.0, std::log(3.0)});
  CHECK(quarters[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(quarters[1] == doctest::Approx(0.75).epsilon(1e-12));

  // Max subtraction keeps huge logits finite.
  auto halves = softmax(std::vector<double>{1000.0, 1000.0});
  CHECK(halves[0] == doctest::Approx(0.5));
  CHECK(halves[1] == doctest::Approx(0.5));

  CHECK_THROWS_AS(softmax(std::vector<double>{}), Error);
  CHECK_THROWS_AS(softmax(std::vector<double>{1.0, std::numeric_limits<double>::quiet_NaN()}),
                  Error);
}

TEST_CASE("softmax shift invariance and normalization") {
  Rng rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    size_t n = 1 + rng.below(64);
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal(0.0, 3.0);
    auto p = softmax(v);
    double sum = 0.0;
    for (double x : p) {
      CHECK(x > 0.0);
      CHECK(x <= 1.0);
      sum += x;
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);

    double shift = rng.normal(0.0, 50.0);
    std::vector<double> shifted = v;
    for (double& x : shifted) x += shift;
    auto q = softmax(shifted);
    for (size_t i = 0; i < n; ++i) CHECK(std::abs(p[i] - q[i]) < 1e-9);
  }
}

TEST_CASE("affine examples and linearity") {
  Matrix eye = Matrix::identity(2);
  std::vector<double> b0{0.0, 0.0};
  auto y = affine(std::vector<double>{3.0, -1.0}, eye, b0);
  CHECK(y[0] == 3.0);
  CHECK(y[1] == -1.0);

  Matrix ones{{1.0, 1.0}};
  auto z = affine(std::vector<double>{2.0, 3.0}, ones, std::vector<double>{1.0});
  CHECK(z[0] == 6.0);

  Matrix zero(2, 2);
  auto w = affine(std::vector<double>{9.0, -4.0}, zero, std::vector<double>{5.0, 7.0});
  CHECK(w[0] == 5.0);
  CHECK(w[1] == 7.0);

  CHECK_THROWS_AS(affine(std::vector<double>{1.0}, eye, b0), Error);

  Rng rng(7);
  Matrix m(3, 4);
  for (double& v : m.data()) v = rng.normal();
  std::vector<double> zeros(3, 0.0);
  std::vector<double> x(4), v2(4);
  for (double& t : x) t = rng.normal();
  for (double& t : v2) t = rng.normal();
  double a = 0.7, b = -1.3;
  std::vector<double> combo(4);
  for (size_t i = 0; i < 4; ++i) combo[i] = a * x[i] + b * v2[i];
  auto lhs = affine(combo, m, zeros);
  auto fx = affine(x, m, zeros);
  auto fv = affine(v2, m, zeros);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(std::abs(lhs[i] - (a * fx[i] + b * fv[i])) < 1e-9);
  }
}

TEST_CASE("gelu values and derivative") {
  CHECK(gelu(0.0) == 0.0);
  CHECK(std::abs(gelu(10.0) - 10.0) < 1e-6);
  CHECK(std::abs(gelu(-10.0)) < 1e-6);

  for (double x : {-3.0, -0.5, 0.0, 0.1, 1.7, 4.0}) {
    auto f = [](std::span<const double> v) { return gelu(v[0]); };
    auto num = oracle::finite_difference(f, {x}, 1e-6);
    CHECK(gelu_grad(x) == doctest::Approx(num[0]).epsilon(1e-6));
  }
}

TEST_CASE("grad_check on closed-form functions") {
  // f(x) = x^2: central differences are exact for quadratics.
  ParamStore params;
  Matrix& x = params.add("x", 1, 1);
  x.at(0, 0) = 3.0;
  auto square = [](ParamStore& p) {
    double v = p.param("x").at(0, 0);
    p.grad("x").at(0, 0) = 2.0 * v;
    return v * v;
  };
  auto report = grad_check(square, params, 1e-5);
  CHECK(report.max_rel_error < 1e-8);

  // f(x) = <softmax(x), c>.
  ParamStore params2;
  Matrix& logits = params2.add("logits", 1, 5);
  Rng rng(11);
  std::vector<double> c(5);
  for (double& v : c) v = rng.normal();
  for (double& v : logits.data()) v = rng.normal();
  auto softmax_loss = [&c](ParamStore& p) {
    std::vector<double> probs = softmax(p.param("logits").row(0));
    std::vector<double> dlogits = softmax_backward(probs, c);
    auto g = p.grad("logits").row(0);
    std::copy(dlogits.begin(), dlogits.end(), g.begin());
    return dot(probs, c);
  };
  auto report2 = grad_check(softmax_loss, params2, 1e-5);
  CHECK(report2.max_rel_error < 1e-6);
}

TEST_CASE("grad_check flags a planted 10% gradient bug") {
  ParamStore params;
  Matrix& x = params.add("x", 1, 3);
  x.at(0, 0) = 1.2;
  x.at(0, 1) = -0.4;
  x.at(0, 2) = 2.5;
  auto corrupted = [](ParamStore& p) {
    double loss = 0.0;
    auto row = p.param("x").row(0);
    auto g = p.grad("x").row(0);
    for (size_t i = 0; i < row.size(); ++i) {
      loss += row[i] * row[i];
      g[i] = 2.0 * row[i] * 1.1;  // intentionally 10% off
    }
    return loss;
  };
  auto report = grad_check(corrupted, params, 1e-5);
  CHECK(report.max_rel_error > 1e-4);  // flagged
  CHECK(report.max_rel_error > 0.04);
  CHECK(report.max_rel_error < 0.11);
}

TEST_CASE("grad_check rejects non-deterministic losses and bad eps") {
  ParamStore params;
  params.add("x", 1, 1);
  int calls = 0;
  auto flaky = [&calls](ParamStore&) { return static_cast<double>(calls++); };
  CHECK_THROWS_AS(grad_check(flaky, params, 1e-5), Error);

  auto fine = [](ParamStore&) { return 1.0; };
  CHECK_THROWS_AS(grad_check(fine, params, 1e-2), Error);
  CHECK_THROWS_AS(grad_check(fine, params, 1e-8), Error);
}
