// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <set>

#include "doctest.h"
#include "mind/grad_check.hpp"
#include "mind/sadgate.hpp"
#include "mind/tensor_ops.hpp"
#include "oracles.hpp"

using namespace mind;

namespace {

RouterParams zero_router(ParamStore& store, size_t d, size_t experts, size_t subjects) {
  Rng rng(0);
  RouterParams p = RouterParams::create(store, d, experts, subjects, rng);
  p.token_w.value->fill(0.0);
  p.subject_embed.value->fill(0.0);
  return p;
}

}  // namespace

TEST_CASE("token_route closed forms") {
  ParamStore store;
  RouterParams p = zero_router(store, 2, 2, 3);

  // Zero weights: uniform for any token and subject.
  auto uniform = token_route(std::vector<double>{4.0, -2.0}, 1, p);
  CHECK(uniform[0] == doctest::Approx(0.5));
  CHECK(uniform[1] == doctest::Approx(0.5));

  // Identity router, zero embeddings: softmax([ln 3, 0]) = [0.75, 0.25].
  *p.token_w.value = Matrix::identity(2);
  auto probs = token_route(std::vector<double>{std::log(3.0), 0.0}, 0, p);
  CHECK(probs[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(probs[1] == doctest::Approx(0.25).epsilon(1e-12));

  // Zero embeddings make routing subject-independent.
  for (size_t s = 1; s < 3; ++s) {
    auto other = token_route(std::vector<double>{std::log(3.0), 0.0}, s, p);
    CHECK(other[0] == probs[0]);
    CHECK(other[1] == probs[1]);
  }

  CHECK_THROWS_AS(token_route(std::vector<double>{1.0, 2.0}, 3, p), Error);
}

TEST_CASE("prior_route closed forms") {
  ParamStore store;
  RouterParams p = zero_router(store, 2, 4, 2);

  auto uniform = prior_route(0, p);
  for (double v : uniform) CHECK(v == doctest::Approx(0.25));

  p.subject_bias.value->at(0, 0) = 10.0;
  auto peaked = prior_route(0, p);
  double expected = std::exp(10.0) / (std::exp(10.0) + 3.0);
  CHECK(peaked[0] == doctest::Approx(expected).epsilon(1e-12));

  // Rows differing by a constant shift give identical priors.
  for (size_t e = 0; e < 4; ++e) p.subject_bias.value->at(1, e) = 7.5;
  p.subject_bias.value->at(1, 0) += 10.0;
  p.subject_bias.value->at(1, 1) += 0.0;
  auto shifted = prior_route(1, p);
  for (size_t e = 0; e < 4; ++e) CHECK(shifted[e] == doctest::Approx(peaked[e]).epsilon(1e-12));

  CHECK_THROWS_AS(prior_route(5, p), Error);
}

TEST_CASE("combine_topk examples") {
  GateOutput gate = combine_topk({0.8, 0.6, 0.4, 0.2}, {0.5, 0.5, 0.5, 0.5}, 2);
  // combined = [0.4, 0.3, 0.2, 0.1]
  CHECK(gate.selected == std::vector<size_t>{0, 1});
  CHECK(gate.weights[0] == doctest::Approx(4.0 / 7.0).epsilon(1e-12));
  CHECK(gate.weights[1] == doctest::Approx(3.0 / 7.0).epsilon(1e-12));
  CHECK(gate.weights[2] == 0.0);
  CHECK(gate.weights[3] == 0.0);

  // K = E: dense renormalization of the product.
  GateOutput dense = combine_topk({0.8, 0.6, 0.4, 0.2}, {0.1, 0.2, 0.3, 0.4}, 4);
  double sum = 0.8 * 0.1 + 0.6 * 0.2 + 0.4 * 0.3 + 0.2 * 0.4;
  CHECK(dense.weights[0] == doctest::Approx(0.08 / sum).epsilon(1e-12));
  CHECK(dense.weights[3] == doctest::Approx(0.08 / sum).epsilon(1e-12));

  // Exact ties resolve to the lowest indices.
  GateOutput tie = combine_topk({0.25, 0.25, 0.25, 0.25}, {0.25, 0.25, 0.25, 0.25}, 2);
  CHECK(tie.selected == std::vector<size_t>{0, 1});
  CHECK(tie.weights[0] == doctest::Approx(0.5));
  CHECK(tie.weights[1] == doctest::Approx(0.5));

  CHECK_THROWS_AS(combine_topk({0.5, 0.5}, {0.5, 0.5}, 3), Error);

  std::vector<double> weights;
  std::vector<size_t> selected;
  CHECK_THROWS_AS(topk_normalize(std::vector<double>{0.0, 0.0}, 1, weights, selected), Error);
}

TEST_CASE("gate weight properties over random routers") {
  Rng rng(123);
  for (size_t experts : {2, 4, 8, 16}) {
    for (size_t k = 1; k <= experts; ++k) {
      for (int trial = 0; trial < 25; ++trial) {
        std::vector<double> tl(experts), pl(experts);
        for (double& v : tl) v = rng.normal(0.0, 2.0);
        for (double& v : pl) v = rng.normal(0.0, 2.0);
        GateOutput gate = combine_topk(softmax(tl), softmax(pl), k);

        double sum = 0.0;
        size_t support = 0;
        for (double w : gate.weights) {
          CHECK(w >= 0.0);
          sum += w;
          if (w > 0.0) ++support;
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
        CHECK(support <= k);
        CHECK(gate.selected.size() == k);
        if (k == 1) {
          CHECK(support == 1);
          CHECK(gate.weights[gate.selected[0]] == 1.0);
        }

        // Positive rescaling leaves the sparse weights unchanged.
        double scale = 0.01 + 10.0 * rng.next_double();
        std::vector<double> scaled = gate.combined;
        for (double& v : scaled) v *= scale;
        std::vector<double> weights2;
        std::vector<size_t> selected2;
        topk_normalize(scaled, k, weights2, selected2);
        CHECK(selected2 == gate.selected);
        for (size_t e = 0; e < experts; ++e) {
          CHECK(weights2[e] == doctest::Approx(gate.weights[e]).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("identical subject rows give identical gates") {
  ParamStore store;
  Rng rng(7);
  RouterParams p = RouterParams::create(store, 3, 4, 3, rng);
  // Force all subjects to share embedding and bias rows.
  for (size_t s = 1; s < 3; ++s) {
    for (size_t j = 0; j < 3; ++j) {
      p.subject_embed.value->at(s, j) = p.subject_embed.value->at(0, j);
    }
    for (size_t e = 0; e < 4; ++e) {
      p.subject_bias.value->at(s, e) = p.subject_bias.value->at(0, e);
    }
  }
  std::vector<double> z{0.3, -1.2, 0.8};
  GateOutput first = combine_topk(token_route(z, 0, p), prior_route(0, p), 2);
  for (size_t s = 1; s < 3; ++s) {
    GateOutput other = combine_topk(token_route(z, s, p), prior_route(s, p), 2);
    CHECK(other.selected == first.selected);
    for (size_t e = 0; e < 4; ++e) CHECK(other.weights[e] == first.weights[e]);
  }
}

TEST_CASE("prior is constant across an episode's tokens") {
  ParamStore store;
  Rng rng(9);
  RouterParams p = RouterParams::create(store, 3, 4, 2, rng);
  p.prior_logits.value->at(0, 1) = 0.7;
  p.subject_bias.value->at(0, 2) = -0.4;
  auto first = prior_route(0, p);
  for (int t = 0; t < 10; ++t) {
    auto again = prior_route(0, p);
    for (size_t e = 0; e < 4; ++e) CHECK(again[e] == first[e]);
  }
}

namespace {

// Scalar objective sum(c * w_hat) through the full gate for grad_check.
struct GateProbe {
  std::vector<double> token;
  std::vector<double> cost;
  size_t subject;
  size_t k;

  double operator()(ParamStore& ps) const {
    RouterParams p = RouterParams::bind(ps);
    ps.zero_grads();
    GateCache cache;
    GateOutput gate =
        combine_topk(token_route(token, subject, p, &cache), prior_route(subject, p), k);
    std::vector<double> d_token(token.size(), 0.0);
    gate_backward(cost, {}, gate, cache, p, d_token);
    return dot(gate.weights, cost);
  }
};

}  // namespace

TEST_CASE("gate_backward matches finite differences away from ties") {
  for (uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    ParamStore store;
    Rng rng(seed);
    RouterParams p = RouterParams::create(store, 4, 4, 2, rng);
    // Spread parameters so the Top-K margin is comfortable.
    for (double& v : p.token_w.value->data()) v = rng.normal(0.0, 0.7);
    for (double& v : p.prior_logits.value->data()) v = rng.normal(0.0, 0.5);
    for (double& v : p.subject_bias.value->data()) v = rng.normal(0.0, 0.5);

    GateProbe probe;
    probe.token.resize(4);
    probe.cost.resize(4);
    for (double& v : probe.token) v = rng.normal();
    for (double& v : probe.cost) v = rng.normal();
    probe.subject = 1;
    probe.k = 2;

    GateOutput gate = combine_topk(token_route(probe.token, probe.subject, p),
                                   prior_route(probe.subject, p), probe.k);
    if (gate.topk_margin < 1e-4) continue;  // reroll-by-seed

    // Unselected experts' logits have exactly-zero gradients through the
    // renormalized weights; a wider step keeps the difference quotient
    // above round-off on those entries.
    auto report = grad_check([&probe](ParamStore& ps) { return probe(ps); }, store, 3e-4);
    CHECK(report.max_rel_error < 1e-4);

    // Gradient w.r.t. the token input, against finite differences.
    GateCache cache;
    GateOutput g2 = combine_topk(token_route(probe.token, probe.subject, p, &cache),
                                 prior_route(probe.subject, p), probe.k);
    std::vector<double> d_token(4, 0.0);
    store.zero_grads();
    gate_backward(probe.cost, {}, g2, cache, p, d_token);
    auto token_loss = [&](std::span<const double> z) {
      GateOutput g = combine_topk(token_route(z, probe.subject, p),
                                  prior_route(probe.subject, p), probe.k);
      return dot(g.weights, probe.cost);
    };
    auto numeric = oracle::finite_difference(token_loss, probe.token, 1e-6);
    for (size_t j = 0; j < 4; ++j) {
      CHECK(d_token[j] == doctest::Approx(numeric[j]).epsilon(1e-5));
    }
  }
}

TEST_CASE("dense gate gradient equals the product-of-softmaxes closed form") {
  // K = E = 2: w_hat = softmax(token_logits + prior_logits).
  ParamStore store;
  Rng rng(77);
  RouterParams p = RouterParams::create(store, 2, 2, 1, rng);
  for (double& v : p.token_w.value->data()) v = rng.normal(0.0, 0.8);
  for (double& v : p.token_b.value->data()) v = rng.normal(0.0, 0.3);
  for (double& v : p.prior_logits.value->data()) v = rng.normal(0.0, 0.6);

  std::vector<double> z{0.4, -0.9};
  std::vector<double> cost{1.3, -0.2};

  GateCache cache;
  GateOutput gate = combine_topk(token_route(z, 0, p, &cache), prior_route(0, p), 2);
  std::vector<double> d_token(2, 0.0);
  store.zero_grads();
  gate_backward(cost, {}, gate, cache, p, d_token);

  // Closed form: both logit vectors receive softmax_backward(w_hat, cost).
  std::vector<double> d_logits = softmax_backward(gate.weights, cost);
  auto db = p.token_b.grad->row(0);
  auto da = p.prior_logits.grad->row(0);
  for (size_t e = 0; e < 2; ++e) {
    CHECK(db[e] == doctest::Approx(d_logits[e]).epsilon(1e-10));
    CHECK(da[e] == doctest::Approx(d_logits[e]).epsilon(1e-10));
  }
}

TEST_CASE("gate_backward requires a live cache") {
  ParamStore store;
  Rng rng(4);
  RouterParams p = RouterParams::create(store, 3, 2, 1, rng);
  GateOutput gate = combine_topk(token_route(std::vector<double>{1.0, 0.0, 0.0}, 0, p),
                                 prior_route(0, p), 1);
  GateCache stale;  // never filled
  std::vector<double> cost{1.0, 0.0};
  std::vector<double> d_token(3, 0.0);
  CHECK_THROWS_AS(gate_backward(cost, {}, gate, stale, p, d_token), Error);
}
