// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "mind/grad_check.hpp"
#include "mind/model.hpp"
#include "mind/objective.hpp"
#include "oracles.hpp"

using namespace mind;

TEST_CASE("mse_loss values and gradient") {
  Matrix a(1, 2, {0.0, 0.0});
  Matrix b(1, 2, {1.0, 3.0});
  CHECK(mse_loss(a, a) == 0.0);
  CHECK(mse_loss(a, b) == doctest::Approx(5.0));

  Matrix ones(2, 3);
  Matrix zeros(2, 3);
  ones.fill(1.0);
  CHECK(mse_loss(ones, zeros) == doctest::Approx(1.0));

  Matrix grad;
  mse_loss(a, b, &grad);
  CHECK(grad.at(0, 0) == doctest::Approx(2.0 * (0.0 - 1.0) / 2.0));
  CHECK(grad.at(0, 1) == doctest::Approx(2.0 * (0.0 - 3.0) / 2.0));

  Matrix wrong(2, 2);
  CHECK_THROWS_AS(mse_loss(a, wrong), Error);
}

TEST_CASE("load_balance closed forms") {
  // Perfectly uniform importance and load.
  {
    Matrix scores(4, 2);
    scores.fill(0.5);
    std::vector<std::vector<size_t>> selections{{0}, {1}, {0}, {1}};
    auto result = load_balance(scores, selections, 1);
    CHECK(result.value == doctest::Approx(1.0).epsilon(1e-12));
  }
  // Full collapse to one expert with K=1.
  {
    Matrix scores(3, 4);
    for (size_t t = 0; t < 3; ++t) scores.at(t, 2) = 1.0;
    std::vector<std::vector<size_t>> selections{{2}, {2}, {2}};
    auto result = load_balance(scores, selections, 1);
    CHECK(result.value == doctest::Approx(4.0).epsilon(1e-12));
  }
  // Hand-worked two-token case.
  {
    Matrix scores(2, 2, {0.9, 0.1, 0.8, 0.2});
    std::vector<std::vector<size_t>> selections{{0}, {0}};
    auto result = load_balance(scores, selections, 1);
    CHECK(result.load[0] == doctest::Approx(1.0));
    CHECK(result.load[1] == doctest::Approx(0.0));
    CHECK(result.importance[0] == doctest::Approx(0.85));
    CHECK(result.importance[1] == doctest::Approx(0.15));
    CHECK(result.value == doctest::Approx(1.7).epsilon(1e-12));
  }
}

TEST_CASE("load_balance gradient matches finite differences") {
  Rng rng(3);
  const size_t n = 5, experts = 4, k = 2;
  Matrix scores(n, experts);
  for (double& v : scores.data()) v = 0.05 + rng.next_double();
  std::vector<std::vector<size_t>> selections(n);
  for (size_t t = 0; t < n; ++t) {
    selections[t] = {rng.below(experts)};
    size_t second = (selections[t][0] + 1 + rng.below(experts - 1)) % experts;
    selections[t].push_back(second);
  }

  auto result = load_balance(scores, selections, k, true);
  auto loss = [&](std::span<const double> flat) {
    Matrix s(n, experts, std::vector<double>(flat.begin(), flat.end()));
    return load_balance(s, selections, k).value;
  };
  auto numeric = oracle::finite_difference(loss, scores.data(), 1e-6);
  for (size_t i = 0; i < numeric.size(); ++i) {
    CHECK(result.grad_scores.data()[i] == doctest::Approx(numeric[i]).epsilon(1e-6));
  }
}

TEST_CASE("total_loss assembles the three terms") {
  Matrix pred(1, 2, {0.0, 0.0});
  Matrix target(1, 2, {1.0, 3.0});
  Matrix scores(2, 2, {0.9, 0.1, 0.8, 0.2});
  std::vector<std::vector<size_t>> selections{{0}, {0}};
  Matrix bias(2, 2, {0.1, -0.2, 0.3, 0.0});

  auto plain = total_loss(pred, target, scores, selections, 1, bias, 0.0, 0.0);
  CHECK(plain.total == doctest::Approx(plain.reconstruction));
  CHECK(plain.reconstruction == doctest::Approx(5.0));

  Matrix zero_bias(2, 2);
  auto no_bias = total_loss(pred, target, scores, selections, 1, zero_bias, 0.01, 0.001);
  CHECK(no_bias.subject_bias_l2 == 0.0);

  auto full = total_loss(pred, target, scores, selections, 1, bias, 0.01, 0.001);
  double expected_l2 = 0.01 + 0.04 + 0.09;
  CHECK(full.subject_bias_l2 == doctest::Approx(expected_l2).epsilon(1e-12));
  CHECK(full.total ==
        doctest::Approx(5.0 + 0.01 * 1.7 + 0.001 * expected_l2).epsilon(1e-12));
}

TEST_CASE("one-cycle schedule endpoints") {
  OneCycleSchedule s;
  s.peak_lr = 1e-2;
  s.div = 25.0;
  s.final_div = 1e4;
  s.warmup_frac = 0.3;
  s.total_steps = 200;

  CHECK(s.lr(0) == doctest::Approx(1e-2 / 25.0).epsilon(1e-12));
  CHECK(s.lr(60) == doctest::Approx(1e-2).epsilon(1e-12));  // warmup end
  CHECK(s.lr(199) == doctest::Approx(1e-2 / 1e4).epsilon(1e-9));
  CHECK(s.lr(100) < 1e-2);
  CHECK(s.lr(100) > s.lr(199));
  CHECK_THROWS_AS(s.lr(200), Error);
}

TEST_CASE("adamw closed forms") {
  // Zero gradient, zero weight decay: parameters unchanged.
  {
    ParamStore params;
    Matrix& x = params.add("x", 1, 2);
    x.at(0, 0) = 1.5;
    x.at(0, 1) = -2.5;
    AdamW opt(params, {});
    opt.step(0.1);
    CHECK(x.at(0, 0) == 1.5);
    CHECK(x.at(0, 1) == -2.5);
  }
  // beta1 = beta2 = 0, eps = 0, g = 1: exact step of -lr.
  {
    ParamStore params;
    Matrix& x = params.add("x", 1, 1);
    x.at(0, 0) = 0.7;
    params.grad("x").at(0, 0) = 1.0;
    AdamWOptions options;
    options.beta1 = 0.0;
    options.beta2 = 0.0;
    options.eps = 0.0;
    AdamW opt(params, options);
    opt.step(0.05);
    CHECK(x.at(0, 0) == doctest::Approx(0.7 - 0.05).epsilon(1e-15));
  }
  // Weight decay with zero gradient: pure exponential shrink.
  {
    ParamStore params;
    Matrix& x = params.add("x", 1, 1);
    x.at(0, 0) = 2.0;
    AdamWOptions options;
    options.weight_decay = 0.1;
    AdamW opt(params, options);
    const double lr = 0.01;
    for (int t = 0; t < 7; ++t) opt.step(lr);
    CHECK(x.at(0, 0) == doctest::Approx(2.0 * std::pow(1.0 - lr * 0.1, 7)).epsilon(1e-12));
  }
}

TEST_CASE("gradient clipping at the global norm") {
  ParamStore params;
  params.add("a", 1, 2);
  params.add("b", 1, 1);
  params.grad("a").at(0, 0) = 3.0;
  params.grad("a").at(0, 1) = 0.0;
  params.grad("b").at(0, 0) = 4.0;
  double norm = clip_gradients(params, 1.0);
  CHECK(norm == doctest::Approx(5.0));
  CHECK(global_grad_norm(params) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(params.grad("a").at(0, 0) == doctest::Approx(0.6));
  CHECK(params.grad("b").at(0, 0) == doctest::Approx(0.8));

  // Below the threshold nothing changes.
  params.grad("a").at(0, 0) = 0.1;
  params.grad("a").at(0, 1) = 0.0;
  params.grad("b").at(0, 0) = 0.0;
  clip_gradients(params, 1.0);
  CHECK(params.grad("a").at(0, 0) == 0.1);
}

TEST_CASE("full objective gradient passes grad_check on a small model") {
  ModelConfig cfg;
  cfg.d_in = 3;
  cfg.d = 4;
  cfg.hidden = 5;
  cfg.out = 3;
  cfg.experts = 3;
  cfg.top_k = 2;
  cfg.subjects = 2;
  cfg.w_max = 16;
  Model model(cfg, 77);

  Rng rng(5);
  Matrix feats(4, 3), targets(4, 3);
  for (double& v : feats.data()) v = rng.normal();
  for (double& v : targets.data()) v = rng.normal();
  std::vector<WindowRef> batch{{&feats, &targets, 0, 0}, {&feats, &targets, 1, 4}};

  BatchStats stats;
  model.forward_loss(batch, 0.01, 1e-4, &stats);
  REQUIRE(stats.min_topk_margin > 1e-6);

  auto loss_fn = [&](ParamStore&) {
    return model.forward_backward(batch, 0.01, 1e-4).total;
  };
  auto report = grad_check(loss_fn, model.params(), 1e-5);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("subject bias penalty gradient is exactly 2 lambda B") {
  ModelConfig cfg;
  cfg.d_in = 3;
  cfg.d = 3;
  cfg.hidden = 4;
  cfg.out = 2;
  cfg.experts = 2;
  cfg.top_k = 2;
  cfg.subjects = 2;
  cfg.w_max = 8;
  Model model(cfg, 3);

  Matrix& bias = *model.router().subject_bias.value;
  bias.at(0, 0) = 0.4;
  bias.at(1, 1) = -0.7;

  Rng rng(9);
  Matrix feats(2, 3), targets(2, 2);
  for (double& v : feats.data()) v = rng.normal();
  for (double& v : targets.data()) v = rng.normal();
  std::vector<WindowRef> batch{{&feats, &targets, 0, 0}};

  const double lambda = 0.25;
  // beta = 0 and subject 1 unused: B[1][:] receives only the penalty term.
  model.forward_backward(batch, 0.0, lambda);
  CHECK(model.router().subject_bias.grad->at(1, 1) ==
        doctest::Approx(2.0 * lambda * -0.7).epsilon(1e-15));
  CHECK(model.router().subject_bias.grad->at(1, 0) == 0.0);
}

TEST_CASE("ablated router modes pass grad_check and drop the right paths") {
  for (RouterMode mode : {RouterMode::PriorOnly, RouterMode::TokenOnly}) {
    ModelConfig cfg;
    cfg.d_in = 3;
    cfg.d = 4;
    cfg.hidden = 5;
    cfg.out = 3;
    cfg.experts = 3;
    cfg.top_k = 2;
    cfg.subjects = 2;
    cfg.w_max = 16;
    cfg.router = mode;
    Model model(cfg, 101);
    // Spread the live router path so Top-K margins are comfortable.
    Rng spread(55);
    for (double& v : model.router().token_w.value->data()) v = spread.normal(0.0, 0.6);
    for (double& v : model.router().prior_logits.value->data()) v = spread.normal(0.0, 0.6);
    for (double& v : model.router().subject_bias.value->data()) v = spread.normal(0.0, 0.4);

    Rng rng(7);
    Matrix feats(4, 3), targets(4, 3);
    for (double& v : feats.data()) v = rng.normal();
    for (double& v : targets.data()) v = rng.normal();
    std::vector<WindowRef> batch{{&feats, &targets, 0, 0}, {&feats, &targets, 1, 4}};

    BatchStats stats;
    model.forward_loss(batch, 0.01, 1e-4, &stats);
    REQUIRE(stats.min_topk_margin > 1e-6);

    auto loss_fn = [&](ParamStore&) {
      return model.forward_backward(batch, 0.01, 1e-4).total;
    };
    auto report = grad_check(loss_fn, model.params(), 1e-5);
    CHECK(report.max_rel_error < 1e-4);

    model.forward_backward(batch, 0.01, 1e-4);
    auto grad_mass = [&](const Matrix& g) {
      double acc = 0.0;
      for (double v : g.data()) acc += std::abs(v);
      return acc;
    };
    if (mode == RouterMode::PriorOnly) {
      // Token path is dead: no gradients reach its weights or embeddings.
      CHECK(grad_mass(*model.router().token_w.grad) == 0.0);
      CHECK(grad_mass(*model.router().subject_embed.grad) == 0.0);
      CHECK(grad_mass(*model.router().prior_logits.grad) > 0.0);
    } else {
      // Prior receives only the bias penalty; the embedding is not used.
      CHECK(grad_mass(*model.router().prior_logits.grad) == 0.0);
      CHECK(grad_mass(*model.router().subject_embed.grad) == 0.0);
      CHECK(grad_mass(*model.router().token_w.grad) > 0.0);
    }
  }
}

TEST_CASE("router mode ablations have the expected independences") {
  ModelConfig cfg;
  cfg.d_in = 3;
  cfg.d = 4;
  cfg.hidden = 5;
  cfg.out = 3;
  cfg.experts = 4;
  cfg.top_k = 2;
  cfg.subjects = 3;
  cfg.w_max = 16;

  Rng rng(9);
  Matrix feats(3, 3);
  for (double& v : feats.data()) v = rng.normal();

  // Token-only gates ignore the subject entirely.
  cfg.router = RouterMode::TokenOnly;
  Model token_model(cfg, 300);
  std::vector<GateOutput> ga, gb;
  token_model.predict_window(feats, 0, 0, nullptr, &ga);
  token_model.predict_window(feats, 2, 0, nullptr, &gb);
  for (size_t t = 0; t < ga.size(); ++t) {
    CHECK(ga[t].weights == gb[t].weights);
  }

  // Prior-only gates ignore the token: one gate per subject.
  cfg.router = RouterMode::PriorOnly;
  Model prior_model(cfg, 300);
  for (double& v : prior_model.router().subject_bias.value->data()) v = rng.normal(0.0, 0.5);
  std::vector<GateOutput> gp;
  prior_model.predict_window(feats, 1, 0, nullptr, &gp);
  for (size_t t = 1; t < gp.size(); ++t) {
    CHECK(gp[t].weights == gp[0].weights);
    CHECK(gp[t].selected == gp[0].selected);
  }
}
