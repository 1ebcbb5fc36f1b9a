// SPDX-License-Identifier: Apache-2.0
#include "mind/sadgate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mind/tensor_ops.hpp"

namespace mind {

RouterParams RouterParams::create(ParamStore& store, size_t d, size_t experts, size_t subjects,
                                  Rng& rng) {
  RouterParams p;
  p.token_w = add_tensor(store, "gate.token_w", experts, d);
  p.token_b = add_tensor(store, "gate.token_b", 1, experts);
  p.subject_embed = add_tensor(store, "gate.subject_embed", subjects, d);
  p.prior_logits = add_tensor(store, "gate.prior_logits", 1, experts);
  p.subject_bias = add_tensor(store, "gate.subject_bias", subjects, experts);
  for (double& v : p.token_w.value->data()) v = rng.normal(0.0, 0.02);
  for (double& v : p.subject_embed.value->data()) v = rng.normal(0.0, 0.02);
  return p;
}

RouterParams RouterParams::bind(ParamStore& store) {
  RouterParams p;
  p.token_w = bind_tensor(store, "gate.token_w");
  p.token_b = bind_tensor(store, "gate.token_b");
  p.subject_embed = bind_tensor(store, "gate.subject_embed");
  p.prior_logits = bind_tensor(store, "gate.prior_logits");
  p.subject_bias = bind_tensor(store, "gate.subject_bias");
  return p;
}

void RouterParams::check_subject(size_t subject) const {
  if (subject >= subjects()) {
    raise(ErrorCode::UnknownSubject,
          "subject " + std::to_string(subject) + " >= " + std::to_string(subjects()));
  }
}

std::vector<double> token_route(std::span<const double> token, size_t subject,
                                const RouterParams& params, GateCache* cache) {
  params.check_subject(subject);
  if (token.size() != params.dim()) raise(ErrorCode::InvalidShape, "token_route input size");
  std::vector<double> shifted(token.size());
  auto embed = params.subject_embed.value->row(subject);
  for (size_t j = 0; j < token.size(); ++j) shifted[j] = token[j] + embed[j];
  std::vector<double> logits =
      affine(shifted, *params.token_w.value, params.token_b.value->row(0));
  if (cache) {
    cache->shifted_token = shifted;
    cache->subject = subject;
  }
  return softmax(logits);
}

std::vector<double> prior_route(size_t subject, const RouterParams& params) {
  params.check_subject(subject);
  std::vector<double> logits(params.experts());
  auto global = params.prior_logits.value->row(0);
  auto bias = params.subject_bias.value->row(subject);
  for (size_t e = 0; e < logits.size(); ++e) logits[e] = global[e] + bias[e];
  return softmax(logits);
}

void topk_normalize(std::span<const double> scores, size_t k, std::vector<double>& weights,
                    std::vector<size_t>& selected, double* margin) {
  const size_t n = scores.size();
  if (k < 1 || k > n) raise(ErrorCode::InvalidSpec, "top-K requires 1 <= K <= E");

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });

  selected.assign(order.begin(), order.begin() + k);
  std::sort(selected.begin(), selected.end());
  if (margin) {
    *margin = (k < n) ? scores[order[k - 1]] - scores[order[k]]
                      : std::numeric_limits<double>::infinity();
  }

  double sum = 0.0;
  for (size_t e : selected) sum += scores[e];
  if (sum <= 0.0) raise(ErrorCode::DegenerateGate, "selected gate scores sum to zero");

  weights.assign(n, 0.0);
  for (size_t e : selected) weights[e] = scores[e] / sum;
}

GateOutput combine_topk(std::vector<double> token_probs, std::vector<double> prior_probs,
                        size_t k) {
  if (token_probs.size() != prior_probs.size()) {
    raise(ErrorCode::InvalidShape, "router output sizes differ");
  }
  GateOutput gate;
  gate.token_probs = std::move(token_probs);
  gate.prior_probs = std::move(prior_probs);
  gate.combined.resize(gate.token_probs.size());
  for (size_t e = 0; e < gate.combined.size(); ++e) {
    gate.combined[e] = gate.token_probs[e] * gate.prior_probs[e];
  }
  topk_normalize(gate.combined, k, gate.weights, gate.selected, &gate.topk_margin);
  return gate;
}

void gate_backward(std::span<const double> d_weights, std::span<const double> d_combined_extra,
                   const GateOutput& gate, const GateCache& cache, const RouterParams& params,
                   std::span<double> d_token_out, bool token_path_live, bool prior_path_live,
                   bool embed_live) {
  const size_t experts = gate.combined.size();
  if (token_path_live && cache.shifted_token.size() != params.dim()) {
    raise(ErrorCode::StaleCache, "gate cache missing or wrong dimension");
  }
  if (!d_weights.empty() && d_weights.size() != experts) {
    raise(ErrorCode::InvalidShape, "d_weights size");
  }

  // Renormalization backward over the selected set; unselected entries get
  // no gradient from the sparse weights.
  std::vector<double> d_combined(experts, 0.0);
  if (!d_weights.empty()) {
    double selected_sum = 0.0;
    double weighted = 0.0;
    for (size_t e : gate.selected) {
      selected_sum += gate.combined[e];
      weighted += d_weights[e] * gate.weights[e];
    }
    for (size_t e : gate.selected) {
      d_combined[e] = (d_weights[e] - weighted) / selected_sum;
    }
  }
  if (!d_combined_extra.empty()) {
    if (d_combined_extra.size() != experts) raise(ErrorCode::InvalidShape, "d_combined_extra size");
    for (size_t e = 0; e < experts; ++e) d_combined[e] += d_combined_extra[e];
  }

  // combined = token_probs * prior_probs, elementwise.
  std::vector<double> d_token_probs(experts), d_prior_probs(experts);
  for (size_t e = 0; e < experts; ++e) {
    d_token_probs[e] = d_combined[e] * gate.prior_probs[e];
    d_prior_probs[e] = d_combined[e] * gate.token_probs[e];
  }

  if (token_path_live) {
    std::vector<double> d_logits = softmax_backward(gate.token_probs, d_token_probs);
    std::vector<double> d_shifted =
        affine_backward(cache.shifted_token, *params.token_w.value, d_logits,
                        *params.token_w.grad, params.token_b.grad->row(0));
    auto embed_grad = params.subject_embed.grad->row(cache.subject);
    for (size_t j = 0; j < d_shifted.size(); ++j) {
      if (embed_live) embed_grad[j] += d_shifted[j];
      if (!d_token_out.empty()) d_token_out[j] += d_shifted[j];
    }
  }

  if (prior_path_live) {
    std::vector<double> d_prior_logits = softmax_backward(gate.prior_probs, d_prior_probs);
    auto global_grad = params.prior_logits.grad->row(0);
    auto bias_grad = params.subject_bias.grad->row(cache.subject);
    for (size_t e = 0; e < experts; ++e) {
      global_grad[e] += d_prior_logits[e];
      bias_grad[e] += d_prior_logits[e];
    }
  }
}

}  // namespace mind
