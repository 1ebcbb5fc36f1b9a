// SPDX-License-Identifier: Apache-2.0
#include "mind/experts.hpp"

#include <cmath>
#include <string>

#include "mind/tensor_ops.hpp"

namespace mind {

ExpertBank ExpertBank::create(ParamStore& store, size_t d, size_t hidden, size_t out,
                              size_t experts, Rng& rng) {
  ExpertBank bank;
  bank.heads.reserve(experts);
  double w1_std = std::sqrt(2.0 / static_cast<double>(d));
  double w2_std = std::sqrt(2.0 / static_cast<double>(hidden));
  for (size_t e = 0; e < experts; ++e) {
    std::string prefix = "expert" + std::to_string(e) + ".";
    Expert head;
    head.w1 = add_tensor(store, prefix + "w1", hidden, d);
    head.b1 = add_tensor(store, prefix + "b1", 1, hidden);
    head.w2 = add_tensor(store, prefix + "w2", out, hidden);
    head.b2 = add_tensor(store, prefix + "b2", 1, out);
    Rng head_rng = rng.derive(e + 1);
    for (double& v : head.w1.value->data()) v = head_rng.normal(0.0, w1_std);
    for (double& v : head.w2.value->data()) v = head_rng.normal(0.0, w2_std);
    bank.heads.push_back(head);
  }
  return bank;
}

ExpertBank ExpertBank::bind(ParamStore& store, size_t experts) {
  ExpertBank bank;
  bank.heads.reserve(experts);
  for (size_t e = 0; e < experts; ++e) {
    std::string prefix = "expert" + std::to_string(e) + ".";
    Expert head;
    head.w1 = bind_tensor(store, prefix + "w1");
    head.b1 = bind_tensor(store, prefix + "b1");
    head.w2 = bind_tensor(store, prefix + "w2");
    head.b2 = bind_tensor(store, prefix + "b2");
    bank.heads.push_back(head);
  }
  return bank;
}

std::vector<double> expert_forward(std::span<const double> token, size_t expert,
                                   const ExpertBank& bank, ExpertCache* cache) {
  if (expert >= bank.experts()) {
    raise(ErrorCode::UnknownExpert,
          "expert " + std::to_string(expert) + " >= " + std::to_string(bank.experts()));
  }
  const auto& head = bank.heads[expert];
  std::vector<double> pre = affine(token, *head.w1.value, head.b1.value->row(0));
  std::vector<double> hid = gelu(pre);
  std::vector<double> out = affine(hid, *head.w2.value, head.b2.value->row(0));
  if (cache) {
    cache->pre_hidden = std::move(pre);
    cache->hidden = std::move(hid);
    cache->output = out;
  }
  return out;
}

std::vector<double> fuse_experts(std::span<const double> token, const GateOutput& gate,
                                 const ExpertBank& bank, std::vector<ExpertCache>* caches,
                                 EvalCounters* counters) {
  std::vector<double> prediction(bank.out(), 0.0);
  if (caches) caches->assign(gate.selected.size(), ExpertCache{});
  for (size_t i = 0; i < gate.selected.size(); ++i) {
    size_t e = gate.selected[i];
    ExpertCache* cache = caches ? &(*caches)[i] : nullptr;
    std::vector<double> out = expert_forward(token, e, bank, cache);
    double w = gate.weights[e];
    for (size_t o = 0; o < prediction.size(); ++o) prediction[o] += w * out[o];
  }
  if (counters) counters->record(gate.selected.size(), gate.selected, bank.experts());
  return prediction;
}

std::vector<double> fuse_backward(std::span<const double> d_prediction,
                                  std::span<const double> token, const GateOutput& gate,
                                  const std::vector<ExpertCache>& caches, const ExpertBank& bank,
                                  std::vector<double>& d_weights) {
  if (caches.size() != gate.selected.size()) {
    raise(ErrorCode::StaleCache, "expert caches do not match the selected set");
  }
  d_weights.assign(bank.experts(), 0.0);
  std::vector<double> d_token(bank.dim(), 0.0);
  std::vector<double> d_out(bank.out());
  std::vector<double> d_pre(bank.hidden());
  for (size_t i = 0; i < gate.selected.size(); ++i) {
    size_t e = gate.selected[i];
    const auto& head = bank.heads[e];
    const auto& cache = caches[i];
    d_weights[e] = dot(d_prediction, cache.output);

    double w = gate.weights[e];
    for (size_t o = 0; o < d_out.size(); ++o) d_out[o] = w * d_prediction[o];
    std::vector<double> d_hidden = affine_backward(cache.hidden, *head.w2.value, d_out,
                                                   *head.w2.grad, head.b2.grad->row(0));
    for (size_t h = 0; h < d_pre.size(); ++h) {
      d_pre[h] = d_hidden[h] * gelu_grad(cache.pre_hidden[h]);
    }
    std::vector<double> d_tok =
        affine_backward(token, *head.w1.value, d_pre, *head.w1.grad, head.b1.grad->row(0));
    for (size_t j = 0; j < d_token.size(); ++j) d_token[j] += d_tok[j];
  }
  return d_token;
}

DecodeResult decode(std::span<const double> token, size_t subject, const RouterParams& router,
                    const ExpertBank& bank, size_t k, DecodeCache* cache,
                    EvalCounters* counters) {
  DecodeResult result;
  GateCache local_gate_cache;
  GateCache* gate_cache = cache ? &cache->gate_cache : &local_gate_cache;
  std::vector<double> token_probs = token_route(token, subject, router, gate_cache);
  std::vector<double> prior_probs = prior_route(subject, router);
  result.gate = combine_topk(std::move(token_probs), std::move(prior_probs), k);
  if (cache) {
    cache->token.assign(token.begin(), token.end());
    result.prediction = fuse_experts(token, result.gate, bank, &cache->per_selected, counters);
  } else {
    result.prediction = fuse_experts(token, result.gate, bank, nullptr, counters);
  }
  return result;
}

std::vector<double> decode_backward(std::span<const double> d_prediction,
                                    const DecodeResult& result, const DecodeCache& cache,
                                    const RouterParams& router, const ExpertBank& bank,
                                    std::span<const double> d_combined_extra) {
  if (cache.token.size() != bank.dim()) {
    raise(ErrorCode::StaleCache, "decode cache missing token");
  }
  std::vector<double> d_weights;
  std::vector<double> d_token = fuse_backward(d_prediction, cache.token, result.gate,
                                              cache.per_selected, bank, d_weights);
  gate_backward(d_weights, d_combined_extra, result.gate, cache.gate_cache, router,
                {d_token.data(), d_token.size()});
  return d_token;
}

}  // namespace mind
