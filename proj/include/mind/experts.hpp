// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "mind/sadgate.hpp"

namespace mind {

// E parallel two-layer MLP heads sharing (D, H, O).
struct ExpertBank {
  struct Expert {
    Tensor w1;  // [H x D]
    Tensor b1;  // [1 x H]
    Tensor w2;  // [O x H]
    Tensor b2;  // [1 x O]
  };
  std::vector<Expert> heads;

  size_t experts() const { return heads.size(); }
  size_t dim() const { return heads[0].w1.value->cols(); }
  size_t hidden() const { return heads[0].w1.value->rows(); }
  size_t out() const { return heads[0].w2.value->rows(); }

  // He-scaled weights, zero biases; each head draws from its own derived
  // stream so heads break symmetry.
  static ExpertBank create(ParamStore& store, size_t d, size_t hidden, size_t out, size_t experts,
                           Rng& rng);
  static ExpertBank bind(ParamStore& store, size_t experts);
};

// Conditional-computation accounting: decode must evaluate exactly K experts
// per token.
struct EvalCounters {
  uint64_t tokens = 0;
  uint64_t expert_evals = 0;
  size_t min_per_token = std::numeric_limits<size_t>::max();
  size_t max_per_token = 0;
  std::vector<uint64_t> per_expert;

  void record(size_t evals, std::span<const size_t> selected, size_t experts) {
    tokens += 1;
    expert_evals += evals;
    min_per_token = std::min(min_per_token, evals);
    max_per_token = std::max(max_per_token, evals);
    if (per_expert.size() != experts) per_expert.assign(experts, 0);
    for (size_t e : selected) per_expert[e] += 1;
  }
};

struct ExpertCache {
  std::vector<double> pre_hidden;  // w1 z + b1
  std::vector<double> hidden;      // gelu of pre_hidden
  std::vector<double> output;      // w2 hidden + b2
};

std::vector<double> expert_forward(std::span<const double> token, size_t expert,
                                   const ExpertBank& bank, ExpertCache* cache = nullptr);

// Weighted sum over the gate's selected experts; only those experts are
// evaluated.
std::vector<double> fuse_experts(std::span<const double> token, const GateOutput& gate,
                                 const ExpertBank& bank,
                                 std::vector<ExpertCache>* caches = nullptr,
                                 EvalCounters* counters = nullptr);

// Backward for the weighted fusion: accumulates selected experts' gradients,
// returns the gradient w.r.t. the token, and fills d_weights with
// d(pred).f_e per selected expert (zero elsewhere).
std::vector<double> fuse_backward(std::span<const double> d_prediction,
                                  std::span<const double> token, const GateOutput& gate,
                                  const std::vector<ExpertCache>& caches, const ExpertBank& bank,
                                  std::vector<double>& d_weights);

struct DecodeCache {
  GateCache gate_cache;
  std::vector<double> token;
  std::vector<ExpertCache> per_selected;  // aligned with gate.selected
};

struct DecodeResult {
  std::vector<double> prediction;  // [O]
  GateOutput gate;
};

// Full sparse subject-aware decode: both routers, Top-K combination, and
// late fusion over the selected experts.
DecodeResult decode(std::span<const double> token, size_t subject, const RouterParams& router,
                    const ExpertBank& bank, size_t k, DecodeCache* cache = nullptr,
                    EvalCounters* counters = nullptr);

// Accumulates gradients for the selected experts and router parameters;
// returns the gradient w.r.t. the input token. d_combined_extra is forwarded
// to gate_backward (load-balance path).
std::vector<double> decode_backward(std::span<const double> d_prediction,
                                    const DecodeResult& result, const DecodeCache& cache,
                                    const RouterParams& router, const ExpertBank& bank,
                                    std::span<const double> d_combined_extra = {});

}  // namespace mind
