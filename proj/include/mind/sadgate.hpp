// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mind/afire.hpp"
#include "mind/param_store.hpp"
#include "mind/rng.hpp"

namespace mind {

// Subject-aware dynamic gating parameters: a token router conditioned on a
// learnable subject embedding, and a token-independent subject prior built
// from global expert logits plus a per-subject bias row.
struct RouterParams {
  Tensor token_w;        // [E x D]
  Tensor token_b;        // [1 x E]
  Tensor subject_embed;  // [S x D]
  Tensor prior_logits;   // [1 x E]
  Tensor subject_bias;   // [S x E]

  size_t experts() const { return token_w.value->rows(); }
  size_t dim() const { return token_w.value->cols(); }
  size_t subjects() const { return subject_embed.value->rows(); }

  // token_w and subject_embed ~ N(0, 0.02^2); everything else zero, so
  // routing is exactly uniform at step 0.
  static RouterParams create(ParamStore& store, size_t d, size_t experts, size_t subjects,
                             Rng& rng);
  static RouterParams bind(ParamStore& store);

  void check_subject(size_t subject) const;
};

struct GateOutput {
  std::vector<double> token_probs;  // softmax over token logits
  std::vector<double> prior_probs;  // softmax over prior logits
  std::vector<double> combined;     // elementwise product, pre-sparsification
  std::vector<double> weights;      // sparse, renormalized over the selected set
  std::vector<size_t> selected;     // ascending expert indices, size <= K
  double topk_margin = 0.0;         // gap between the K-th and (K+1)-th score
};

// Cache needed by gate_backward on top of what GateOutput already holds.
struct GateCache {
  std::vector<double> shifted_token;  // z_t + subject_embed[s]
  size_t subject = 0;
};

std::vector<double> token_route(std::span<const double> token, size_t subject,
                                const RouterParams& params, GateCache* cache = nullptr);

std::vector<double> prior_route(size_t subject, const RouterParams& params);

// Keep the K largest scores (ties to the lowest index) and renormalize them
// to sum to one. Invariant to positive rescaling of the score vector.
void topk_normalize(std::span<const double> scores, size_t k, std::vector<double>& weights,
                    std::vector<size_t>& selected, double* margin = nullptr);

GateOutput combine_topk(std::vector<double> token_probs, std::vector<double> prior_probs,
                        size_t k);

// Backward through renormalization, the elementwise combination, and both
// softmaxes. The selection set is treated as constant. d_combined_extra, when
// non-empty, is an additional gradient on the pre-sparse combined scores
// (the load-balance path). d_token_out accumulates the gradient w.r.t. z_t.
// The *_live flags mirror router ablations: a dead path was fed a constant
// and receives no gradient; embed_live is false when the token logits were
// computed from the bare token (no subject embedding).
void gate_backward(std::span<const double> d_weights, std::span<const double> d_combined_extra,
                   const GateOutput& gate, const GateCache& cache, const RouterParams& params,
                   std::span<double> d_token_out, bool token_path_live = true,
                   bool prior_path_live = true, bool embed_live = true);

}  // namespace mind
