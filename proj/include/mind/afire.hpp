// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mind/matrix.hpp"
#include "mind/param_store.hpp"
#include "mind/rng.hpp"

namespace mind {

// Raw upstream features for one episode, sampled at rate_hz (frame k has
// timestamp k / rate_hz seconds).
struct FeatureSequence {
  std::string episode_id;
  uint32_t subject_id = 0;
  double rate_hz = 2.0;
  Matrix frames;  // [T_raw x D_in]
};

// TR-synchronous post-fusion tokens, one row per TR.
struct TokenSequence {
  std::string episode_id;
  uint32_t subject_id = 0;
  Matrix tokens;  // [T x D]
  double tr_seconds = 0.0;
};

struct ResponseSequence {
  std::string episode_id;
  uint32_t subject_id = 0;
  Matrix responses;  // [T x O]
};

// One training window. `tokens` holds whatever row matrix was windowed
// (the trainer windows TR-binned features and encodes inside the forward
// pass); `start_tr` is the absolute TR of row 0, used for positional
// encoding.
struct Sample {
  uint32_t subject_id = 0;
  std::string episode_id;
  size_t start_tr = 0;
  Matrix tokens;
  Matrix responses;
};

// Non-owning view of a parameter/gradient pair inside a ParamStore.
struct Tensor {
  Matrix* value = nullptr;
  Matrix* grad = nullptr;
};

Tensor add_tensor(ParamStore& store, const std::string& name, size_t rows, size_t cols);
Tensor bind_tensor(ParamStore& store, const std::string& name);

// Projector to the shared token space plus the per-token temporal block:
//   h   = proj_w x + proj_b
//   a   = h + pos[t]
//   z   = layernorm(a + mlp(a)) * ln_gain + ln_bias,  mlp = affine-GELU-affine
// The positional table is a fixed sinusoidal encoding, not trained.
struct AfireParams {
  Tensor proj_w;   // [D x D_in]
  Tensor proj_b;   // [1 x D]
  Tensor mlp_w1;   // [Dh x D]
  Tensor mlp_b1;   // [1 x Dh]
  Tensor mlp_w2;   // [D x Dh]
  Tensor mlp_b2;   // [1 x D]
  Tensor ln_gain;  // [1 x D]
  Tensor ln_bias;  // [1 x D]
  Matrix pos;      // [W_max x D]
  double ln_eps = 1e-5;

  size_t d_in() const { return proj_w.value->cols(); }
  size_t d() const { return proj_w.value->rows(); }
  size_t d_hidden() const { return mlp_w1.value->rows(); }
  size_t w_max() const { return pos.rows(); }

  // Random initialization: projector scaled by 1/sqrt(D_in), first temporal
  // layer He-scaled, second temporal layer zero so the block starts as a
  // pure residual, layer norm at gain 1 / bias 0.
  static AfireParams create(ParamStore& store, size_t d_in, size_t d, size_t d_hidden,
                            size_t w_max, Rng& rng);
  // Identity configuration: proj = I (requires d_in == d), temporal block
  // zero. Encoding reduces to layernorm(x + pos).
  static AfireParams create_identity(ParamStore& store, size_t d, size_t w_max);
  static AfireParams bind(ParamStore& store, size_t w_max);
};

Matrix sinusoidal_position_table(size_t w_max, size_t d);

// Mean of 2 Hz (or any-rate) frames within each TR bin [k*tr, (k+1)*tr),
// judged on frame start timestamps.
Matrix bin_to_tr(const FeatureSequence& features, double tr_seconds, size_t n_tr);

struct EncodeCache {
  size_t start_tr = 0;
  Matrix x;        // input rows [T x D_in]
  Matrix a;        // projected + positional [T x D]
  Matrix q1;       // temporal pre-activation [T x Dh]
  Matrix r1;       // temporal hidden [T x Dh]
  Matrix normed;   // layernorm output before gain/bias [T x D]
  std::vector<double> inv_std;  // per-row 1/sqrt(var + eps)
};

// Core encode over a block of rows whose absolute TR indices are
// start_tr .. start_tr + T - 1. Throws WindowTooLong past the positional
// table.
Matrix encode_features(const Matrix& x, const AfireParams& params, size_t start_tr = 0,
                       EncodeCache* cache = nullptr);

// Accumulates parameter gradients from d_tokens and returns the gradient
// with respect to the input rows.
Matrix encode_backward(const Matrix& d_tokens, const EncodeCache& cache,
                       const AfireParams& params);

TokenSequence project_and_encode(const FeatureSequence& binned_features, double tr_seconds,
                                 const AfireParams& params);

std::vector<size_t> window_starts(size_t t, size_t win, size_t stride);

std::vector<Sample> make_windows(const TokenSequence& tokens, const ResponseSequence& responses,
                                 size_t win, size_t stride);

// Stratified split within each (subject, episode) group. Each group keeps at
// least one sample in train; groups of two or more keep at least one in val.
std::pair<std::vector<Sample>, std::vector<Sample>> split_train_val(
    const std::vector<Sample>& samples, double ratio, Rng& rng);

}  // namespace mind
