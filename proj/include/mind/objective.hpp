// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "mind/matrix.hpp"
#include "mind/param_store.hpp"

namespace mind {

struct LossBreakdown {
  double reconstruction = 0.0;
  double load_balance = 0.0;
  double subject_bias_l2 = 0.0;
  double total = 0.0;
  double beta = 0.0;
  double lambda = 0.0;
};

// Mean squared error over all N*O entries; optional gradient
// 2*(pred - target)/(N*O).
double mse_loss(const Matrix& pred, const Matrix& target, Matrix* grad = nullptr);

struct LoadBalanceResult {
  double value = 0.0;
  std::vector<double> importance;  // mean normalized pre-sparse score per expert
  std::vector<double> load;        // realized selection fraction per expert
  Matrix grad_scores;              // d value / d scores, empty unless requested
};

// Switch-style balance term: E * sum_e load_e * importance_e. Importance is
// the token-mean of the normalized pre-sparse scores; load counts Top-K
// selections and receives no gradient.
LoadBalanceResult load_balance(const Matrix& scores, const std::vector<std::vector<size_t>>& selections,
                               size_t k, bool with_grad = false);

LossBreakdown total_loss(const Matrix& pred, const Matrix& target, const Matrix& scores,
                         const std::vector<std::vector<size_t>>& selections, size_t k,
                         const Matrix& subject_bias, double beta, double lambda);

// One-cycle schedule: linear ramp from peak/div to peak over the warmup
// fraction of steps, then cosine decay from peak to peak/final_div.
struct OneCycleSchedule {
  double peak_lr = 1e-3;
  double div = 25.0;
  double final_div = 1e4;
  double warmup_frac = 0.3;
  size_t total_steps = 0;

  double lr(size_t step) const;
};

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// Decoupled weight decay applied before the bias-corrected Adam update.
class AdamW {
 public:
  AdamW(ParamStore& params, AdamWOptions options);

  void step(double lr);
  size_t steps_taken() const { return step_count_; }

 private:
  ParamStore& params_;
  AdamWOptions options_;
  size_t step_count_ = 0;
  std::vector<std::vector<double>> first_moment_;
  std::vector<std::vector<double>> second_moment_;
};

double global_grad_norm(const ParamStore& params);

// Scales every gradient by max_norm/norm when the global norm exceeds
// max_norm. Returns the pre-clip norm.
double clip_gradients(ParamStore& params, double max_norm);

}  // namespace mind
