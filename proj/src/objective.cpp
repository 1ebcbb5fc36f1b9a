// SPDX-License-Identifier: Apache-2.0
#include "mind/objective.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace mind {

double mse_loss(const Matrix& pred, const Matrix& target, Matrix* grad) {
  if (!pred.same_shape(target)) {
    raise(ErrorCode::InvalidShape, "mse_loss shapes " + std::to_string(pred.rows()) + "x" +
                                       std::to_string(pred.cols()) + " vs " +
                                       std::to_string(target.rows()) + "x" +
                                       std::to_string(target.cols()));
  }
  const double scale = 1.0 / static_cast<double>(pred.size());
  if (grad) *grad = Matrix(pred.rows(), pred.cols());
  double acc = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    double diff = pred.data()[i] - target.data()[i];
    acc += diff * diff;
    if (grad) grad->data()[i] = 2.0 * diff * scale;
  }
  return acc * scale;
}

LoadBalanceResult load_balance(const Matrix& scores,
                               const std::vector<std::vector<size_t>>& selections, size_t k,
                               bool with_grad) {
  const size_t n = scores.rows();
  const size_t experts = scores.cols();
  if (n == 0) raise(ErrorCode::InvalidShape, "load_balance needs at least one token");
  if (selections.size() != n) raise(ErrorCode::InvalidShape, "selections do not match tokens");

  LoadBalanceResult result;
  result.importance.assign(experts, 0.0);
  result.load.assign(experts, 0.0);

  std::vector<double> row_sums(n, 0.0);
  for (size_t t = 0; t < n; ++t) {
    auto row = scores.row(t);
    double sum = 0.0;
    for (size_t e = 0; e < experts; ++e) sum += row[e];
    if (sum <= 0.0) raise(ErrorCode::DegenerateGate, "token scores sum to zero");
    row_sums[t] = sum;
    for (size_t e = 0; e < experts; ++e) result.importance[e] += row[e] / sum;
  }
  for (double& v : result.importance) v /= static_cast<double>(n);

  for (size_t t = 0; t < n; ++t) {
    for (size_t e : selections[t]) result.load[e] += 1.0;
  }
  const double load_scale = 1.0 / (static_cast<double>(n) * static_cast<double>(k));
  for (double& v : result.load) v *= load_scale;

  double value = 0.0;
  for (size_t e = 0; e < experts; ++e) value += result.load[e] * result.importance[e];
  result.value = value * static_cast<double>(experts);

  if (with_grad) {
    // d value / d importance_e = E * load_e; importance is the mean of the
    // row-normalized scores, so each row contributes through that
    // normalization. Load is a count and gets no gradient.
    result.grad_scores = Matrix(n, experts);
    const double e_over_n = static_cast<double>(experts) / static_cast<double>(n);
    for (size_t t = 0; t < n; ++t) {
      auto row = scores.row(t);
      auto grad_row = result.grad_scores.row(t);
      double weighted = 0.0;  // sum_e load_e * normalized_e
      for (size_t e = 0; e < experts; ++e) weighted += result.load[e] * (row[e] / row_sums[t]);
      for (size_t e = 0; e < experts; ++e) {
        grad_row[e] = e_over_n * (result.load[e] - weighted) / row_sums[t];
      }
    }
  }
  return result;
}

LossBreakdown total_loss(const Matrix& pred, const Matrix& target, const Matrix& scores,
                         const std::vector<std::vector<size_t>>& selections, size_t k,
                         const Matrix& subject_bias, double beta, double lambda) {
  LossBreakdown breakdown;
  breakdown.beta = beta;
  breakdown.lambda = lambda;
  breakdown.reconstruction = mse_loss(pred, target);
  breakdown.load_balance = load_balance(scores, selections, k).value;
  double l2 = 0.0;
  for (double v : subject_bias.data()) l2 += v * v;
  breakdown.subject_bias_l2 = l2;
  breakdown.total =
      breakdown.reconstruction + beta * breakdown.load_balance + lambda * breakdown.subject_bias_l2;
  return breakdown;
}

double OneCycleSchedule::lr(size_t step) const {
  if (step >= total_steps) {
    raise(ErrorCode::ScheduleExhausted,
          "step " + std::to_string(step) + " >= " + std::to_string(total_steps));
  }
  const auto warm = static_cast<size_t>(std::floor(warmup_frac * static_cast<double>(total_steps)));
  const double start_lr = peak_lr / div;
  const double final_lr = peak_lr / final_div;
  if (step <= warm && warm > 0) {
    double progress = static_cast<double>(step) / static_cast<double>(warm);
    return start_lr + progress * (peak_lr - start_lr);
  }
  if (total_steps - 1 <= warm) return peak_lr;
  double progress =
      static_cast<double>(step - warm) / static_cast<double>(total_steps - 1 - warm);
  return final_lr + (peak_lr - final_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(ParamStore& params, AdamWOptions options) : params_(params), options_(options) {
  first_moment_.reserve(params.entries().size());
  second_moment_.reserve(params.entries().size());
  for (const auto& e : params.entries()) {
    first_moment_.emplace_back(e.value.size(), 0.0);
    second_moment_.emplace_back(e.value.size(), 0.0);
  }
}

void AdamW::step(double lr) {
  step_count_ += 1;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
  for (size_t t = 0; t < params_.entries().size(); ++t) {
    auto& entry = params_.entries()[t];
    auto& m = first_moment_[t];
    auto& v = second_moment_[t];
    for (size_t i = 0; i < entry.value.size(); ++i) {
      double& p = entry.value.data()[i];
      double g = entry.grad.data()[i];
      p -= lr * options_.weight_decay * p;
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      double m_hat = m[i] / bias1;
      double v_hat = v[i] / bias2;
      p -= lr * m_hat / (std::sqrt(v_hat) + options_.eps);
    }
  }
}

double global_grad_norm(const ParamStore& params) {
  double acc = 0.0;
  for (const auto& e : params.entries()) {
    for (double g : e.grad.data()) acc += g * g;
  }
  return std::sqrt(acc);
}

double clip_gradients(ParamStore& params, double max_norm) {
  double norm = global_grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    double scale = max_norm / norm;
    for (auto& e : params.entries()) {
      for (double& g : e.grad.data()) g *= scale;
    }
  }
  return norm;
}

}  // namespace mind
