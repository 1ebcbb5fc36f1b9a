// SPDX-License-Identifier: Apache-2.0
#include "mind/tensor_ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mind {

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) raise(ErrorCode::InvalidShape, "softmax of empty vector");
  require_finite(logits, "softmax input");
  double max_logit = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - max_logit);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

std::vector<double> softmax_backward(std::span<const double> probs,
                                     std::span<const double> dprobs) {
  if (probs.size() != dprobs.size()) raise(ErrorCode::InvalidShape, "softmax_backward sizes");
  double inner = dot(probs, dprobs);
  std::vector<double> dlogits(probs.size());
  for (size_t i = 0; i < probs.size(); ++i) dlogits[i] = probs[i] * (dprobs[i] - inner);
  return dlogits;
}

std::vector<double> affine(std::span<const double> x, const Matrix& w,
                           std::span<const double> b) {
  if (w.cols() != x.size() || w.rows() != b.size()) {
    raise(ErrorCode::InvalidShape, "affine: W is " + std::to_string(w.rows()) + "x" +
                                       std::to_string(w.cols()) + ", x has " +
                                       std::to_string(x.size()) + ", b has " +
                                       std::to_string(b.size()));
  }
  std::vector<double> out(w.rows());
  for (size_t r = 0; r < w.rows(); ++r) {
    double acc = b[r];
    auto row = w.row(r);
    for (size_t c = 0; c < w.cols(); ++c) acc += row[c] * x[c];
    out[r] = acc;
  }
  return out;
}

std::vector<double> affine_backward(std::span<const double> x, const Matrix& w,
                                    std::span<const double> dy, Matrix& dw,
                                    std::span<double> db) {
  if (dy.size() != w.rows() || x.size() != w.cols() || !dw.same_shape(w) ||
      db.size() != w.rows()) {
    raise(ErrorCode::InvalidShape, "affine_backward shape mismatch");
  }
  std::vector<double> dx(w.cols(), 0.0);
  for (size_t r = 0; r < w.rows(); ++r) {
    db[r] += dy[r];
    auto wrow = w.row(r);
    auto dwrow = dw.row(r);
    for (size_t c = 0; c < w.cols(); ++c) {
      dwrow[c] += dy[r] * x[c];
      dx[c] += wrow[c] * dy[r];
    }
  }
  return dx;
}

namespace {
constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluCubic = 0.044715;
}  // namespace

double gelu(double x) {
  double inner = kGeluScale * (x + kGeluCubic * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(inner));
}

double gelu_grad(double x) {
  double inner = kGeluScale * (x + kGeluCubic * x * x * x);
  double t = std::tanh(inner);
  double dinner = kGeluScale * (1.0 + 3.0 * kGeluCubic * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner;
}

std::vector<double> gelu(std::span<const double> x) {
  require_finite(x, "gelu input");
  std::vector<double> out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = gelu(x[i]);
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace mind
