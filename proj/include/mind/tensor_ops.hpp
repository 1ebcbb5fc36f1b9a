// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "mind/matrix.hpp"

namespace mind {

// Numerically stable softmax (max-subtraction). Output entries are in (0,1]
// and sum to 1.
std::vector<double> softmax(std::span<const double> logits);

// dlogits = p * (dp - <dp, p>), the exact softmax Jacobian-vector product.
std::vector<double> softmax_backward(std::span<const double> probs, std::span<const double> dprobs);

// W*x + b. Requires W.cols == len(x) and W.rows == len(b).
std::vector<double> affine(std::span<const double> x, const Matrix& w, std::span<const double> b);

// Accumulates dW += dy (x)^T outer product, db += dy, and returns dx = W^T dy.
std::vector<double> affine_backward(std::span<const double> x, const Matrix& w,
                                    std::span<const double> dy, Matrix& dw,
                                    std::span<double> db);

// GELU, tanh approximation.
double gelu(double x);
double gelu_grad(double x);
std::vector<double> gelu(std::span<const double> x);

double dot(std::span<const double> a, std::span<const double> b);

}  // namespace mind
