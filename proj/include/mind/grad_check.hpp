// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <string>

#include "mind/param_store.hpp"

namespace mind {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  size_t worst_index = 0;
  // Max relative error per parameter tensor.
  std::map<std::string, double> per_param;
};

// Compares the analytic gradients produced by loss_fn against central
// differences (f(p+eps) - f(p-eps)) / (2 eps), entry by entry.
//
// loss_fn must be deterministic, must zero and then fill the gradient buffers
// of `params`, and must return the loss. The relative error per entry is
// |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
GradCheckReport grad_check(const std::function<double(ParamStore&)>& loss_fn, ParamStore& params,
                           double eps);

}  // namespace mind
