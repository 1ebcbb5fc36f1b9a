// SPDX-License-Identifier: Apache-2.0
#include "mind/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace mind {

GradCheckReport grad_check(const std::function<double(ParamStore&)>& loss_fn, ParamStore& params,
                           double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) {
    raise(ErrorCode::InvalidSpec, "grad_check eps must be in [1e-7, 1e-3]");
  }

  double loss_a = loss_fn(params);
  double loss_b = loss_fn(params);
  if (loss_a != loss_b) {
    raise(ErrorCode::NonDeterministic, "loss_fn returned different values on repeat evaluation");
  }

  // Snapshot analytic gradients before the numeric loop clobbers them.
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.entries().size());
  for (const auto& e : params.entries()) analytic.push_back(e.grad.data());

  GradCheckReport report;
  for (size_t t = 0; t < params.entries().size(); ++t) {
    auto& entry = params.entries()[t];
    double tensor_max = 0.0;
    for (size_t i = 0; i < entry.value.size(); ++i) {
      double saved = entry.value.data()[i];
      entry.value.data()[i] = saved + eps;
      double plus = loss_fn(params);
      entry.value.data()[i] = saved - eps;
      double minus = loss_fn(params);
      entry.value.data()[i] = saved;

      double numeric = (plus - minus) / (2.0 * eps);
      double a = analytic[t][i];
      double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      tensor_max = std::max(tensor_max, rel);
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = entry.name;
        report.worst_index = i;
      }
    }
    report.per_param[entry.name] = tensor_max;
  }

  // Restore the analytic gradients so callers can keep using them.
  for (size_t t = 0; t < params.entries().size(); ++t) {
    params.entries()[t].grad.data() = analytic[t];
  }
  return report;
}

}  // namespace mind
