// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mind/aft.hpp"
#include "mind/config.hpp"
#include "mind/metrics.hpp"
#include "mind/model.hpp"
#include "mind/synthgen.hpp"

namespace mind {

struct EpochLog {
  size_t epoch = 0;
  LossBreakdown loss;          // means over the epoch's batches
  double val_pearson = 0.0;
  double load_entropy = 0.0;   // entropy of the epoch's expert-load histogram
  double last_lr = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  double best_val_pearson = 0.0;
  size_t best_epoch = 0;
  size_t total_steps = 0;
  double mean_load_entropy = 0.0;
  EvalCounters counters;  // accumulated over every training token

  std::string log_json(const std::string& config_hash, uint64_t seed) const;
};

struct TrainOutput {
  Model model;  // best-validation parameters
  TrainResult result;
};

// Windows every episode with the configured win/stride.
std::vector<Sample> build_windows(const Dataset& dataset, size_t win, size_t stride);

// Deterministic stratified split derived from the config seed.
std::pair<std::vector<Sample>, std::vector<Sample>> split_dataset(const Dataset& dataset,
                                                                  const RunConfig& config);

// Full training loop: windows, stratified split, batched AdamW with the
// one-cycle schedule and global-norm clipping, per-epoch validation, and
// best-checkpoint tracking.
TrainOutput train_model(const Dataset& dataset, const RunConfig& config);

// Parcel-wise metrics over each episode's validation TRs. only_subject
// restricts to one subject's episodes; route_as overrides the routing
// subject index (held-out evaluation).
MetricsReport evaluate_model(const Model& model, const Dataset& dataset, const RunConfig& config,
                             std::optional<uint32_t> only_subject = std::nullopt,
                             std::optional<uint32_t> route_as = std::nullopt);

struct IsgResult {
  std::vector<double> per_subject;  // mean val Pearson r on each held-out subject
  double mean = 0.0;
};

// Leave-one-subject-out: retrain without each subject, then evaluate that
// subject's validation TRs through the fallback routing row.
IsgResult isg_evaluate(const Dataset& dataset, const RunConfig& config);

}  // namespace mind
