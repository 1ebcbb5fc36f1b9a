// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mind/experts.hpp"
#include "mind/objective.hpp"

namespace mind {

enum class RouterMode { Both, TokenOnly, PriorOnly };

const char* router_mode_name(RouterMode mode);
RouterMode router_mode_from_name(const std::string& name);

struct ModelConfig {
  size_t d_in = 16;
  size_t d = 16;
  size_t hidden = 32;
  size_t out = 32;
  size_t experts = 8;
  size_t top_k = 2;
  size_t subjects = 4;
  size_t w_max = 4096;
  RouterMode router = RouterMode::Both;

  void validate() const;
};

struct WindowRef {
  const Matrix* features = nullptr;  // [W x D_in]
  const Matrix* targets = nullptr;   // [W x O]
  uint32_t subject = 0;
  size_t start_tr = 0;
};

struct BatchStats {
  double min_topk_margin = std::numeric_limits<double>::infinity();
  std::vector<uint64_t> selection_counts;  // per expert
  uint64_t tokens = 0;
};

// Full encoder-decoder: feature projection and temporal block, subject-aware
// gating, and the sparse expert head, all parameterized through one
// ParamStore so the optimizer, checkpointing, and gradient checking see a
// single flat view.
class Model {
 public:
  Model(const ModelConfig& config, uint64_t init_seed);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  AfireParams& afire() { return afire_; }
  RouterParams& router() { return router_; }
  ExpertBank& experts() { return bank_; }
  const AfireParams& afire() const { return afire_; }
  const RouterParams& router() const { return router_; }
  const ExpertBank& experts() const { return bank_; }

  GateOutput route_encoded(std::span<const double> encoded, uint32_t subject,
                           GateCache* cache = nullptr) const;

  // Predict a window of TR-binned features whose first row sits at absolute
  // TR start_tr. Optionally reports the per-token gates.
  Matrix predict_window(const Matrix& features, uint32_t subject, size_t start_tr,
                        EvalCounters* counters = nullptr,
                        std::vector<GateOutput>* gates = nullptr) const;

  // Training objective over a batch of windows; fills parameter gradients
  // (after zeroing them) and returns the loss terms.
  LossBreakdown forward_backward(std::span<const WindowRef> batch, double beta, double lambda,
                                 EvalCounters* counters = nullptr, BatchStats* stats = nullptr);

  // Loss only, no gradient buffers touched.
  LossBreakdown forward_loss(std::span<const WindowRef> batch, double beta, double lambda,
                             BatchStats* stats = nullptr) const;

  void save(const std::filesystem::path& path, const std::string& config_hash,
            uint64_t seed) const;
  static Model load(const std::filesystem::path& path);
  static std::string checkpoint_config_hash(const std::filesystem::path& path);

  // New model with one extra subject whose embedding is the mean of the
  // trained rows and whose prior bias row is zero; used to route subjects
  // never seen in training.
  Model clone_with_fallback_subject() const;

  std::vector<std::vector<double>> snapshot_values() const;
  void restore_values(const std::vector<std::vector<double>>& snapshot);

 private:
  Model() = default;
  void build(uint64_t init_seed);
  void bind_views();

  ModelConfig cfg_;
  ParamStore params_;
  AfireParams afire_;
  RouterParams router_;
  ExpertBank bank_;
};

}  // namespace mind
