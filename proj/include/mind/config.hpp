// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "mind/model.hpp"
#include "mind/synthgen.hpp"

namespace mind {

// Flat key=value run configuration. Unknown keys are errors; every key has a
// typed default. Environment variables prefixed MIND_ override file values
// (dots become underscores, upper case: MIND_TRAIN_EPOCHS=40).
struct RunConfig {
  // dims.*
  size_t d_in = 16;
  size_t d = 16;
  size_t hidden = 32;
  size_t out = 32;
  size_t experts = 8;
  size_t top_k = 2;
  size_t subjects = 4;
  size_t w_max = 4096;

  // model.*
  RouterMode router = RouterMode::Both;

  // train.*
  size_t epochs = 40;
  size_t batch_size = 16;
  double peak_lr = 3e-3;
  double div = 25.0;
  double final_div = 1e4;
  double warmup = 0.3;
  double beta = 0.01;
  double lambda = 1e-4;
  double clip = 1.0;
  double weight_decay = 0.01;
  uint64_t seed = 0;

  // data.*
  std::string data_dir;  // empty: generate from synth.* in memory
  double tr_seconds = 1.5;
  size_t win = 100;
  size_t stride = 50;
  double split_ratio = 0.9;

  // synth.*
  HeterogeneityMode synth_mode = HeterogeneityMode::Shared;
  double synth_sigma = 0.5;
  double synth_target_ceiling = 0.0;  // >0: calibrate sigma to this ceiling
  size_t synth_episodes = 2;
  size_t synth_tr_per_episode = 1000;
  size_t synth_teacher_experts = 4;
  size_t synth_teacher_hidden = 32;
  double synth_token_gate_scale = 1.0;
  double synth_ar_coeff = 0.0;

  void validate() const;
  ModelConfig model_config() const;
  SynthSpec synth_spec() const;

  // Canonical serialization: every key, sorted, one `key = value` per line.
  std::string canonical_text() const;
  // FNV-1a hash of the canonical text, 16 hex digits.
  std::string hash() const;
};

RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

// Applies MIND_* environment overrides on top of a parsed config.
void apply_env_overrides(RunConfig& config);

}  // namespace mind
