// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mind/model.hpp"

namespace mind {

enum class HeterogeneityMode { Shared, Disjoint, Mixed, TokenModulated };

const char* heterogeneity_mode_name(HeterogeneityMode mode);
HeterogeneityMode heterogeneity_mode_from_name(const std::string& name);

struct SynthSpec {
  size_t d = 16;
  size_t out = 32;
  size_t teacher_experts = 4;
  size_t teacher_hidden = 32;
  size_t subjects = 4;
  size_t episodes = 2;
  size_t tr_per_episode = 1000;
  double sigma = 0.5;
  HeterogeneityMode mode = HeterogeneityMode::Shared;
  // Strength of the token-dependent teacher gate (mixed / token-modulated).
  double token_gate_scale = 1.0;
  // AR(1) coefficient for temporally smoothed tokens; 0 = i.i.d.
  double ar_coeff = 0.0;
  double tr_seconds = 1.5;
  uint64_t seed = 0;

  void validate() const;
};

// Ground-truth generative model: canonical token encoding (identity
// projection, zero temporal block), a bank of expert heads, per-subject
// mixture vectors, and an optional token-dependent gate. Responses are the
// dense mixture of expert outputs plus Gaussian noise.
struct PlantedTeacher {
  SynthSpec spec;
  Matrix mixtures;  // [S x E*], rows on the simplex
  Matrix gate_w;    // [E* x D]; all-zero when the mode has no token gate
  ParamStore params;
  AfireParams afire;
  ExpertBank bank;

  PlantedTeacher() = default;
  PlantedTeacher(const PlantedTeacher&) = delete;
  PlantedTeacher& operator=(const PlantedTeacher&) = delete;
  PlantedTeacher(PlantedTeacher&&) = default;
  PlantedTeacher& operator=(PlantedTeacher&&) = default;

  bool has_token_gate() const {
    return spec.mode == HeterogeneityMode::Mixed ||
           spec.mode == HeterogeneityMode::TokenModulated;
  }

  Matrix encode(const Matrix& raw_tokens) const;
  std::vector<double> gate_weights(std::span<const double> encoded, size_t subject) const;
  std::vector<double> predict(std::span<const double> encoded, size_t subject) const;
  // Noiseless predictions for a whole episode of raw tokens.
  Matrix predict_episode(const Matrix& raw_tokens, size_t subject) const;
};

struct EpisodeData {
  uint32_t subject = 0;
  std::string episode_id;
  Matrix features;   // TR-binned model inputs [T x D_in]
  Matrix responses;  // noisy targets [T x O]
  Matrix clean;      // teacher's noiseless predictions; empty for disk data
};

struct Dataset {
  std::vector<EpisodeData> episodes;
  double tr_seconds = 1.5;
  size_t subjects = 0;
  size_t d_in = 0;
  size_t out = 0;
};

struct PlantedDataset {
  Dataset data;
  PlantedTeacher teacher;
  uint64_t seed = 0;
};

PlantedDataset generate(const SynthSpec& spec);

// Per-parcel Pearson r between the teacher's noiseless predictions and the
// noisy targets over the whole dataset: the ceiling any student can reach.
std::vector<double> oracle_ceiling(const PlantedDataset& dataset);
double mean_oracle_ceiling(const PlantedDataset& dataset);

// Noise level that puts the mean oracle ceiling near target_r, derived from
// the noiseless signal scale of the same spec and seed.
double sigma_for_target_ceiling(const SynthSpec& spec, double target_r);

// Exact reconstruction of the teacher as a student-family model with K
// selected experts. Exact for strictly positive mixtures; one-hot mixtures
// map to a +/-0/-30 logit row.
Model teacher_to_model(const PlantedTeacher& teacher, size_t top_k);

// Optimal assignment of teacher experts to student experts by output
// similarity on a probe set; returns match[j] = student index for teacher
// expert j (or npos when the student has fewer experts).
std::vector<size_t> match_experts(const Model& student, const PlantedTeacher& teacher,
                                  uint64_t probe_seed = 9001, size_t probe_tokens = 256);

// Mean over subjects of the Pearson correlation between the student's
// learned prior and the teacher mixture, after expert matching.
double recovery_score(const Model& student, const PlantedTeacher& teacher,
                      uint64_t probe_seed = 9001);

}  // namespace mind
