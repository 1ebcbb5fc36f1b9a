// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mind/matrix.hpp"

namespace mind {

// Sample Pearson correlation. If either vector is (numerically) constant the
// result is 0 and *degenerate is set instead of producing NaN.
double pearson(std::span<const double> a, std::span<const double> b,
               bool* degenerate = nullptr);

// Average ranks, 1-based; ties get the mean rank of their group.
std::vector<double> average_ranks(std::span<const double> values);

double spearman(std::span<const double> a, std::span<const double> b,
                bool* degenerate = nullptr);

// 1 - SS_res / SS_tot about the target mean. Constant targets raise
// DegenerateTarget.
double r_squared(std::span<const double> pred, std::span<const double> target);

// Per-(subject, episode) evaluation input: predictions and targets over the
// evaluated TRs, both [T x O].
struct EpisodeScores {
  uint32_t subject = 0;
  std::string episode_id;
  size_t n_tr = 0;
  std::vector<double> pearson_per_parcel;
  std::vector<double> spearman_per_parcel;
  std::vector<double> r2_per_parcel;
  std::vector<bool> degenerate;  // per parcel
  size_t degenerate_count = 0;
  double mean_pearson = 0.0;
  double mean_spearman = 0.0;
  double mean_r2 = 0.0;
};

struct SubjectScores {
  uint32_t subject = 0;
  double mean_pearson = 0.0;
  double mean_spearman = 0.0;
  double mean_r2 = 0.0;
};

struct MetricsReport {
  std::string config_hash;
  uint64_t seed = 0;
  std::string split_id;
  std::vector<EpisodeScores> episodes;
  std::vector<SubjectScores> subjects;
  double mean_pearson = 0.0;
  double mean_spearman = 0.0;
  double mean_r2 = 0.0;
  size_t degenerate_parcels = 0;
  std::optional<std::vector<double>> isg_per_subject;
  std::optional<double> isg_mean;

  // Stable-key-order UTF-8 JSON document.
  std::string to_json() const;
};

EpisodeScores score_episode(uint32_t subject, const std::string& episode_id, const Matrix& pred,
                            const Matrix& target);

// Mean over non-degenerate parcels per episode, then over episodes per
// subject, then over subjects. Raises EmptyReport when every parcel of every
// episode is degenerate.
MetricsReport aggregate(std::vector<EpisodeScores> episodes);

}  // namespace mind
