// SPDX-License-Identifier: Apache-2.0
#include "mind/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "json.hpp"

namespace mind {

namespace {

constexpr double kVarianceFloor = 1e-12;

struct Moments {
  double mean = 0.0;
  double var = 0.0;  // population variance
};

Moments moments(std::span<const double> v) {
  Moments m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  for (double x : v) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(v.size());
  return m;
}

void check_pair(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) raise(ErrorCode::InvalidShape, "correlation inputs differ in length");
  if (a.size() < 2) raise(ErrorCode::InvalidShape, "correlation needs at least 2 points");
}

}  // namespace

double pearson(std::span<const double> a, std::span<const double> b, bool* degenerate) {
  check_pair(a, b);
  if (degenerate) *degenerate = false;
  Moments ma = moments(a);
  Moments mb = moments(b);
  if (ma.var < kVarianceFloor || mb.var < kVarianceFloor) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  double cov = 0.0;
  for (size_t i = 0; i < a.size(); ++i) cov += (a[i] - ma.mean) * (b[i] - mb.mean);
  cov /= static_cast<double>(a.size());
  return cov / std::sqrt(ma.var * mb.var);
}

std::vector<double> average_ranks(std::span<const double> values) {
  const size_t n = values.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t x, size_t y) { return values[x] < values[y]; });
  std::vector<double> ranks(n, 0.0);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    // positions i..j (0-based) share the mean of ranks i+1..j+1
    double mean_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t t = i; t <= j; ++t) ranks[order[t]] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> a, std::span<const double> b, bool* degenerate) {
  check_pair(a, b);
  std::vector<double> ra = average_ranks(a);
  std::vector<double> rb = average_ranks(b);
  return pearson(ra, rb, degenerate);
}

double r_squared(std::span<const double> pred, std::span<const double> target) {
  check_pair(pred, target);
  Moments mt = moments(target);
  if (mt.var < kVarianceFloor) raise(ErrorCode::DegenerateTarget, "constant target");
  double ss_res = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    double d = pred[i] - target[i];
    ss_res += d * d;
  }
  double ss_tot = mt.var * static_cast<double>(target.size());
  return 1.0 - ss_res / ss_tot;
}

EpisodeScores score_episode(uint32_t subject, const std::string& episode_id, const Matrix& pred,
                            const Matrix& target) {
  if (!pred.same_shape(target)) raise(ErrorCode::InvalidShape, "score_episode shapes differ");
  const size_t parcels = pred.cols();
  const size_t t = pred.rows();
  if (t < 2) raise(ErrorCode::InvalidShape, "score_episode needs at least 2 TRs");

  EpisodeScores scores;
  scores.subject = subject;
  scores.episode_id = episode_id;
  scores.n_tr = t;
  scores.pearson_per_parcel.assign(parcels, 0.0);
  scores.spearman_per_parcel.assign(parcels, 0.0);
  scores.r2_per_parcel.assign(parcels, 0.0);
  scores.degenerate.assign(parcels, false);

  std::vector<double> col_pred(t), col_target(t);
  double sum_p = 0.0, sum_s = 0.0, sum_r2 = 0.0;
  size_t used = 0;
  for (size_t o = 0; o < parcels; ++o) {
    for (size_t i = 0; i < t; ++i) {
      col_pred[i] = pred.at(i, o);
      col_target[i] = target.at(i, o);
    }
    bool deg_p = false;
    double r = pearson(col_pred, col_target, &deg_p);
    if (deg_p) {
      scores.degenerate[o] = true;
      scores.degenerate_count += 1;
      continue;
    }
    scores.pearson_per_parcel[o] = r;
    scores.spearman_per_parcel[o] = spearman(col_pred, col_target);
    scores.r2_per_parcel[o] = r_squared(col_pred, col_target);
    sum_p += scores.pearson_per_parcel[o];
    sum_s += scores.spearman_per_parcel[o];
    sum_r2 += scores.r2_per_parcel[o];
    used += 1;
  }
  if (used > 0) {
    scores.mean_pearson = sum_p / static_cast<double>(used);
    scores.mean_spearman = sum_s / static_cast<double>(used);
    scores.mean_r2 = sum_r2 / static_cast<double>(used);
  }
  return scores;
}

MetricsReport aggregate(std::vector<EpisodeScores> episodes) {
  if (episodes.empty()) raise(ErrorCode::EmptyReport, "no episodes to aggregate");

  MetricsReport report;
  report.episodes = std::move(episodes);

  std::map<uint32_t, std::vector<const EpisodeScores*>> by_subject;
  for (auto& e : report.episodes) {
    report.degenerate_parcels += e.degenerate_count;
    if (e.degenerate_count < e.pearson_per_parcel.size()) {
      by_subject[e.subject].push_back(&e);
    }
  }
  if (by_subject.empty()) raise(ErrorCode::EmptyReport, "every parcel is degenerate");

  double acc_p = 0.0, acc_s = 0.0, acc_r2 = 0.0;
  for (auto& [subject, list] : by_subject) {
    SubjectScores s;
    s.subject = subject;
    for (const auto* e : list) {
      s.mean_pearson += e->mean_pearson;
      s.mean_spearman += e->mean_spearman;
      s.mean_r2 += e->mean_r2;
    }
    double n = static_cast<double>(list.size());
    s.mean_pearson /= n;
    s.mean_spearman /= n;
    s.mean_r2 /= n;
    report.subjects.push_back(s);
    acc_p += s.mean_pearson;
    acc_s += s.mean_spearman;
    acc_r2 += s.mean_r2;
  }
  double ns = static_cast<double>(report.subjects.size());
  report.mean_pearson = acc_p / ns;
  report.mean_spearman = acc_s / ns;
  report.mean_r2 = acc_r2 / ns;
  return report;
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json doc;
  doc["meta"] = {{"config_hash", config_hash}, {"seed", seed}, {"split_id", split_id}};
  doc["episodes"] = nlohmann::ordered_json::array();
  for (const auto& e : episodes) {
    nlohmann::ordered_json je;
    je["subject"] = e.subject;
    je["episode"] = e.episode_id;
    je["n_tr"] = e.n_tr;
    je["degenerate_parcels"] = e.degenerate_count;
    je["degenerate"] = e.degenerate;
    je["pearson"] = e.pearson_per_parcel;
    je["spearman"] = e.spearman_per_parcel;
    je["r_squared"] = e.r2_per_parcel;
    je["mean_pearson"] = e.mean_pearson;
    je["mean_spearman"] = e.mean_spearman;
    je["mean_r_squared"] = e.mean_r2;
    doc["episodes"].push_back(je);
  }
  doc["subjects"] = nlohmann::ordered_json::array();
  for (const auto& s : subjects) {
    doc["subjects"].push_back({{"subject", s.subject},
                               {"mean_pearson", s.mean_pearson},
                               {"mean_spearman", s.mean_spearman},
                               {"mean_r_squared", s.mean_r2}});
  }
  doc["global"] = {{"mean_pearson", mean_pearson},
                   {"mean_spearman", mean_spearman},
                   {"mean_r_squared", mean_r2},
                   {"degenerate_parcels", degenerate_parcels}};
  if (isg_per_subject) {
    doc["isg"] = {{"per_subject", *isg_per_subject}, {"mean", *isg_mean}};
  }
  return doc.dump(2) + "\n";
}

}  // namespace mind
