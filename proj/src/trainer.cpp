// SPDX-License-Identifier: Apache-2.0
#include "mind/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "json.hpp"

namespace mind {

namespace {

double entropy(std::span<const uint64_t> counts) {
  uint64_t total = 0;
  for (uint64_t c : counts) total += c;
  if (total == 0) return 0.0;
  double h = 0.0;
  for (uint64_t c : counts) {
    if (c == 0) continue;
    double f = static_cast<double>(c) / static_cast<double>(total);
    h -= f * std::log(f);
  }
  return h;
}

// Validation TRs of one episode as contiguous [begin, end) segments.
std::vector<std::pair<size_t, size_t>> val_segments(const std::vector<Sample>& val,
                                                    uint32_t subject,
                                                    const std::string& episode_id) {
  std::set<size_t> trs;
  for (const auto& s : val) {
    if (s.subject_id != subject || s.episode_id != episode_id) continue;
    for (size_t t = 0; t < s.tokens.rows(); ++t) trs.insert(s.start_tr + t);
  }
  std::vector<std::pair<size_t, size_t>> segments;
  for (auto it = trs.begin(); it != trs.end();) {
    size_t begin = *it;
    size_t end = begin + 1;
    ++it;
    while (it != trs.end() && *it == end) {
      ++end;
      ++it;
    }
    segments.push_back({begin, end});
  }
  return segments;
}

Matrix slice_rows(const Matrix& m, size_t begin, size_t end) {
  Matrix out(end - begin, m.cols());
  for (size_t r = begin; r < end; ++r) {
    auto src = m.row(r);
    std::copy(src.begin(), src.end(), out.row(r - begin).begin());
  }
  return out;
}

}  // namespace

std::vector<Sample> build_windows(const Dataset& dataset, size_t win, size_t stride) {
  std::vector<Sample> samples;
  for (const auto& ep : dataset.episodes) {
    TokenSequence tokens;
    tokens.episode_id = ep.episode_id;
    tokens.subject_id = ep.subject;
    tokens.tokens = ep.features;
    tokens.tr_seconds = dataset.tr_seconds;
    ResponseSequence responses;
    responses.episode_id = ep.episode_id;
    responses.subject_id = ep.subject;
    responses.responses = ep.responses;
    std::vector<Sample> windows = make_windows(tokens, responses, win, stride);
    samples.insert(samples.end(), std::make_move_iterator(windows.begin()),
                   std::make_move_iterator(windows.end()));
  }
  return samples;
}

std::pair<std::vector<Sample>, std::vector<Sample>> split_dataset(const Dataset& dataset,
                                                                  const RunConfig& config) {
  std::vector<Sample> samples = build_windows(dataset, config.win, config.stride);
  Rng split_rng = Rng(config.seed).derive(11);
  return split_train_val(samples, config.split_ratio, split_rng);
}

TrainOutput train_model(const Dataset& dataset, const RunConfig& config) {
  config.validate();
  if (dataset.d_in != config.d_in || dataset.out != config.out) {
    raise(ErrorCode::ConfigMismatch, "dataset dims do not match config dims");
  }
  if (dataset.subjects > config.subjects) {
    raise(ErrorCode::ConfigMismatch, "dataset has more subjects than the config");
  }
  for (const auto& ep : dataset.episodes) {
    if (ep.features.rows() > config.w_max) {
      raise(ErrorCode::ConfigMismatch, "episode longer than dims.w_max");
    }
  }

  auto [train_samples, val_samples] = split_dataset(dataset, config);
  if (train_samples.empty()) raise(ErrorCode::EmptySequence, "no training samples");

  Rng seed_rng(config.seed);
  Model model(config.model_config(), seed_rng.derive(1).next_u64());

  const size_t steps_per_epoch =
      (train_samples.size() + config.batch_size - 1) / config.batch_size;
  OneCycleSchedule schedule;
  schedule.peak_lr = config.peak_lr;
  schedule.div = config.div;
  schedule.final_div = config.final_div;
  schedule.warmup_frac = config.warmup;
  schedule.total_steps = config.epochs * steps_per_epoch;

  TrainOutput output{std::move(model), {}};
  Model& m = output.model;
  AdamWOptions adam_options;
  adam_options.weight_decay = config.weight_decay;
  AdamW optimizer(m.params(), adam_options);
  TrainResult& result = output.result;
  result.total_steps = schedule.total_steps;

  std::vector<size_t> order(train_samples.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<std::vector<double>> best_snapshot = m.snapshot_values();
  double best_val = -2.0;
  size_t best_epoch = 0;

  size_t step = 0;
  double entropy_acc = 0.0;
  for (size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle_rng = seed_rng.derive(100 + epoch);
    shuffle_rng.shuffle(order);

    EpochLog log;
    log.epoch = epoch;
    std::vector<uint64_t> epoch_counts(config.experts, 0);
    size_t batches = 0;

    for (size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      size_t end = std::min(order.size(), begin + config.batch_size);
      std::vector<WindowRef> batch;
      batch.reserve(end - begin);
      for (size_t i = begin; i < end; ++i) {
        const Sample& s = train_samples[order[i]];
        batch.push_back({&s.tokens, &s.responses, s.subject_id, s.start_tr});
      }
      BatchStats stats;
      LossBreakdown loss =
          m.forward_backward(batch, config.beta, config.lambda, &result.counters, &stats);
      clip_gradients(m.params(), config.clip);
      log.last_lr = schedule.lr(step);
      optimizer.step(log.last_lr);
      step += 1;
      batches += 1;

      log.loss.reconstruction += loss.reconstruction;
      log.loss.load_balance += loss.load_balance;
      log.loss.subject_bias_l2 += loss.subject_bias_l2;
      log.loss.total += loss.total;
      for (size_t e = 0; e < config.experts; ++e) epoch_counts[e] += stats.selection_counts[e];
    }
    log.loss.reconstruction /= static_cast<double>(batches);
    log.loss.load_balance /= static_cast<double>(batches);
    log.loss.subject_bias_l2 /= static_cast<double>(batches);
    log.loss.total /= static_cast<double>(batches);
    log.loss.beta = config.beta;
    log.loss.lambda = config.lambda;
    log.load_entropy = entropy(epoch_counts);
    entropy_acc += log.load_entropy;

    if (!val_samples.empty()) {
      MetricsReport report = evaluate_model(m, dataset, config);
      log.val_pearson = report.mean_pearson;
    }
    if (log.val_pearson > best_val) {
      best_val = log.val_pearson;
      best_epoch = epoch;
      best_snapshot = m.snapshot_values();
    }
    result.epochs.push_back(log);
  }

  m.restore_values(best_snapshot);
  result.best_val_pearson = best_val;
  result.best_epoch = best_epoch;
  result.mean_load_entropy = entropy_acc / static_cast<double>(config.epochs);
  return output;
}

MetricsReport evaluate_model(const Model& model, const Dataset& dataset, const RunConfig& config,
                             std::optional<uint32_t> only_subject,
                             std::optional<uint32_t> route_as) {
  auto [train_samples, val_samples] = split_dataset(dataset, config);
  (void)train_samples;

  std::vector<EpisodeScores> episodes;
  for (const auto& ep : dataset.episodes) {
    if (only_subject && ep.subject != *only_subject) continue;
    auto segments = val_segments(val_samples, ep.subject, ep.episode_id);
    if (segments.empty()) continue;
    size_t total = 0;
    for (auto [b, e] : segments) total += e - b;

    Matrix pred(total, dataset.out);
    Matrix target(total, dataset.out);
    size_t row = 0;
    uint32_t subject = route_as.value_or(ep.subject);
    for (auto [b, e] : segments) {
      Matrix feats = slice_rows(ep.features, b, e);
      Matrix window_pred = model.predict_window(feats, subject, b);
      for (size_t t = 0; t < window_pred.rows(); ++t, ++row) {
        auto src = window_pred.row(t);
        std::copy(src.begin(), src.end(), pred.row(row).begin());
        auto tgt = ep.responses.row(b + t);
        std::copy(tgt.begin(), tgt.end(), target.row(row).begin());
      }
    }
    episodes.push_back(score_episode(ep.subject, ep.episode_id, pred, target));
  }

  MetricsReport report = aggregate(std::move(episodes));
  report.config_hash = config.hash();
  report.seed = config.seed;
  report.split_id = "stratified-" + std::to_string(config.seed);
  return report;
}

IsgResult isg_evaluate(const Dataset& dataset, const RunConfig& config) {
  std::set<uint32_t> subject_set;
  for (const auto& ep : dataset.episodes) subject_set.insert(ep.subject);
  if (subject_set.size() < 2) {
    raise(ErrorCode::NeedMultipleSubjects, "ISG needs at least two subjects");
  }

  IsgResult result;
  for (uint32_t held_out : subject_set) {
    // Dataset without the held-out subject, ids remapped to 0..S-2.
    Dataset rest;
    rest.tr_seconds = dataset.tr_seconds;
    rest.d_in = dataset.d_in;
    rest.out = dataset.out;
    std::map<uint32_t, uint32_t> remap;
    for (uint32_t s : subject_set) {
      if (s == held_out) continue;
      uint32_t next_id = static_cast<uint32_t>(remap.size());
      remap[s] = next_id;
    }
    rest.subjects = remap.size();
    for (const auto& ep : dataset.episodes) {
      if (ep.subject == held_out) continue;
      EpisodeData copy = ep;
      copy.subject = remap.at(ep.subject);
      rest.episodes.push_back(std::move(copy));
    }

    RunConfig rest_config = config;
    rest_config.subjects = remap.size();
    rest_config.seed = Rng(config.seed).derive(7000 + held_out).next_u64();

    TrainOutput trained = train_model(rest, rest_config);
    Model extended = trained.model.clone_with_fallback_subject();
    const auto fallback = static_cast<uint32_t>(rest_config.subjects);

    // The held-out subject's validation TRs come from the full dataset's
    // split, so they match the within-subject evaluation TRs.
    Dataset held;
    held.tr_seconds = dataset.tr_seconds;
    held.d_in = dataset.d_in;
    held.out = dataset.out;
    held.subjects = dataset.subjects;
    for (const auto& ep : dataset.episodes) {
      if (ep.subject == held_out) held.episodes.push_back(ep);
    }
    RunConfig eval_config = config;
    eval_config.subjects = std::max(config.subjects, static_cast<size_t>(fallback) + 1);
    MetricsReport report = evaluate_model(extended, held, eval_config, held_out, fallback);
    result.per_subject.push_back(report.mean_pearson);
  }
  result.mean = std::accumulate(result.per_subject.begin(), result.per_subject.end(), 0.0) /
                static_cast<double>(result.per_subject.size());
  return result;
}

std::string TrainResult::log_json(const std::string& config_hash, uint64_t seed) const {
  nlohmann::ordered_json doc;
  doc["config_hash"] = config_hash;
  doc["seed"] = seed;
  doc["total_steps"] = total_steps;
  doc["best_epoch"] = best_epoch;
  doc["best_val_pearson"] = best_val_pearson;
  doc["mean_load_entropy"] = mean_load_entropy;
  doc["tokens_seen"] = counters.tokens;
  doc["expert_evals"] = counters.expert_evals;
  doc["epochs"] = nlohmann::ordered_json::array();
  for (const auto& e : epochs) {
    doc["epochs"].push_back({{"epoch", e.epoch},
                             {"loss_total", e.loss.total},
                             {"loss_reconstruction", e.loss.reconstruction},
                             {"loss_load_balance", e.loss.load_balance},
                             {"loss_subject_bias_l2", e.loss.subject_bias_l2},
                             {"val_pearson", e.val_pearson},
                             {"load_entropy", e.load_entropy},
                             {"last_lr", e.last_lr}});
  }
  return doc.dump(2) + "\n";
}

}  // namespace mind
