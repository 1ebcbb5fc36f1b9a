// SPDX-License-Identifier: Apache-2.0
#include "mind/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "json.hpp"

namespace mind::commands {

ResolvedData resolve_dataset(const RunConfig& config) {
  ResolvedData resolved;
  if (!config.data_dir.empty()) {
    resolved.dataset = load_dataset(config.data_dir);
    if (resolved.dataset.d_in != config.d_in || resolved.dataset.out != config.out) {
      raise(ErrorCode::ConfigMismatch, "dataset dims do not match dims.* config");
    }
    return resolved;
  }
  SynthSpec spec = config.synth_spec();
  if (config.synth_target_ceiling > 0.0) {
    spec.sigma = sigma_for_target_ceiling(spec, config.synth_target_ceiling);
  }
  resolved.sigma_used = spec.sigma;
  resolved.planted = generate(spec);
  resolved.dataset = resolved.planted->data;
  return resolved;
}

SynthSummary run_synth(const RunConfig& config, const std::filesystem::path& out_dir) {
  SynthSpec spec = config.synth_spec();
  if (config.synth_target_ceiling > 0.0) {
    spec.sigma = sigma_for_target_ceiling(spec, config.synth_target_ceiling);
  }
  PlantedDataset dataset = generate(spec);
  write_dataset(out_dir, dataset, config.hash());

  SynthSummary summary;
  summary.dir = out_dir;
  summary.sigma = spec.sigma;
  summary.oracle_ceiling_mean = mean_oracle_ceiling(dataset);
  return summary;
}

TrainSummary run_train(const RunConfig& config, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);

  ResolvedData resolved = resolve_dataset(config);
  TrainOutput output = train_model(resolved.dataset, config);

  TrainSummary summary;
  summary.checkpoint = out_dir / "model.ckpt";
  summary.log_path = out_dir / "train_log.json";
  summary.best_val_pearson = output.result.best_val_pearson;
  summary.best_epoch = output.result.best_epoch;
  summary.mean_load_entropy = output.result.mean_load_entropy;

  output.model.save(summary.checkpoint, config.hash(), config.seed);
  std::ofstream log(summary.log_path);
  if (!log) raise(ErrorCode::IoError, "cannot write " + summary.log_path.string());
  log << output.result.log_json(config.hash(), config.seed);
  return summary;
}

EvalSummary run_eval(const RunConfig& config, const std::filesystem::path& checkpoint,
                     const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);

  Model model = Model::load(checkpoint);
  ResolvedData resolved = resolve_dataset(config);
  const Dataset& dataset = resolved.dataset;
  if (model.config().d_in != dataset.d_in || model.config().out != dataset.out) {
    raise(ErrorCode::ConfigMismatch, "checkpoint dims do not match the dataset");
  }
  if (model.config().subjects < dataset.subjects) {
    raise(ErrorCode::ConfigMismatch, "checkpoint has fewer subjects than the dataset");
  }

  MetricsReport report = evaluate_model(model, dataset, config);

  EvalSummary summary;
  summary.report_path = out_dir / "metrics.json";
  summary.mean_pearson = report.mean_pearson;
  summary.mean_spearman = report.mean_spearman;
  summary.mean_r2 = report.mean_r2;
  std::ofstream out(summary.report_path);
  if (!out) raise(ErrorCode::IoError, "cannot write " + summary.report_path.string());
  out << report.to_json();
  return summary;
}

IsgSummary run_isg(const RunConfig& config, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);

  ResolvedData resolved = resolve_dataset(config);
  IsgResult result = isg_evaluate(resolved.dataset, config);

  IsgSummary summary;
  summary.report_path = out_dir / "isg.json";
  summary.per_subject = result.per_subject;
  summary.mean = result.mean;

  nlohmann::ordered_json doc;
  doc["config_hash"] = config.hash();
  doc["seed"] = config.seed;
  doc["per_subject"] = result.per_subject;
  doc["mean"] = result.mean;
  std::ofstream out(summary.report_path);
  if (!out) raise(ErrorCode::IoError, "cannot write " + summary.report_path.string());
  out << doc.dump(2) << "\n";
  return summary;
}

RoutesSummary run_routes(const RunConfig& config, const std::filesystem::path& checkpoint,
                         const std::filesystem::path& out_dir,
                         const std::vector<uint32_t>& subjects, size_t first_n_tr) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);

  Model model = Model::load(checkpoint);
  ResolvedData resolved = resolve_dataset(config);
  const Dataset& dataset = resolved.dataset;
  if (model.config().d_in != dataset.d_in) {
    raise(ErrorCode::ConfigMismatch, "checkpoint dims do not match the dataset");
  }

  std::set<uint32_t> available;
  for (const auto& ep : dataset.episodes) available.insert(ep.subject);
  std::vector<uint32_t> wanted = subjects;
  if (wanted.empty()) wanted.assign(available.begin(), available.end());
  for (uint32_t s : wanted) {
    if (!available.count(s)) {
      raise(ErrorCode::UnknownSubject, "subject " + std::to_string(s) + " not in dataset");
    }
    if (s >= model.config().subjects) {
      raise(ErrorCode::UnknownSubject,
            "subject " + std::to_string(s) + " not in the checkpoint");
    }
  }

  RoutesSummary summary;
  summary.csv_path = out_dir / "routes.csv";
  std::ofstream out(summary.csv_path);
  if (!out) raise(ErrorCode::IoError, "cannot write " + summary.csv_path.string());
  out << "subject,episode,tr";
  for (size_t e = 0; e < model.config().experts; ++e) out << ",expert_" << e;
  out << "\n";

  char buffer[64];
  for (const auto& ep : dataset.episodes) {
    if (std::find(wanted.begin(), wanted.end(), ep.subject) == wanted.end()) continue;
    size_t rows = std::min(first_n_tr, ep.features.rows());
    Matrix feats(rows, ep.features.cols());
    for (size_t t = 0; t < rows; ++t) {
      auto src = ep.features.row(t);
      std::copy(src.begin(), src.end(), feats.row(t).begin());
    }
    std::vector<GateOutput> gates;
    model.predict_window(feats, ep.subject, 0, nullptr, &gates);
    for (size_t t = 0; t < rows; ++t) {
      out << ep.subject << "," << ep.episode_id << "," << t;
      for (double w : gates[t].weights) {
        std::snprintf(buffer, sizeof(buffer), "%.9g", w);
        out << "," << buffer;
      }
      out << "\n";
      summary.rows += 1;
    }
  }
  return summary;
}

GradCheckSummary run_gradcheck(const RunConfig& config, double eps, double threshold) {
  if (config.d > 8 || config.d_in > 8 || config.experts > 4 || config.out > 6 ||
      config.hidden > 8) {
    raise(ErrorCode::InvalidSpec,
          "gradcheck requires small dims (D <= 8, E <= 4, O <= 6, H <= 8)");
  }

  GradCheckSummary summary;
  constexpr size_t kMaxAttempts = 5;
  constexpr size_t kTokens = 8;
  for (size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
    summary.attempts = attempt + 1;
    Rng rng = Rng(config.seed).derive(500 + attempt);
    Model model(config.model_config(), rng.next_u64());

    // Two windows of four tokens, two routing subjects when available.
    const size_t win = kTokens / 2;
    std::vector<Matrix> feats(2, Matrix(win, config.d_in));
    std::vector<Matrix> targets(2, Matrix(win, config.out));
    for (auto& m : feats) {
      for (double& v : m.data()) v = rng.normal();
    }
    for (auto& m : targets) {
      for (double& v : m.data()) v = rng.normal();
    }
    std::vector<WindowRef> batch;
    for (size_t w = 0; w < 2; ++w) {
      uint32_t subject = (config.subjects > 1 && w == 1) ? 1 : 0;
      batch.push_back({&feats[w], &targets[w], subject, w * win});
    }

    BatchStats stats;
    model.forward_loss(batch, config.beta, config.lambda, &stats);
    if (stats.min_topk_margin < 1e-6) continue;  // too close to a selection tie

    auto loss_fn = [&](ParamStore&) {
      return model.forward_backward(batch, config.beta, config.lambda).total;
    };
    summary.report = grad_check(loss_fn, model.params(), eps);
    summary.max_rel_error = summary.report.max_rel_error;
    summary.worst_param = summary.report.worst_param;
    summary.passed = summary.max_rel_error < threshold;
    return summary;
  }
  raise(ErrorCode::DegenerateGate,
        "could not find a batch away from Top-K ties in 5 attempts");
}

}  // namespace mind::commands
