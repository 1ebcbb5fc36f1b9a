// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mind/config.hpp"
#include "mind/grad_check.hpp"
#include "mind/trainer.hpp"

namespace mind::commands {

// Dataset resolution shared by every data-consuming command: load
// config.data.dir when set, otherwise generate from the synth.* spec
// (calibrating sigma when synth.target_ceiling is set).
struct ResolvedData {
  Dataset dataset;
  std::optional<PlantedDataset> planted;  // present for generated data
  double sigma_used = 0.0;
};

ResolvedData resolve_dataset(const RunConfig& config);

struct SynthSummary {
  std::filesystem::path dir;
  double oracle_ceiling_mean = 0.0;
  double sigma = 0.0;
};

SynthSummary run_synth(const RunConfig& config, const std::filesystem::path& out_dir);

struct TrainSummary {
  std::filesystem::path checkpoint;
  std::filesystem::path log_path;
  double best_val_pearson = 0.0;
  size_t best_epoch = 0;
  double mean_load_entropy = 0.0;
};

TrainSummary run_train(const RunConfig& config, const std::filesystem::path& out_dir);

struct EvalSummary {
  std::filesystem::path report_path;
  double mean_pearson = 0.0;
  double mean_spearman = 0.0;
  double mean_r2 = 0.0;
};

EvalSummary run_eval(const RunConfig& config, const std::filesystem::path& checkpoint,
                     const std::filesystem::path& out_dir);

struct IsgSummary {
  std::filesystem::path report_path;
  std::vector<double> per_subject;
  double mean = 0.0;
};

IsgSummary run_isg(const RunConfig& config, const std::filesystem::path& out_dir);

struct RoutesSummary {
  std::filesystem::path csv_path;
  size_t rows = 0;
};

RoutesSummary run_routes(const RunConfig& config, const std::filesystem::path& checkpoint,
                         const std::filesystem::path& out_dir,
                         const std::vector<uint32_t>& subjects, size_t first_n_tr);

struct GradCheckSummary {
  bool passed = false;
  double max_rel_error = 0.0;
  std::string worst_param;
  size_t attempts = 1;
  GradCheckReport report;
};

// Central-difference check of the full training objective on a small model
// and random batch. Retries with a reseeded batch when the Top-K margin is
// too small to difference safely.
GradCheckSummary run_gradcheck(const RunConfig& config, double eps = 1e-5,
                               double threshold = 1e-4);

}  // namespace mind::commands
