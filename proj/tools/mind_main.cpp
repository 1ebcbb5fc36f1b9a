// SPDX-License-Identifier: Apache-2.0
//
// mind: subject-aware sparse mixture-of-experts encoder, command line front
// end. Subcommands: synth, train, eval, isg, routes, gradcheck.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mind/commands.hpp"

namespace {

mind::RunConfig resolve_config(const std::string& config_path,
                               const std::optional<uint64_t>& seed_override) {
  mind::RunConfig config;
  if (!config_path.empty()) {
    config = mind::load_config(config_path);
  } else {
    mind::apply_env_overrides(config);
  }
  if (seed_override) config.seed = *seed_override;
  config.validate();
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Subject-aware sparse mixture-of-experts encoder"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::optional<uint64_t> seed_override;

  auto add_common = [&](CLI::App* cmd, bool with_out = true) {
    cmd->add_option("--config", config_path, "Run configuration file");
    cmd->add_option("--seed", seed_override, "Override train.seed");
    if (with_out) cmd->add_option("--out", out_dir, "Output directory");
  };

  CLI::App* synth = app.add_subcommand("synth", "Generate a planted synthetic dataset");
  add_common(synth);

  CLI::App* train = app.add_subcommand("train", "Train a model and write the best checkpoint");
  add_common(train);

  std::string checkpoint;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on validation TRs");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();

  CLI::App* isg = app.add_subcommand("isg", "Leave-one-subject-out generalization");
  add_common(isg);

  std::vector<uint32_t> route_subjects;
  size_t first_n_tr = 100;
  CLI::App* routes = app.add_subcommand("routes", "Export time-resolved routing weights");
  add_common(routes);
  routes->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  routes->add_option("--subjects", route_subjects, "Subjects to export (default: all)");
  routes->add_option("--first-n-tr", first_n_tr, "TRs per episode to export");

  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "Finite-difference check of the training objective");
  add_common(gradcheck, false);

  CLI11_PARSE(app, argc, argv);

  try {
    mind::RunConfig config = resolve_config(config_path, seed_override);

    if (synth->parsed()) {
      auto summary = mind::commands::run_synth(config, out_dir);
      std::printf("wrote dataset to %s\n", summary.dir.c_str());
      std::printf("sigma = %.6g, oracle ceiling (mean parcel r) = %.4f\n", summary.sigma,
                  summary.oracle_ceiling_mean);
    } else if (train->parsed()) {
      auto summary = mind::commands::run_train(config, out_dir);
      std::printf("best val pearson = %.4f (epoch %zu)\n", summary.best_val_pearson,
                  summary.best_epoch);
      std::printf("checkpoint: %s\nlog: %s\n", summary.checkpoint.c_str(),
                  summary.log_path.c_str());
    } else if (eval->parsed()) {
      auto summary = mind::commands::run_eval(config, checkpoint, out_dir);
      std::printf("pearson %.4f  spearman %.4f  r2 %.4f\n", summary.mean_pearson,
                  summary.mean_spearman, summary.mean_r2);
      std::printf("report: %s\n", summary.report_path.c_str());
    } else if (isg->parsed()) {
      auto summary = mind::commands::run_isg(config, out_dir);
      for (size_t s = 0; s < summary.per_subject.size(); ++s) {
        std::printf("held-out subject %zu: r = %.4f\n", s, summary.per_subject[s]);
      }
      std::printf("mean ISG r = %.4f\nreport: %s\n", summary.mean,
                  summary.report_path.c_str());
    } else if (routes->parsed()) {
      auto summary =
          mind::commands::run_routes(config, checkpoint, out_dir, route_subjects, first_n_tr);
      std::printf("wrote %zu route rows to %s\n", summary.rows, summary.csv_path.c_str());
    } else if (gradcheck->parsed()) {
      auto summary = mind::commands::run_gradcheck(config);
      for (const auto& [name, err] : summary.report.per_param) {
        std::printf("%-22s max rel err %.3e\n", name.c_str(), err);
      }
      std::printf("%s: max relative error %.3e (worst: %s, attempts: %zu)\n",
                  summary.passed ? "PASS" : "FAIL", summary.max_rel_error,
                  summary.worst_param.c_str(), summary.attempts);
      if (!summary.passed) return 1;
    }
  } catch (const mind::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
