// SPDX-License-Identifier: Apache-2.0
//
// Python bindings for the core operations: numeric primitives, routing,
// metrics, TR binning / windowing, and the config-driven run entry points.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mind/commands.hpp"
#include "mind/metrics.hpp"
#include "mind/objective.hpp"
#include "mind/sadgate.hpp"
#include "mind/tensor_ops.hpp"

namespace py = pybind11;

namespace {

std::vector<double> to_vector(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
  if (arr.ndim() != 1) throw py::value_error("expected a 1-D array");
  return {arr.data(), arr.data() + arr.shape(0)};
}

mind::Matrix to_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
  if (arr.ndim() != 2) throw py::value_error("expected a 2-D array");
  std::vector<double> data(arr.data(), arr.data() + arr.size());
  return {static_cast<size_t>(arr.shape(0)), static_cast<size_t>(arr.shape(1)), std::move(data)};
}

py::array_t<double> from_vector(const std::vector<double>& v) {
  py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::array_t<double> from_matrix(const mind::Matrix& m) {
  py::array_t<double> out({static_cast<py::ssize_t>(m.rows()), static_cast<py::ssize_t>(m.cols())});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

mind::RunConfig config_from_text(const std::string& text) {
  mind::RunConfig config = mind::parse_config_text(text);
  mind::apply_env_overrides(config);
  config.validate();
  return config;
}

}  // namespace

PYBIND11_MODULE(mindcore, m) {
  m.doc() = "Sparse mixture-of-experts fMRI encoder: core operations";

  py::register_exception<mind::Error>(m, "MindError");

  m.def("softmax", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& v) {
    return from_vector(mind::softmax(to_vector(v)));
  });
  m.def("gelu", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& v) {
    return from_vector(mind::gelu(std::span<const double>(to_vector(v))));
  });
  m.def(
      "topk_gate",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& token_probs,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& prior_probs,
         size_t k) {
        mind::GateOutput gate =
            mind::combine_topk(to_vector(token_probs), to_vector(prior_probs), k);
        return py::make_tuple(from_vector(gate.weights), gate.selected,
                              from_vector(gate.combined));
      },
      py::arg("token_probs"), py::arg("prior_probs"), py::arg("k"),
      "Combine router outputs, keep the top K, renormalize. Returns (weights, selected, combined).");
  m.def("topk_normalize",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& scores, size_t k) {
          std::vector<double> weights;
          std::vector<size_t> selected;
          mind::topk_normalize(to_vector(scores), k, weights, selected);
          return py::make_tuple(from_vector(weights), selected);
        });

  m.def("pearson",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& b) {
          return mind::pearson(to_vector(a), to_vector(b));
        });
  m.def("spearman",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& b) {
          return mind::spearman(to_vector(a), to_vector(b));
        });
  m.def("r_squared",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& pred,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& target) {
          return mind::r_squared(to_vector(pred), to_vector(target));
        });
  m.def("average_ranks",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& v) {
          return from_vector(mind::average_ranks(to_vector(v)));
        });

  m.def(
      "bin_to_tr",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& frames,
         double rate_hz, double tr_seconds, size_t n_tr) {
        mind::FeatureSequence seq;
        seq.rate_hz = rate_hz;
        seq.frames = to_matrix(frames);
        return from_matrix(mind::bin_to_tr(seq, tr_seconds, n_tr));
      },
      py::arg("frames"), py::arg("rate_hz"), py::arg("tr_seconds"), py::arg("n_tr"));
  m.def("window_starts", &mind::window_starts, py::arg("t"), py::arg("win"), py::arg("stride"));

  m.def(
      "onecycle_lr",
      [](size_t step, double peak_lr, double div, double final_div, double warmup,
         size_t total_steps) {
        mind::OneCycleSchedule s{peak_lr, div, final_div, warmup, total_steps};
        return s.lr(step);
      },
      py::arg("step"), py::arg("peak_lr"), py::arg("div") = 25.0, py::arg("final_div") = 1e4,
      py::arg("warmup") = 0.3, py::arg("total_steps") = 100);

  m.def("config_hash", [](const std::string& text) { return config_from_text(text).hash(); });

  m.def(
      "run_synth",
      [](const std::string& config_text, const std::filesystem::path& out_dir) {
        auto summary = mind::commands::run_synth(config_from_text(config_text), out_dir);
        py::dict d;
        d["dir"] = summary.dir;
        d["sigma"] = summary.sigma;
        d["oracle_ceiling_mean"] = summary.oracle_ceiling_mean;
        return d;
      },
      py::arg("config_text"), py::arg("out_dir"));
  m.def(
      "run_train",
      [](const std::string& config_text, const std::filesystem::path& out_dir) {
        auto summary = mind::commands::run_train(config_from_text(config_text), out_dir);
        py::dict d;
        d["checkpoint"] = summary.checkpoint;
        d["log"] = summary.log_path;
        d["best_val_pearson"] = summary.best_val_pearson;
        d["best_epoch"] = summary.best_epoch;
        d["mean_load_entropy"] = summary.mean_load_entropy;
        return d;
      },
      py::arg("config_text"), py::arg("out_dir"));
  m.def(
      "run_eval",
      [](const std::string& config_text, const std::filesystem::path& checkpoint,
         const std::filesystem::path& out_dir) {
        auto summary = mind::commands::run_eval(config_from_text(config_text), checkpoint, out_dir);
        py::dict d;
        d["report"] = summary.report_path;
        d["mean_pearson"] = summary.mean_pearson;
        d["mean_spearman"] = summary.mean_spearman;
        d["mean_r_squared"] = summary.mean_r2;
        return d;
      },
      py::arg("config_text"), py::arg("checkpoint"), py::arg("out_dir"));
  m.def(
      "run_isg",
      [](const std::string& config_text, const std::filesystem::path& out_dir) {
        auto summary = mind::commands::run_isg(config_from_text(config_text), out_dir);
        py::dict d;
        d["report"] = summary.report_path;
        d["per_subject"] = summary.per_subject;
        d["mean"] = summary.mean;
        return d;
      },
      py::arg("config_text"), py::arg("out_dir"));
  m.def(
      "run_gradcheck",
      [](const std::string& config_text) {
        auto summary = mind::commands::run_gradcheck(config_from_text(config_text));
        py::dict d;
        d["passed"] = summary.passed;
        d["max_rel_error"] = summary.max_rel_error;
        d["worst_param"] = summary.worst_param;
        d["attempts"] = summary.attempts;
        return d;
      },
      py::arg("config_text"));
}
