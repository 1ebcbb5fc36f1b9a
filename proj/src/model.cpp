// SPDX-License-Identifier: Apache-2.0
#include "mind/model.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"
#include "mind/io_util.hpp"
#include "mind/tensor_ops.hpp"

namespace mind {

namespace {
constexpr char kCheckpointMagic[4] = {'M', 'N', 'D', '1'};
constexpr uint32_t kCheckpointVersion = 1;
}  // namespace

const char* router_mode_name(RouterMode mode) {
  switch (mode) {
    case RouterMode::Both: return "both";
    case RouterMode::TokenOnly: return "token";
    case RouterMode::PriorOnly: return "prior";
  }
  return "both";
}

RouterMode router_mode_from_name(const std::string& name) {
  if (name == "both") return RouterMode::Both;
  if (name == "token") return RouterMode::TokenOnly;
  if (name == "prior") return RouterMode::PriorOnly;
  raise(ErrorCode::InvalidSpec, "unknown router mode '" + name + "'");
}

void ModelConfig::validate() const {
  if (d_in == 0 || d == 0 || hidden == 0 || out == 0 || experts == 0 || subjects == 0 ||
      w_max == 0) {
    raise(ErrorCode::InvalidSpec, "model dimensions must be positive");
  }
  if (top_k < 1 || top_k > experts) {
    raise(ErrorCode::InvalidSpec, "top_k must satisfy 1 <= K <= E");
  }
}

Model::Model(const ModelConfig& config, uint64_t init_seed) : cfg_(config) {
  cfg_.validate();
  build(init_seed);
}

void Model::build(uint64_t init_seed) {
  Rng rng(init_seed);
  Rng afire_rng = rng.derive(1);
  Rng gate_rng = rng.derive(2);
  Rng expert_rng = rng.derive(3);
  afire_ = AfireParams::create(params_, cfg_.d_in, cfg_.d, cfg_.d, cfg_.w_max, afire_rng);
  router_ = RouterParams::create(params_, cfg_.d, cfg_.experts, cfg_.subjects, gate_rng);
  bank_ = ExpertBank::create(params_, cfg_.d, cfg_.hidden, cfg_.out, cfg_.experts, expert_rng);
}

void Model::bind_views() {
  afire_ = AfireParams::bind(params_, cfg_.w_max);
  router_ = RouterParams::bind(params_);
  bank_ = ExpertBank::bind(params_, cfg_.experts);
}

GateOutput Model::route_encoded(std::span<const double> encoded, uint32_t subject,
                                GateCache* cache) const {
  router_.check_subject(subject);
  std::vector<double> token_probs, prior_probs;
  const double uniform = 1.0 / static_cast<double>(cfg_.experts);
  switch (cfg_.router) {
    case RouterMode::Both:
      token_probs = token_route(encoded, subject, router_, cache);
      prior_probs = prior_route(subject, router_);
      break;
    case RouterMode::PriorOnly:
      token_probs.assign(cfg_.experts, uniform);
      prior_probs = prior_route(subject, router_);
      if (cache) cache->subject = subject;
      break;
    case RouterMode::TokenOnly: {
      // Ablated gate: token content only, no subject conditioning anywhere.
      std::vector<double> logits =
          affine(encoded, *router_.token_w.value, router_.token_b.value->row(0));
      token_probs = softmax(logits);
      prior_probs.assign(cfg_.experts, uniform);
      if (cache) {
        cache->shifted_token.assign(encoded.begin(), encoded.end());
        cache->subject = subject;
      }
      break;
    }
  }
  return combine_topk(std::move(token_probs), std::move(prior_probs), cfg_.top_k);
}

Matrix Model::predict_window(const Matrix& features, uint32_t subject, size_t start_tr,
                             EvalCounters* counters, std::vector<GateOutput>* gates) const {
  Matrix tokens = encode_features(features, afire_, start_tr);
  Matrix pred(tokens.rows(), cfg_.out);
  if (gates) gates->clear();
  for (size_t t = 0; t < tokens.rows(); ++t) {
    GateOutput gate = route_encoded(tokens.row(t), subject, nullptr);
    std::vector<double> y = fuse_experts(tokens.row(t), gate, bank_, nullptr, counters);
    std::copy(y.begin(), y.end(), pred.row(t).begin());
    if (gates) gates->push_back(std::move(gate));
  }
  return pred;
}

namespace {

struct WindowWork {
  EncodeCache encode;
  Matrix tokens;
  std::vector<GateOutput> gates;
  std::vector<GateCache> gate_caches;
  std::vector<std::vector<ExpertCache>> expert_caches;
};

}  // namespace

// Shared forward over a batch. When `work` is non-null every cache needed by
// the backward pass is retained.
static LossBreakdown run_forward(const Model& model, std::span<const WindowRef> batch,
                                 double beta, double lambda, std::vector<WindowWork>* work,
                                 Matrix* pred_out, Matrix* target_out, Matrix* scores_out,
                                 std::vector<std::vector<size_t>>* selections_out,
                                 EvalCounters* counters, BatchStats* stats) {
  if (batch.empty()) raise(ErrorCode::EmptySequence, "empty batch");
  const ModelConfig& cfg = model.config();

  size_t total_tokens = 0;
  for (const auto& w : batch) {
    if (w.features->rows() != w.targets->rows()) {
      raise(ErrorCode::InvalidShape, "window feature/target rows differ");
    }
    total_tokens += w.features->rows();
  }

  Matrix pred(total_tokens, cfg.out);
  Matrix target(total_tokens, cfg.out);
  Matrix scores(total_tokens, cfg.experts);
  std::vector<std::vector<size_t>> selections(total_tokens);
  if (work) work->resize(batch.size());
  if (stats) {
    stats->selection_counts.assign(cfg.experts, 0);
    stats->tokens = total_tokens;
  }

  size_t row = 0;
  for (size_t b = 0; b < batch.size(); ++b) {
    const WindowRef& w = batch[b];
    WindowWork* ww = work ? &(*work)[b] : nullptr;
    Matrix tokens = encode_features(*w.features, model.afire(), w.start_tr,
                                    ww ? &ww->encode : nullptr);
    const size_t rows = tokens.rows();
    if (ww) {
      ww->gates.resize(rows);
      ww->gate_caches.resize(rows);
      ww->expert_caches.resize(rows);
    }
    for (size_t t = 0; t < rows; ++t, ++row) {
      GateCache* gate_cache = ww ? &ww->gate_caches[t] : nullptr;
      GateOutput gate = model.route_encoded(tokens.row(t), w.subject, gate_cache);
      std::vector<double> y = fuse_experts(tokens.row(t), gate, model.experts(),
                                           ww ? &ww->expert_caches[t] : nullptr, counters);
      std::copy(y.begin(), y.end(), pred.row(row).begin());
      auto tgt = w.targets->row(t);
      std::copy(tgt.begin(), tgt.end(), target.row(row).begin());
      std::copy(gate.combined.begin(), gate.combined.end(), scores.row(row).begin());
      selections[row] = gate.selected;
      if (stats) {
        stats->min_topk_margin = std::min(stats->min_topk_margin, gate.topk_margin);
        for (size_t e : gate.selected) stats->selection_counts[e] += 1;
      }
      if (ww) ww->gates[t] = std::move(gate);
    }
    if (ww) ww->tokens = std::move(tokens);
  }

  LossBreakdown breakdown = total_loss(pred, target, scores, selections, cfg.top_k,
                                       *model.router().subject_bias.value, beta, lambda);
  if (pred_out) *pred_out = std::move(pred);
  if (target_out) *target_out = std::move(target);
  if (scores_out) *scores_out = std::move(scores);
  if (selections_out) *selections_out = std::move(selections);
  return breakdown;
}

LossBreakdown Model::forward_loss(std::span<const WindowRef> batch, double beta, double lambda,
                                  BatchStats* stats) const {
  return run_forward(*this, batch, beta, lambda, nullptr, nullptr, nullptr, nullptr, nullptr,
                     nullptr, stats);
}

LossBreakdown Model::forward_backward(std::span<const WindowRef> batch, double beta,
                                      double lambda, EvalCounters* counters, BatchStats* stats) {
  params_.zero_grads();

  std::vector<WindowWork> work;
  Matrix pred, target, scores;
  std::vector<std::vector<size_t>> selections;
  LossBreakdown breakdown = run_forward(*this, batch, beta, lambda, &work, &pred, &target,
                                        &scores, &selections, counters, stats);

  Matrix d_pred;
  mse_loss(pred, target, &d_pred);
  LoadBalanceResult lb = load_balance(scores, selections, cfg_.top_k, true);

  const bool token_live = cfg_.router != RouterMode::PriorOnly;
  const bool prior_live = cfg_.router != RouterMode::TokenOnly;
  const bool embed_live = cfg_.router == RouterMode::Both;

  size_t row = 0;
  std::vector<double> d_combined(cfg_.experts);
  std::vector<double> d_weights;
  for (size_t b = 0; b < batch.size(); ++b) {
    WindowWork& ww = work[b];
    const size_t rows = ww.tokens.rows();
    Matrix d_tokens(rows, cfg_.d);
    for (size_t t = 0; t < rows; ++t, ++row) {
      std::vector<double> d_token =
          fuse_backward(d_pred.row(row), ww.tokens.row(t), ww.gates[t], ww.expert_caches[t],
                        bank_, d_weights);
      auto lb_row = lb.grad_scores.row(row);
      for (size_t e = 0; e < cfg_.experts; ++e) d_combined[e] = beta * lb_row[e];
      gate_backward(d_weights, d_combined, ww.gates[t], ww.gate_caches[t], router_,
                    {d_token.data(), d_token.size()}, token_live, prior_live, embed_live);
      std::copy(d_token.begin(), d_token.end(), d_tokens.row(t).begin());
    }
    encode_backward(d_tokens, ww.encode, afire_);
  }

  // lambda * ||B||^2 term.
  Matrix& bias = *router_.subject_bias.value;
  Matrix& bias_grad = *router_.subject_bias.grad;
  for (size_t i = 0; i < bias.size(); ++i) {
    bias_grad.data()[i] += 2.0 * lambda * bias.data()[i];
  }
  return breakdown;
}

void Model::save(const std::filesystem::path& path, const std::string& config_hash,
                 uint64_t seed) const {
  nlohmann::ordered_json manifest;
  manifest["format"] = "MND1";
  manifest["version"] = kCheckpointVersion;
  manifest["config_hash"] = config_hash;
  manifest["seed"] = seed;
  manifest["model"] = {{"d_in", cfg_.d_in},       {"d", cfg_.d},
                       {"hidden", cfg_.hidden},   {"out", cfg_.out},
                       {"experts", cfg_.experts}, {"top_k", cfg_.top_k},
                       {"subjects", cfg_.subjects}, {"w_max", cfg_.w_max},
                       {"router", router_mode_name(cfg_.router)}};
  manifest["params"] = nlohmann::ordered_json::array();
  for (const auto& e : params_.entries()) {
    manifest["params"].push_back({{"name", e.name}, {"rows", e.value.rows()},
                                  {"cols", e.value.cols()}});
  }
  std::string manifest_text = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorCode::IoError, "cannot write " + path.string());
  out.write(kCheckpointMagic, 4);
  io::write_le<uint32_t>(out, kCheckpointVersion);
  io::write_le<uint64_t>(out, manifest_text.size());
  out.write(manifest_text.data(), static_cast<std::streamsize>(manifest_text.size()));
  for (const auto& e : params_.entries()) {
    for (double v : e.value.data()) io::write_le<double>(out, v);
  }
  if (!out) raise(ErrorCode::IoError, "write failed for " + path.string());
}

namespace {

nlohmann::json read_manifest(std::istream& in, const std::filesystem::path& path) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    raise(ErrorCode::ConfigMismatch, path.string() + " is not a model checkpoint");
  }
  auto version = io::read_le<uint32_t>(in);
  if (version != kCheckpointVersion) {
    raise(ErrorCode::ConfigMismatch, "unsupported checkpoint version");
  }
  auto manifest_len = io::read_le<uint64_t>(in);
  std::string manifest_text(manifest_len, '\0');
  in.read(manifest_text.data(), static_cast<std::streamsize>(manifest_len));
  if (!in) raise(ErrorCode::IoError, "truncated checkpoint manifest");
  return nlohmann::json::parse(manifest_text);
}

}  // namespace

Model Model::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::IoError, "cannot open " + path.string());
  nlohmann::json manifest = read_manifest(in, path);

  Model model;
  const auto& m = manifest.at("model");
  model.cfg_.d_in = m.at("d_in").get<size_t>();
  model.cfg_.d = m.at("d").get<size_t>();
  model.cfg_.hidden = m.at("hidden").get<size_t>();
  model.cfg_.out = m.at("out").get<size_t>();
  model.cfg_.experts = m.at("experts").get<size_t>();
  model.cfg_.top_k = m.at("top_k").get<size_t>();
  model.cfg_.subjects = m.at("subjects").get<size_t>();
  model.cfg_.w_max = m.at("w_max").get<size_t>();
  model.cfg_.router = router_mode_from_name(m.at("router").get<std::string>());
  model.cfg_.validate();

  for (const auto& p : manifest.at("params")) {
    auto name = p.at("name").get<std::string>();
    auto rows = p.at("rows").get<size_t>();
    auto cols = p.at("cols").get<size_t>();
    Matrix& value = model.params_.add(name, rows, cols);
    for (double& v : value.data()) v = io::read_le<double>(in);
  }
  model.bind_views();
  require_finite(*model.router_.subject_bias.value, "checkpoint parameters");
  return model;
}

std::string Model::checkpoint_config_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::IoError, "cannot open " + path.string());
  nlohmann::json manifest = read_manifest(in, path);
  return manifest.at("config_hash").get<std::string>();
}

Model Model::clone_with_fallback_subject() const {
  ModelConfig extended = cfg_;
  extended.subjects += 1;
  Model out(extended, 0);
  for (size_t i = 0; i < params_.entries().size(); ++i) {
    const auto& src = params_.entries()[i];
    auto& dst = out.params_.entries()[i];
    if (src.name == "gate.subject_embed") {
      const size_t d = cfg_.d;
      for (size_t s = 0; s < cfg_.subjects; ++s) {
        auto from = src.value.row(s);
        std::copy(from.begin(), from.end(), dst.value.row(s).begin());
      }
      auto fallback = dst.value.row(cfg_.subjects);
      for (size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (size_t s = 0; s < cfg_.subjects; ++s) mean += src.value.at(s, j);
        fallback[j] = mean / static_cast<double>(cfg_.subjects);
      }
    } else if (src.name == "gate.subject_bias") {
      for (size_t s = 0; s < cfg_.subjects; ++s) {
        auto from = src.value.row(s);
        std::copy(from.begin(), from.end(), dst.value.row(s).begin());
      }
      // fallback prior row stays zero: prior = softmax(global logits)
    } else {
      dst.value.data() = src.value.data();
    }
  }
  return out;
}

std::vector<std::vector<double>> Model::snapshot_values() const {
  std::vector<std::vector<double>> snap;
  snap.reserve(params_.entries().size());
  for (const auto& e : params_.entries()) snap.push_back(e.value.data());
  return snap;
}

void Model::restore_values(const std::vector<std::vector<double>>& snapshot) {
  if (snapshot.size() != params_.entries().size()) {
    raise(ErrorCode::ConfigMismatch, "snapshot does not match parameter count");
  }
  for (size_t i = 0; i < snapshot.size(); ++i) {
    params_.entries()[i].value.data() = snapshot[i];
  }
}

}  // namespace mind
