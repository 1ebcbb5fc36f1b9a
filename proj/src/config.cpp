// SPDX-License-Identifier: Apache-2.0
#include "mind/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace mind {

namespace {

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

size_t parse_count(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    long long n = std::stoll(v, &pos);
    if (pos != v.size() || n < 0) throw std::invalid_argument(v);
    return static_cast<size_t>(n);
  } catch (const std::exception&) {
    raise(ErrorCode::InvalidSpec, "config key " + key + " expects a count, got '" + v + "'");
  }
}

uint64_t parse_u64(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    unsigned long long n = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<uint64_t>(n);
  } catch (const std::exception&) {
    raise(ErrorCode::InvalidSpec, "config key " + key + " expects a u64, got '" + v + "'");
  }
}

double parse_real(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    raise(ErrorCode::InvalidSpec, "config key " + key + " expects a real, got '" + v + "'");
  }
}

std::string format_real(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

const std::map<std::string, Field>& field_table() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    auto count_field = [&t](const std::string& key, size_t RunConfig::* member) {
      t[key] = {[key, member](RunConfig& c, const std::string& v) { c.*member = parse_count(v, key); },
                [member](const RunConfig& c) { return std::to_string(c.*member); }};
    };
    auto real_field = [&t](const std::string& key, double RunConfig::* member) {
      t[key] = {[key, member](RunConfig& c, const std::string& v) { c.*member = parse_real(v, key); },
                [member](const RunConfig& c) { return format_real(c.*member); }};
    };
    count_field("dims.d_in", &RunConfig::d_in);
    count_field("dims.d", &RunConfig::d);
    count_field("dims.hidden", &RunConfig::hidden);
    count_field("dims.out", &RunConfig::out);
    count_field("dims.experts", &RunConfig::experts);
    count_field("dims.top_k", &RunConfig::top_k);
    count_field("dims.subjects", &RunConfig::subjects);
    count_field("dims.w_max", &RunConfig::w_max);
    t["model.router"] = {
        [](RunConfig& c, const std::string& v) { c.router = router_mode_from_name(v); },
        [](const RunConfig& c) { return router_mode_name(c.router); }};
    count_field("train.epochs", &RunConfig::epochs);
    count_field("train.batch_size", &RunConfig::batch_size);
    real_field("train.peak_lr", &RunConfig::peak_lr);
    real_field("train.div", &RunConfig::div);
    real_field("train.final_div", &RunConfig::final_div);
    real_field("train.warmup", &RunConfig::warmup);
    real_field("train.beta", &RunConfig::beta);
    real_field("train.lambda", &RunConfig::lambda);
    real_field("train.clip", &RunConfig::clip);
    real_field("train.weight_decay", &RunConfig::weight_decay);
    t["train.seed"] = {
        [](RunConfig& c, const std::string& v) { c.seed = parse_u64(v, "train.seed"); },
        [](const RunConfig& c) { return std::to_string(c.seed); }};
    t["data.dir"] = {[](RunConfig& c, const std::string& v) { c.data_dir = v; },
                     [](const RunConfig& c) { return c.data_dir; }};
    real_field("data.tr_seconds", &RunConfig::tr_seconds);
    count_field("data.win", &RunConfig::win);
    count_field("data.stride", &RunConfig::stride);
    real_field("data.split_ratio", &RunConfig::split_ratio);
    t["synth.mode"] = {
        [](RunConfig& c, const std::string& v) { c.synth_mode = heterogeneity_mode_from_name(v); },
        [](const RunConfig& c) { return heterogeneity_mode_name(c.synth_mode); }};
    real_field("synth.sigma", &RunConfig::synth_sigma);
    real_field("synth.target_ceiling", &RunConfig::synth_target_ceiling);
    count_field("synth.episodes", &RunConfig::synth_episodes);
    count_field("synth.tr_per_episode", &RunConfig::synth_tr_per_episode);
    count_field("synth.teacher_experts", &RunConfig::synth_teacher_experts);
    count_field("synth.teacher_hidden", &RunConfig::synth_teacher_hidden);
    real_field("synth.token_gate_scale", &RunConfig::synth_token_gate_scale);
    real_field("synth.ar_coeff", &RunConfig::synth_ar_coeff);
    return t;
  }();
  return table;
}

}  // namespace

void RunConfig::validate() const {
  model_config().validate();
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) {
    raise(ErrorCode::InvalidSpec, "data.split_ratio must be in (0,1)");
  }
  if (win == 0 || stride == 0) raise(ErrorCode::InvalidSpec, "data.win and data.stride must be >= 1");
  if (epochs == 0 || batch_size == 0) {
    raise(ErrorCode::InvalidSpec, "train.epochs and train.batch_size must be >= 1");
  }
  if (peak_lr <= 0.0 || div <= 0.0 || final_div <= 0.0) {
    raise(ErrorCode::InvalidSpec, "learning-rate settings must be positive");
  }
  if (!(warmup > 0.0 && warmup < 1.0)) {
    raise(ErrorCode::InvalidSpec, "train.warmup must be in (0,1)");
  }
  if (beta < 0.0 || lambda < 0.0 || clip <= 0.0 || weight_decay < 0.0) {
    raise(ErrorCode::InvalidSpec, "train.beta/lambda/clip/weight_decay out of range");
  }
  if (tr_seconds <= 0.0) raise(ErrorCode::InvalidSpec, "data.tr_seconds must be positive");
}

ModelConfig RunConfig::model_config() const {
  ModelConfig cfg;
  cfg.d_in = d_in;
  cfg.d = d;
  cfg.hidden = hidden;
  cfg.out = out;
  cfg.experts = experts;
  cfg.top_k = top_k;
  cfg.subjects = subjects;
  cfg.w_max = w_max;
  cfg.router = router;
  return cfg;
}

SynthSpec RunConfig::synth_spec() const {
  SynthSpec spec;
  spec.d = d_in;
  spec.out = out;
  spec.teacher_experts = synth_teacher_experts;
  spec.teacher_hidden = synth_teacher_hidden;
  spec.subjects = subjects;
  spec.episodes = synth_episodes;
  spec.tr_per_episode = synth_tr_per_episode;
  spec.sigma = synth_sigma;
  spec.mode = synth_mode;
  spec.token_gate_scale = synth_token_gate_scale;
  spec.ar_coeff = synth_ar_coeff;
  spec.tr_seconds = tr_seconds;
  spec.seed = seed;
  return spec;
}

std::string RunConfig::canonical_text() const {
  std::string text;
  for (const auto& [key, field] : field_table()) {
    text += key + " = " + field.get(*this) + "\n";
  }
  return text;
}

std::string RunConfig::hash() const {
  // FNV-1a, 64-bit.
  uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : canonical_text()) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = digits[h & 0xF];
    h >>= 4;
  }
  return out;
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      raise(ErrorCode::InvalidSpec, "config line " + std::to_string(line_no) + " has no '='");
    }
    std::string key = trim(stripped.substr(0, eq));
    std::string value = trim(stripped.substr(eq + 1));
    auto it = field_table().find(key);
    if (it == field_table().end()) {
      raise(ErrorCode::InvalidSpec, "unknown config key '" + key + "'");
    }
    it->second.set(config, value);
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::IoError, "cannot open config " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  RunConfig config = parse_config_text(buffer.str());
  apply_env_overrides(config);
  return config;
}

void apply_env_overrides(RunConfig& config) {
  for (const auto& [key, field] : field_table()) {
    std::string env_name = "MIND_";
    for (char c : key) {
      env_name += (c == '.') ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    }
    if (const char* value = std::getenv(env_name.c_str())) {
      field.set(config, value);
    }
  }
}

}  // namespace mind
