// SPDX-License-Identifier: Apache-2.0
#include "mind/synthgen.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "mind/metrics.hpp"
#include "mind/tensor_ops.hpp"

namespace mind {

namespace {

constexpr double kLogFloor = -30.0;
constexpr double kMixtureLogitScale = 2.5;

std::vector<double> clamped_log(std::span<const double> mixture) {
  std::vector<double> out(mixture.size());
  for (size_t i = 0; i < mixture.size(); ++i) {
    out[i] = mixture[i] > 0.0 ? std::max(std::log(mixture[i]), kLogFloor) : kLogFloor;
  }
  return out;
}

}  // namespace

const char* heterogeneity_mode_name(HeterogeneityMode mode) {
  switch (mode) {
    case HeterogeneityMode::Shared: return "shared";
    case HeterogeneityMode::Disjoint: return "disjoint";
    case HeterogeneityMode::Mixed: return "mixed";
    case HeterogeneityMode::TokenModulated: return "token_modulated";
  }
  return "shared";
}

HeterogeneityMode heterogeneity_mode_from_name(const std::string& name) {
  if (name == "shared") return HeterogeneityMode::Shared;
  if (name == "disjoint") return HeterogeneityMode::Disjoint;
  if (name == "mixed") return HeterogeneityMode::Mixed;
  if (name == "token_modulated") return HeterogeneityMode::TokenModulated;
  raise(ErrorCode::InvalidSpec, "unknown heterogeneity mode '" + name + "'");
}

void SynthSpec::validate() const {
  if (d == 0 || out == 0 || teacher_experts == 0 || teacher_hidden == 0 || subjects == 0 ||
      episodes == 0 || tr_per_episode == 0) {
    raise(ErrorCode::InvalidSpec, "synth dimensions must be positive");
  }
  if (sigma < 0.0) raise(ErrorCode::InvalidSpec, "sigma must be >= 0");
  if (ar_coeff < 0.0 || ar_coeff >= 1.0) raise(ErrorCode::InvalidSpec, "ar_coeff must be in [0,1)");
  if (tr_seconds <= 0.0) raise(ErrorCode::InvalidSpec, "tr_seconds must be positive");
}

Matrix PlantedTeacher::encode(const Matrix& raw_tokens) const {
  return encode_features(raw_tokens, afire, 0);
}

std::vector<double> PlantedTeacher::gate_weights(std::span<const double> encoded,
                                                 size_t subject) const {
  if (subject >= spec.subjects) raise(ErrorCode::UnknownSubject, "teacher subject out of range");
  if (!has_token_gate()) {
    auto row = mixtures.row(subject);
    return {row.begin(), row.end()};
  }
  std::vector<double> logits = clamped_log(mixtures.row(subject));
  for (size_t e = 0; e < spec.teacher_experts; ++e) {
    double acc = 0.0;
    auto grow = gate_w.row(e);
    for (size_t j = 0; j < encoded.size(); ++j) acc += grow[j] * encoded[j];
    logits[e] += spec.token_gate_scale * acc;
  }
  return softmax(logits);
}

std::vector<double> PlantedTeacher::predict(std::span<const double> encoded,
                                            size_t subject) const {
  std::vector<double> weights = gate_weights(encoded, subject);
  std::vector<double> out(spec.out, 0.0);
  for (size_t e = 0; e < spec.teacher_experts; ++e) {
    if (weights[e] == 0.0) continue;
    std::vector<double> y = expert_forward(encoded, e, bank);
    for (size_t o = 0; o < out.size(); ++o) out[o] += weights[e] * y[o];
  }
  return out;
}

Matrix PlantedTeacher::predict_episode(const Matrix& raw_tokens, size_t subject) const {
  Matrix encoded = encode(raw_tokens);
  Matrix out(raw_tokens.rows(), spec.out);
  for (size_t t = 0; t < encoded.rows(); ++t) {
    std::vector<double> y = predict(encoded.row(t), subject);
    std::copy(y.begin(), y.end(), out.row(t).begin());
  }
  return out;
}

PlantedDataset generate(const SynthSpec& spec) {
  spec.validate();
  Rng root(spec.seed);

  PlantedDataset dataset;
  dataset.seed = spec.seed;
  PlantedTeacher& teacher = dataset.teacher;
  teacher.spec = spec;

  size_t w_max = std::max<size_t>(spec.tr_per_episode, 512);
  teacher.afire = AfireParams::create_identity(teacher.params, spec.d, w_max);
  Rng expert_rng = root.derive(1);
  teacher.bank = ExpertBank::create(teacher.params, spec.d, spec.teacher_hidden, spec.out,
                                    spec.teacher_experts, expert_rng);

  // Subject mixtures.
  Rng mix_rng = root.derive(2);
  teacher.mixtures = Matrix(spec.subjects, spec.teacher_experts);
  // Mixtures are drawn concentrated (dominant expert at >= 0.7 mass) so
  // subject preferences are informative rather than near-flat.
  auto draw_mixture = [&](std::span<double> row) {
    std::vector<double> m;
    for (int attempt = 0; attempt < 20; ++attempt) {
      std::vector<double> logits(row.size());
      for (double& v : logits) v = kMixtureLogitScale * mix_rng.normal();
      m = softmax(logits);
      if (*std::max_element(m.begin(), m.end()) >= 0.7) break;
    }
    std::copy(m.begin(), m.end(), row.begin());
  };
  switch (spec.mode) {
    case HeterogeneityMode::Shared:
    case HeterogeneityMode::TokenModulated: {
      std::vector<double> shared(spec.teacher_experts);
      draw_mixture(shared);
      for (size_t s = 0; s < spec.subjects; ++s) {
        std::copy(shared.begin(), shared.end(), teacher.mixtures.row(s).begin());
      }
      break;
    }
    case HeterogeneityMode::Disjoint:
      for (size_t s = 0; s < spec.subjects; ++s) {
        teacher.mixtures.at(s, s % spec.teacher_experts) = 1.0;
      }
      break;
    case HeterogeneityMode::Mixed:
      // Guaranteed heterogeneity: subject s is dominated by expert s mod E*
      // with 0.7..0.9 of the mass; the remainder is split at random.
      for (size_t s = 0; s < spec.subjects; ++s) {
        size_t dominant = s % spec.teacher_experts;
        auto row = teacher.mixtures.row(s);
        if (spec.teacher_experts == 1) {
          row[0] = 1.0;
          continue;
        }
        double mass = 0.7 + 0.2 * mix_rng.next_double();
        std::vector<double> minors(spec.teacher_experts);
        double minor_sum = 0.0;
        for (size_t e = 0; e < spec.teacher_experts; ++e) {
          minors[e] = (e == dominant) ? 0.0 : std::exp(mix_rng.normal());
          minor_sum += minors[e];
        }
        for (size_t e = 0; e < spec.teacher_experts; ++e) {
          row[e] = (e == dominant) ? mass : (1.0 - mass) * minors[e] / minor_sum;
        }
      }
      break;
  }

  // Token gate.
  teacher.gate_w = Matrix(spec.teacher_experts, spec.d);
  if (teacher.has_token_gate()) {
    Rng gate_rng = root.derive(3);
    double std = 1.0 / std::sqrt(static_cast<double>(spec.d));
    for (double& v : teacher.gate_w.data()) v = gate_rng.normal(0.0, std);
  }

  // Episodes.
  dataset.data.tr_seconds = spec.tr_seconds;
  dataset.data.subjects = spec.subjects;
  dataset.data.d_in = spec.d;
  dataset.data.out = spec.out;
  for (size_t s = 0; s < spec.subjects; ++s) {
    for (size_t ep = 0; ep < spec.episodes; ++ep) {
      Rng ep_rng = root.derive(1000 + s * 977 + ep);
      EpisodeData episode;
      episode.subject = static_cast<uint32_t>(s);
      episode.episode_id = "ep" + std::to_string(ep);

      Matrix tokens(spec.tr_per_episode, spec.d);
      double carry_scale = std::sqrt(1.0 - spec.ar_coeff * spec.ar_coeff);
      for (size_t t = 0; t < spec.tr_per_episode; ++t) {
        for (size_t j = 0; j < spec.d; ++j) {
          double draw = ep_rng.normal();
          tokens.at(t, j) = (t == 0 || spec.ar_coeff == 0.0)
                                ? draw
                                : spec.ar_coeff * tokens.at(t - 1, j) + carry_scale * draw;
        }
      }

      episode.clean = teacher.predict_episode(tokens, s);
      episode.responses = episode.clean;
      if (spec.sigma > 0.0) {
        for (double& v : episode.responses.data()) v += spec.sigma * ep_rng.normal();
      }
      episode.features = std::move(tokens);
      dataset.data.episodes.push_back(std::move(episode));
    }
  }
  return dataset;
}

std::vector<double> oracle_ceiling(const PlantedDataset& dataset) {
  const size_t parcels = dataset.data.out;
  size_t total = 0;
  for (const auto& ep : dataset.data.episodes) total += ep.responses.rows();
  std::vector<double> clean_col(total), noisy_col(total);
  std::vector<double> ceiling(parcels);
  for (size_t o = 0; o < parcels; ++o) {
    size_t row = 0;
    for (const auto& ep : dataset.data.episodes) {
      for (size_t t = 0; t < ep.responses.rows(); ++t, ++row) {
        clean_col[row] = ep.clean.at(t, o);
        noisy_col[row] = ep.responses.at(t, o);
      }
    }
    ceiling[o] = pearson(clean_col, noisy_col);
  }
  return ceiling;
}

double mean_oracle_ceiling(const PlantedDataset& dataset) {
  std::vector<double> ceiling = oracle_ceiling(dataset);
  double acc = 0.0;
  for (double v : ceiling) acc += v;
  return acc / static_cast<double>(ceiling.size());
}

double sigma_for_target_ceiling(const SynthSpec& spec, double target_r) {
  if (!(target_r > 0.0 && target_r <= 1.0)) {
    raise(ErrorCode::InvalidSpec, "target ceiling must be in (0, 1]");
  }
  if (target_r >= 1.0) return 0.0;
  SynthSpec noiseless = spec;
  noiseless.sigma = 0.0;
  PlantedDataset dataset = generate(noiseless);

  // Per-parcel signal variances of the noiseless teacher output.
  std::vector<double> variances(dataset.data.out, 0.0);
  size_t n = 0;
  for (const auto& ep : dataset.data.episodes) n += ep.clean.rows();
  for (size_t o = 0; o < dataset.data.out; ++o) {
    double mean = 0.0;
    for (const auto& ep : dataset.data.episodes) {
      for (size_t t = 0; t < ep.clean.rows(); ++t) mean += ep.clean.at(t, o);
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const auto& ep : dataset.data.episodes) {
      for (size_t t = 0; t < ep.clean.rows(); ++t) {
        double d = ep.clean.at(t, o) - mean;
        var += d * d;
      }
    }
    variances[o] = var / static_cast<double>(n);
  }

  // Expected ceiling at noise sigma: mean over parcels of
  // sqrt(v / (v + sigma^2)); monotone in sigma, solved by bisection.
  auto expected = [&](double sigma) {
    double acc = 0.0;
    for (double v : variances) acc += std::sqrt(v / (v + sigma * sigma));
    return acc / static_cast<double>(variances.size());
  };
  double lo = 0.0, hi = 1.0;
  while (expected(hi) > target_r) hi *= 2.0;
  for (int iter = 0; iter < 200; ++iter) {
    double mid = 0.5 * (lo + hi);
    if (expected(mid) > target_r) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

Model teacher_to_model(const PlantedTeacher& teacher, size_t top_k) {
  const SynthSpec& spec = teacher.spec;
  ModelConfig cfg;
  cfg.d_in = spec.d;
  cfg.d = spec.d;
  cfg.hidden = spec.teacher_hidden;
  cfg.out = spec.out;
  cfg.experts = spec.teacher_experts;
  cfg.top_k = top_k;
  cfg.subjects = spec.subjects;
  cfg.w_max = teacher.afire.w_max();
  Model model(cfg, 0);

  ParamStore& params = model.params();
  for (const auto& src : teacher.params.entries()) {
    params.param(src.name).data() = src.value.data();
  }
  // Token path: gate weights when present, otherwise inert uniform logits.
  Matrix& token_w = *model.router().token_w.value;
  token_w.fill(0.0);
  if (teacher.has_token_gate()) {
    for (size_t e = 0; e < spec.teacher_experts; ++e) {
      for (size_t j = 0; j < spec.d; ++j) {
        token_w.at(e, j) = spec.token_gate_scale * teacher.gate_w.at(e, j);
      }
    }
  }
  model.router().token_b.value->fill(0.0);
  model.router().subject_embed.value->fill(0.0);
  model.router().prior_logits.value->fill(0.0);
  Matrix& bias = *model.router().subject_bias.value;
  for (size_t s = 0; s < spec.subjects; ++s) {
    std::vector<double> logits = clamped_log(teacher.mixtures.row(s));
    std::copy(logits.begin(), logits.end(), bias.row(s).begin());
  }
  return model;
}

std::vector<size_t> match_experts(const Model& student, const PlantedTeacher& teacher,
                                  uint64_t probe_seed, size_t probe_tokens) {
  const size_t n_student = student.config().experts;
  const size_t n_teacher = teacher.spec.teacher_experts;
  if (n_teacher > 20) raise(ErrorCode::InvalidSpec, "expert matching supports up to 20 experts");
  if (student.config().d_in != teacher.spec.d) {
    raise(ErrorCode::ConfigMismatch, "student input dim does not match teacher");
  }

  Rng rng(probe_seed);
  Matrix probes(probe_tokens, teacher.spec.d);
  for (double& v : probes.data()) v = rng.normal();

  Matrix student_tokens = encode_features(probes, student.afire(), 0);
  Matrix teacher_tokens = teacher.encode(probes);

  auto flatten_outputs = [probe_tokens](const Matrix& tokens, auto&& forward, size_t experts) {
    std::vector<std::vector<double>> flat(experts);
    for (size_t e = 0; e < experts; ++e) {
      flat[e].reserve(probe_tokens);
      for (size_t t = 0; t < tokens.rows(); ++t) {
        std::vector<double> y = forward(tokens.row(t), e);
        flat[e].insert(flat[e].end(), y.begin(), y.end());
      }
    }
    return flat;
  };
  auto student_flat = flatten_outputs(
      student_tokens,
      [&](std::span<const double> z, size_t e) { return expert_forward(z, e, student.experts()); },
      n_student);
  auto teacher_flat = flatten_outputs(
      teacher_tokens,
      [&](std::span<const double> z, size_t e) { return expert_forward(z, e, teacher.bank); },
      n_teacher);

  // Similarity of expert output fields, as functions of the same raw input.
  std::vector<std::vector<double>> sim(n_student, std::vector<double>(n_teacher));
  for (size_t e = 0; e < n_student; ++e) {
    for (size_t j = 0; j < n_teacher; ++j) {
      sim[e][j] = pearson(student_flat[e], teacher_flat[j]);
    }
  }

  // Exact assignment via DP over subsets of teacher experts.
  const size_t masks = size_t{1} << n_teacher;
  const double neg_inf = -1e18;
  std::vector<std::vector<double>> best(n_student + 1, std::vector<double>(masks, neg_inf));
  std::vector<std::vector<size_t>> choice(n_student + 1, std::vector<size_t>(masks, n_teacher));
  best[0][0] = 0.0;
  for (size_t e = 0; e < n_student; ++e) {
    for (size_t mask = 0; mask < masks; ++mask) {
      if (best[e][mask] == neg_inf) continue;
      // Student expert e left unmatched.
      if (best[e][mask] > best[e + 1][mask]) {
        best[e + 1][mask] = best[e][mask];
        choice[e + 1][mask] = n_teacher;
      }
      for (size_t j = 0; j < n_teacher; ++j) {
        if (mask & (size_t{1} << j)) continue;
        size_t next = mask | (size_t{1} << j);
        double value = best[e][mask] + sim[e][j];
        if (value > best[e + 1][next]) {
          best[e + 1][next] = value;
          choice[e + 1][next] = j;
        }
      }
    }
  }

  size_t want = std::min(n_student, n_teacher);
  size_t best_mask = 0;
  double best_value = neg_inf;
  for (size_t mask = 0; mask < masks; ++mask) {
    if (static_cast<size_t>(std::popcount(mask)) != want) continue;
    if (best[n_student][mask] > best_value) {
      best_value = best[n_student][mask];
      best_mask = mask;
    }
  }

  std::vector<size_t> match(n_teacher, static_cast<size_t>(-1));
  size_t mask = best_mask;
  for (size_t e = n_student; e > 0; --e) {
    size_t j = choice[e][mask];
    if (j < n_teacher) {
      match[j] = e - 1;
      mask &= ~(size_t{1} << j);
    }
  }
  return match;
}

double recovery_score(const Model& student, const PlantedTeacher& teacher, uint64_t probe_seed) {
  if (student.config().subjects != teacher.spec.subjects) {
    raise(ErrorCode::ConfigMismatch, "subject counts differ");
  }
  std::vector<size_t> match = match_experts(student, teacher, probe_seed);
  const size_t n_teacher = teacher.spec.teacher_experts;

  double acc = 0.0;
  for (size_t s = 0; s < teacher.spec.subjects; ++s) {
    std::vector<double> prior = prior_route(s, student.router());
    std::vector<double> aligned(n_teacher, 0.0);
    for (size_t j = 0; j < n_teacher; ++j) {
      if (match[j] != static_cast<size_t>(-1)) aligned[j] = prior[match[j]];
    }
    auto mix_row = teacher.mixtures.row(s);
    std::vector<double> mix(mix_row.begin(), mix_row.end());
    acc += pearson(aligned, mix);
  }
  return acc / static_cast<double>(teacher.spec.subjects);
}

}  // namespace mind
