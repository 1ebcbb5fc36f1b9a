// SPDX-License-Identifier: Apache-2.0
#include "mind/aft.hpp"

#include <fstream>

#include "json.hpp"
#include "mind/io_util.hpp"

namespace mind {

namespace {
constexpr char kAftMagic[4] = {'A', 'F', 'T', '1'};
constexpr uint32_t kAftVersion = 1;
}  // namespace

void write_aft(const std::filesystem::path& path, const FeatureSequence& sequence,
               AftDtype dtype) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorCode::IoError, "cannot write " + path.string());
  out.write(kAftMagic, 4);
  io::write_le<uint32_t>(out, kAftVersion);
  io::write_le<uint32_t>(out, static_cast<uint32_t>(dtype));
  io::write_le<uint32_t>(out, static_cast<uint32_t>(sequence.frames.rows()));
  io::write_le<uint32_t>(out, static_cast<uint32_t>(sequence.frames.cols()));
  io::write_le<double>(out, sequence.rate_hz);
  io::write_le<uint32_t>(out, sequence.subject_id);
  io::write_string(out, sequence.episode_id);
  for (double v : sequence.frames.data()) {
    if (dtype == AftDtype::F32) {
      io::write_le<float>(out, static_cast<float>(v));
    } else {
      io::write_le<double>(out, v);
    }
  }
  if (!out) raise(ErrorCode::IoError, "write failed for " + path.string());
}

FeatureSequence read_aft(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::IoError, "cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kAftMagic, 4) != 0) {
    raise(ErrorCode::IoError, path.string() + " is not an AFT file");
  }
  auto version = io::read_le<uint32_t>(in);
  if (version != kAftVersion) raise(ErrorCode::IoError, "unsupported AFT version");
  auto dtype = static_cast<AftDtype>(io::read_le<uint32_t>(in));
  if (dtype != AftDtype::F32 && dtype != AftDtype::F64) {
    raise(ErrorCode::IoError, "unknown AFT dtype tag");
  }
  auto n_rows = io::read_le<uint32_t>(in);
  auto n_cols = io::read_le<uint32_t>(in);

  FeatureSequence sequence;
  sequence.rate_hz = io::read_le<double>(in);
  sequence.subject_id = io::read_le<uint32_t>(in);
  sequence.episode_id = io::read_string(in);
  sequence.frames = Matrix(n_rows, n_cols);
  for (double& v : sequence.frames.data()) {
    v = (dtype == AftDtype::F32) ? static_cast<double>(io::read_le<float>(in))
                                 : io::read_le<double>(in);
  }
  require_finite(sequence.frames, "AFT payload of " + path.string());
  return sequence;
}

void write_dataset(const std::filesystem::path& dir, const PlantedDataset& dataset,
                   const std::string& config_hash) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);

  nlohmann::ordered_json index;
  index["tr_seconds"] = dataset.data.tr_seconds;
  index["subjects"] = dataset.data.subjects;
  index["d_in"] = dataset.data.d_in;
  index["out"] = dataset.data.out;
  index["seed"] = dataset.seed;
  index["episodes"] = nlohmann::ordered_json::array();

  for (const auto& ep : dataset.data.episodes) {
    std::string stem = "s" + std::to_string(ep.subject) + "_" + ep.episode_id;
    FeatureSequence features;
    features.episode_id = ep.episode_id;
    features.subject_id = ep.subject;
    features.rate_hz = 1.0 / dataset.data.tr_seconds;
    features.frames = ep.features;
    write_aft(dir / (stem + ".features.aft"), features);

    FeatureSequence responses;
    responses.episode_id = ep.episode_id;
    responses.subject_id = ep.subject;
    responses.rate_hz = 1.0 / dataset.data.tr_seconds;
    responses.frames = ep.responses;
    write_aft(dir / (stem + ".responses.aft"), responses);

    index["episodes"].push_back({{"subject", ep.subject},
                                 {"episode", ep.episode_id},
                                 {"features", stem + ".features.aft"},
                                 {"responses", stem + ".responses.aft"}});
  }

  const PlantedTeacher& teacher = dataset.teacher;
  std::vector<double> ceiling = oracle_ceiling(dataset);
  double ceiling_mean = 0.0;
  for (double v : ceiling) ceiling_mean += v;
  ceiling_mean /= static_cast<double>(ceiling.size());

  nlohmann::ordered_json tj;
  tj["mode"] = heterogeneity_mode_name(teacher.spec.mode);
  tj["d"] = teacher.spec.d;
  tj["out"] = teacher.spec.out;
  tj["teacher_experts"] = teacher.spec.teacher_experts;
  tj["teacher_hidden"] = teacher.spec.teacher_hidden;
  tj["subjects"] = teacher.spec.subjects;
  tj["episodes"] = teacher.spec.episodes;
  tj["tr_per_episode"] = teacher.spec.tr_per_episode;
  tj["sigma"] = teacher.spec.sigma;
  tj["token_gate_scale"] = teacher.spec.token_gate_scale;
  tj["ar_coeff"] = teacher.spec.ar_coeff;
  tj["tr_seconds"] = teacher.spec.tr_seconds;
  tj["seed"] = teacher.spec.seed;
  tj["mixtures"] = nlohmann::ordered_json::array();
  for (size_t s = 0; s < teacher.mixtures.rows(); ++s) {
    auto row = teacher.mixtures.row(s);
    tj["mixtures"].push_back(std::vector<double>(row.begin(), row.end()));
  }
  tj["oracle_ceiling"] = ceiling;
  tj["oracle_ceiling_mean"] = ceiling_mean;
  {
    std::ofstream out(dir / "teacher.json");
    if (!out) raise(ErrorCode::IoError, "cannot write teacher.json");
    out << tj.dump(2) << "\n";
  }
  Model teacher_model = teacher_to_model(teacher, teacher.spec.teacher_experts);
  teacher_model.save(dir / "teacher.ckpt", config_hash, dataset.seed);

  index["teacher"] = {{"manifest", "teacher.json"}, {"checkpoint", "teacher.ckpt"}};
  index["oracle_ceiling_mean"] = ceiling_mean;
  std::ofstream out(dir / "dataset.json");
  if (!out) raise(ErrorCode::IoError, "cannot write dataset.json");
  out << index.dump(2) << "\n";
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "dataset.json");
  if (!in) raise(ErrorCode::IoError, "cannot open " + (dir / "dataset.json").string());
  nlohmann::json index = nlohmann::json::parse(in);

  Dataset dataset;
  dataset.tr_seconds = index.at("tr_seconds").get<double>();
  dataset.subjects = index.at("subjects").get<size_t>();
  dataset.d_in = index.at("d_in").get<size_t>();
  dataset.out = index.at("out").get<size_t>();

  for (const auto& entry : index.at("episodes")) {
    FeatureSequence features = read_aft(dir / entry.at("features").get<std::string>());
    FeatureSequence responses = read_aft(dir / entry.at("responses").get<std::string>());
    if (features.frames.cols() != dataset.d_in || responses.frames.cols() != dataset.out) {
      raise(ErrorCode::ConfigMismatch, "episode dims disagree with dataset index");
    }
    EpisodeData ep;
    ep.subject = features.subject_id;
    ep.episode_id = features.episode_id;
    size_t n_tr = responses.frames.rows();
    ep.features = bin_to_tr(features, dataset.tr_seconds, n_tr);
    ep.responses = std::move(responses.frames);
    dataset.episodes.push_back(std::move(ep));
  }
  return dataset;
}

bool has_teacher(const std::filesystem::path& dir) {
  return std::filesystem::exists(dir / "teacher.json");
}

TeacherInfo load_teacher_info(const std::filesystem::path& dir) {
  std::ifstream in(dir / "teacher.json");
  if (!in) raise(ErrorCode::IoError, "cannot open " + (dir / "teacher.json").string());
  nlohmann::json tj = nlohmann::json::parse(in);

  TeacherInfo info;
  info.spec.mode = heterogeneity_mode_from_name(tj.at("mode").get<std::string>());
  info.spec.d = tj.at("d").get<size_t>();
  info.spec.out = tj.at("out").get<size_t>();
  info.spec.teacher_experts = tj.at("teacher_experts").get<size_t>();
  info.spec.teacher_hidden = tj.at("teacher_hidden").get<size_t>();
  info.spec.subjects = tj.at("subjects").get<size_t>();
  info.spec.episodes = tj.at("episodes").get<size_t>();
  info.spec.tr_per_episode = tj.at("tr_per_episode").get<size_t>();
  info.spec.sigma = tj.at("sigma").get<double>();
  info.spec.token_gate_scale = tj.at("token_gate_scale").get<double>();
  info.spec.ar_coeff = tj.at("ar_coeff").get<double>();
  info.spec.tr_seconds = tj.at("tr_seconds").get<double>();
  info.spec.seed = tj.at("seed").get<uint64_t>();

  const auto& rows = tj.at("mixtures");
  info.mixtures = Matrix(rows.size(), info.spec.teacher_experts);
  for (size_t s = 0; s < rows.size(); ++s) {
    auto row = rows[s].get<std::vector<double>>();
    std::copy(row.begin(), row.end(), info.mixtures.row(s).begin());
  }
  info.oracle_ceiling = tj.at("oracle_ceiling").get<std::vector<double>>();
  info.oracle_ceiling_mean = tj.at("oracle_ceiling_mean").get<double>();
  return info;
}

}  // namespace mind
