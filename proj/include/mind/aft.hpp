// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include "mind/afire.hpp"
#include "mind/synthgen.hpp"

namespace mind {

// AFT: binary container for one episode's feature or response sequence.
//
//   magic       "AFT1" (4 bytes)
//   version     u32 = 1
//   dtype       u32: 0 = f32, 1 = f64
//   n_rows      u32
//   n_cols      u32
//   rate_hz     f64
//   subject_id  u32
//   episode_id  u32 length + UTF-8 bytes
//   payload     n_rows * n_cols values, row-major, little-endian
//
// f32 payloads are promoted to f64 on read.
enum class AftDtype : uint32_t { F32 = 0, F64 = 1 };

void write_aft(const std::filesystem::path& path, const FeatureSequence& sequence,
               AftDtype dtype = AftDtype::F64);

FeatureSequence read_aft(const std::filesystem::path& path);

// Dataset directory layout: an index file `dataset.json` naming per-episode
// AFT pairs, plus optional teacher artifacts (`teacher.json`,
// `teacher.ckpt`).
void write_dataset(const std::filesystem::path& dir, const PlantedDataset& dataset,
                   const std::string& config_hash);

Dataset load_dataset(const std::filesystem::path& dir);

// Teacher mixtures and metadata from a dataset directory; present only for
// generated data.
struct TeacherInfo {
  SynthSpec spec;
  Matrix mixtures;
  std::vector<double> oracle_ceiling;
  double oracle_ceiling_mean = 1.0;
};

bool has_teacher(const std::filesystem::path& dir);
TeacherInfo load_teacher_info(const std::filesystem::path& dir);

}  // namespace mind
