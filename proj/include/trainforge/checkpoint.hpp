/*
 * Copyright 2026 The Trainforge Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "trainforge/optimizer.hpp"
#include "trainforge/rng.hpp"

namespace trainforge {

// Container used by model.bin and checkpoint.bin:
//   8-byte magic | u32 version | u64 header length | JSON header |
//   u32 array count | (u64 length | little-endian f64 values)*
struct BinaryBlob {
  nlohmann::json header;
  std::vector<std::vector<double>> arrays;
};

inline constexpr std::uint32_t kModelFormatVersion = 1;
inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

// Written atomically (temp file + rename).
void write_blob(const std::filesystem::path& path, std::string_view magic,
                std::uint32_t version, const BinaryBlob& blob);
// Throws CheckpointVersionMismatch when the version differs, FileCorrupt on
// a bad magic or truncated content.
BinaryBlob read_blob(const std::filesystem::path& path, std::string_view magic,
                     std::uint32_t version);

inline constexpr std::string_view kModelMagic = "TFMODEL1";
inline constexpr std::string_view kCheckpointMagic = "TFCKPT01";

struct TrainState {
  std::vector<double> params;
  OptimizerState optimizer;
  std::int64_t global_step = 0;
  std::int64_t epoch = 0;          // epoch to continue in
  std::int64_t step_in_epoch = 0;  // optimizer steps already done in it
  std::int64_t total_steps = 0;
  CounterRng::State rng;
  std::string dataset_fingerprint;
  std::string config_digest;
};

// Writes <checkpoints_root>/step-<global_step>/checkpoint.bin and returns
// that directory.
std::filesystem::path save_checkpoint(const TrainState& state,
                                      const std::filesystem::path& checkpoints_root);

// Accepts a step directory or a checkpoints root (latest step wins).
// Throws CheckpointMissing, CheckpointVersionMismatch.
TrainState resume(const std::filesystem::path& dir);

}  // namespace trainforge
