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

#include <atomic>
#include <filesystem>
#include <optional>
#include <string>

#include "trainforge/dataset.hpp"
#include "trainforge/hub_client.hpp"
#include "trainforge/project_config.hpp"
#include "trainforge/trainer.hpp"

namespace trainforge {

// TRAINFORGE_CACHE_DIR, else $HOME/.cache/trainforge, else ./.trainforge-cache.
std::filesystem::path default_cache_dir(const Env& env);

// Token handed to a child run out of band when the config held a literal
// (so canonical YAML only shows "***").
inline constexpr const char* kChildTokenEnv = "TRAINFORGE_HUB_TOKEN";

struct ProjectRunOptions {
  std::filesystem::path project_dir;
  std::filesystem::path cache_dir;
  std::string run_id = "run";
  const TrainerBindings* bindings = nullptr;  // null: reference trainers only
  const std::atomic<bool>* stop = nullptr;
  std::optional<std::filesystem::path> resume_from;
  // Fingerprint the parent processed; a differing result is FingerprintMismatch.
  std::optional<std::string> expected_fingerprint;
  HubOptions hub;
};

struct ProjectRunResult {
  TrainedArtifact artifact;
  std::string fingerprint;
  bool cache_hit = false;
  std::optional<std::string> pushed_url;
};

// Writes config.canonical.yml, prepares the dataset, trains and (when
// push_to_hub is set) pushes to <username>/<project_name>. Every failure
// leaves a terminal "failed" status event in events.jsonl before the
// exception propagates.
ProjectRunResult run_project(const ValidatedProject& project, const ProjectRunOptions& options);

// Writes <project_dir>/config.canonical.yml atomically.
void write_canonical_config(const ProjectConfig& config, const std::filesystem::path& project_dir);

}  // namespace trainforge
