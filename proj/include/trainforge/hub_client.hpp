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
#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "trainforge/project_config.hpp"

namespace trainforge {

enum class RepoKind { kModel, kDataset };

struct HubRef {
  std::string repo_id;  // "namespace/name"
  RepoKind kind = RepoKind::kModel;
  std::optional<std::string> revision;

  static bool is_valid_repo_id(std::string_view id);
};

inline constexpr const char* kDefaultHubEndpoint = "https://huggingface.co";

struct HubOptions {
  std::string endpoint = kDefaultHubEndpoint;
  // Bearer token for reads of private repos; never logged.
  std::optional<std::string> read_token;
  int max_retries = 3;
  std::chrono::milliseconds backoff_base{1000};  // doubles per retry
  std::chrono::seconds timeout{30};

  // HUB_ENDPOINT overrides the endpoint.
  static HubOptions from_env(const Env& env);
};

struct HubStats {
  std::atomic<int> requests{0};
  std::atomic<int> downloads{0};
  std::atomic<int> uploads{0};
};

// Minimal hub protocol:
//   GET  {ep}/api/{kind}s/{repo}/tree[?revision=R] -> {"revision", "files":[{"path","size"}]}
//   GET  {ep}/api/{kind}s/{repo}/resolve/{revision}/{path}
//   PUT  {ep}/api/{kind}s/{repo}/upload/{path}      (Authorization: Bearer)
// Connection failures and 5xx are retried with exponential backoff.
class HubClient {
 public:
  explicit HubClient(HubOptions options);

  // Materializes the repository under dest_dir/<repo_id>. A second pull of
  // the same revision downloads nothing. Throws NotFound, AuthRequired,
  // NetworkError.
  std::filesystem::path pull(const HubRef& ref, const std::filesystem::path& dest_dir);

  // Uploads artifact/model.bin, artifact/metadata.json and a generated
  // model card (README.md). Files already recorded in
  // <project_dir>/.push-state.json for the same repo are skipped, so an
  // interrupted push resumes. Returns the repo URL. Throws AuthRequired
  // (empty token, before any request), QuotaExceeded, NetworkError.
  std::string push_artifact(const std::filesystem::path& project_dir,
                            const HubRef& target, const std::string& token);

  const HubOptions& options() const { return options_; }
  const HubStats& stats() const { return stats_; }

 private:
  HubOptions options_;
  HubStats stats_;
};

// Model card text derived from metadata.json.
std::string render_model_card(const std::filesystem::path& metadata_json);

}  // namespace trainforge
