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

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "trainforge/dispatch.hpp"
#include "trainforge/project_config.hpp"
#include "trainforge/trainer.hpp"

namespace trainforge {

enum class ProjectState { kCreated, kDataReady, kRunning, kSucceeded, kFailed, kStopped };

std::string_view project_state_name(ProjectState s);
std::optional<ProjectState> parse_project_state(std::string_view s);
// created->data_ready, data_ready->data_ready (re-upload), created|data_ready
// ->running, running->succeeded|failed|stopped, failed|stopped->running.
bool is_legal_transition(ProjectState from, ProjectState to);

struct AppOptions {
  // Project directories (<workdir>/<project_name>) and projects.jsonl.
  std::filesystem::path workdir = ".";
  std::filesystem::path cache_dir;
  Env env;
  TrainerBindings bindings = TrainerBindings::with_reference_trainers();
  LocalMode local_mode = LocalMode::kSubprocess;
  std::filesystem::path executable;
  std::chrono::milliseconds long_poll{25000};
  std::chrono::milliseconds stop_grace{10000};
  // Bearer token required on /api/* (except /api/health) when set.
  std::optional<std::string> api_token;
  std::string docker_image = kDefaultDockerImage;
};

// JSON API over HTTP/1.1:
//   GET  /api/health
//   GET  /api/tasks, /api/tasks/{id}/params
//   POST /api/projects {config}            GET /api/projects[/{id}]
//   POST /api/projects/{id}/dataset        (multipart field "file")
//   POST /api/projects/{id}/start | /stop  GET /api/projects/{id}/logs?cursor=N
// Error bodies are {error, detail} plus error_key_path/message for config
// errors.
class AppServer {
 public:
  // Replays <workdir>/projects.jsonl; projects left running become failed.
  explicit AppServer(AppOptions options);
  ~AppServer();
  AppServer(const AppServer&) = delete;
  AppServer& operator=(const AppServer&) = delete;

  // Port 0 picks a free port. Returns the bound port; throws
  // BackendUnavailable when the address is taken.
  int bind(const std::string& host, int port);
  // Serves until stop().
  void listen();
  // bind() first; serves on a background thread.
  void start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace trainforge
