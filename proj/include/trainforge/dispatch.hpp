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

#include <sys/types.h>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "trainforge/project_config.hpp"
#include "trainforge/trainer.hpp"

namespace trainforge {

enum class RunStatus { kQueued, kRunning, kSucceeded, kFailed, kStopped };

std::string_view run_status_name(RunStatus s);
bool is_terminal(RunStatus s);

// How a local run executes: a supervised child process of this binary, or
// a thread of the current process (tests, adapters bound in-process).
enum class LocalMode { kSubprocess, kInProcess };

struct SpawnSpec {
  std::vector<std::string> argv;
  Env env;
  std::filesystem::path workdir;
  std::vector<std::string> expected_artifacts;  // relative to the project dir
};

inline constexpr const char* kDefaultDockerImage = "trainforge/trainforge:latest";

struct DispatchOptions {
  std::filesystem::path project_dir;
  std::filesystem::path cache_dir;
  LocalMode local_mode = LocalMode::kSubprocess;
  // Binary re-executed for subprocess runs; empty means /proc/self/exe.
  std::filesystem::path executable;
  // Child environment (subprocess / docker) and PATH for runtime detection.
  Env env;
  // In-process runs only; subprocess runs use the reference bindings.
  std::optional<TrainerBindings> bindings;
  std::string docker_image = kDefaultDockerImage;
  // When false a detected container runtime is still not invoked.
  bool docker_execute = true;
  std::chrono::milliseconds stop_grace{10000};
  std::optional<std::filesystem::path> resume_from;
  std::optional<std::string> expected_fingerprint;
  std::string run_id;  // generated when empty
  // Called once from the supervising thread with the final status, just
  // before the handle turns terminal.
  std::function<void(RunStatus)> on_finish;
};

class RunHandle {
 public:
  struct State;

  RunHandle() = default;
  explicit RunHandle(std::shared_ptr<State> state) : state_(std::move(state)) {}

  const std::string& run_id() const;
  BackendKind backend() const;
  std::optional<pid_t> pid() const;
  // Child argv (joined) or the container invocation.
  const std::string& command() const;
  // Docker without a usable runtime: the command was only emitted.
  bool dry_run() const;
  RunStatus status() const;
  // Error text for failed runs ("NotSupported: ..." and the like).
  std::string error() const;

  // Blocks until terminal; returns at once for a dry run.
  RunStatus wait() const;
  bool wait_for(std::chrono::milliseconds timeout) const;

  explicit operator bool() const { return state_ != nullptr; }
  const std::shared_ptr<State>& state() const { return state_; }

 private:
  std::shared_ptr<State> state_;
};

// <project>/.lock holds "run_id\npid\n". Throws BackendUnavailable("locked")
// while another live process holds it; locks of dead pids are reclaimed.
void acquire_project_lock(const std::filesystem::path& project_dir, const std::string& run_id,
                          pid_t pid);
void release_project_lock(const std::filesystem::path& project_dir, const std::string& run_id);

SpawnSpec child_spawn_spec(const ValidatedProject& project, const DispatchOptions& options,
                           const std::string& run_id);
std::string docker_command(const std::string& runtime, const DispatchOptions& options,
                           const std::string& run_id);

// Starts a run of the project on its configured backend. Throws
// TrainerUnbound, BackendUnavailable, SpawnFailed.
RunHandle dispatch(const ValidatedProject& project, const DispatchOptions& options);

// Graceful termination, hard kill after the grace period; returns once the
// status is terminal. Throws AlreadyTerminal.
RunHandle stop(const RunHandle& handle);

std::string new_run_id();

}  // namespace trainforge
