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
#include <iosfwd>
#include <optional>
#include <string>

#include "trainforge/dispatch.hpp"
#include "trainforge/project_config.hpp"
#include "trainforge/trainer.hpp"

namespace trainforge {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailed = 1;
inline constexpr int kExitPortInUse = 2;
inline constexpr int kExitConfigError = 3;
inline constexpr int kExitUsage = 64;
inline constexpr int kExitInterrupted = 130;

struct CommandOptions {
  LocalMode mode = LocalMode::kSubprocess;
  std::optional<TrainerBindings> bindings;  // in-process mode only
  Env env;
  std::optional<std::filesystem::path> cache_dir;  // default_cache_dir(env)
  std::filesystem::path workdir = ".";              // projects go to <workdir>/<project_name>
  std::filesystem::path executable;                 // for subprocess runs
  std::ostream* out = nullptr;                      // std::cout when null
  std::ostream* err = nullptr;                      // std::cerr when null
  // Raised by SIGINT/SIGTERM in the CLI; tests may supply their own flag.
  const std::atomic<bool>* interrupt = nullptr;
};

// parse -> validate -> process dataset -> dispatch -> wait. Returns 0
// succeeded, 1 failed, 3 config error (printed with its key path), 130
// interrupted (run stopped gracefully).
int cmd_config(const std::filesystem::path& config_path, const CommandOptions& options);

// One canonical task id per line, sorted.
int cmd_tasks_list(std::ostream& out);

// Serves the app until interrupted. Prints "listening on <addr>" once
// bound; returns 2 when the port is taken.
int cmd_app(const std::string& host, int port, const CommandOptions& options);

// Body of the hidden `_run` command executed by subprocess dispatch.
int run_child(const std::filesystem::path& project_dir, const std::filesystem::path& cache_dir,
              const std::string& run_id, const std::optional<std::string>& fingerprint,
              const std::optional<std::filesystem::path>& resume_from);

int run_cli(int argc, char** argv);

}  // namespace trainforge
