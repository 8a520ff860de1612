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

#include "trainforge/cli.hpp"

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "trainforge/app_server.hpp"
#include "trainforge/dataset.hpp"
#include "trainforge/error.hpp"
#include "trainforge/hub_client.hpp"
#include "trainforge/monitoring.hpp"
#include "trainforge/pipeline.hpp"

namespace trainforge {
namespace fs = std::filesystem;

namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void OnSignal(int) { g_interrupted.store(true); }

void InstallSignalHandlers() {
  struct sigaction sa {};
  sa.sa_handler = OnSignal;
  sigemptyset(&sa.sa_mask);
  ::sigaction(SIGINT, &sa, nullptr);
  ::sigaction(SIGTERM, &sa, nullptr);
}

std::ostream& Out(const CommandOptions& o) { return o.out ? *o.out : std::cout; }
std::ostream& Err(const CommandOptions& o) { return o.err ? *o.err : std::cerr; }

std::string FormatValue(const MetricEvent& e) {
  if (const auto* s = std::get_if<std::string>(&e.value)) return *s;
  std::ostringstream out;
  out << std::get<double>(e.value);
  return out.str();
}

// Mirrors new events of this run to the terminal.
void Relay(const fs::path& events, std::uint64_t& cursor, const std::string& run_id,
           std::ostream& err) {
  if (!fs::exists(events)) return;
  TailResult r = tail(events, cursor);
  cursor = r.cursor;
  for (const auto& e : r.events) {
    if (e.run_id != run_id) continue;
    err << "[" << event_split_name(e.split) << "] step " << e.step << " epoch " << e.epoch << " "
        << e.name << " " << FormatValue(e) << "\n";
  }
}

}  // namespace

int cmd_tasks_list(std::ostream& out) {
  for (const auto& spec : list_tasks()) out << spec.id.canonical() << "\n";
  return kExitOk;
}

int cmd_config(const fs::path& config_path, const CommandOptions& options) {
  std::ostream& err = Err(options);
  ValidatedProject project;
  try {
    std::ifstream in(config_path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kFileMissing, config_path.string());
    std::stringstream text;
    text << in.rdbuf();
    ProjectConfig cfg = parse_config(text.str(), options.env);
    // Relative data paths are taken relative to the config file; anything
    // that does not exist there is left for the cwd or the hub.
    const fs::path data_path(cfg.data.path);
    if (data_path.is_relative()) {
      const fs::path beside = fs::absolute(config_path).parent_path() / data_path;
      if (fs::exists(beside)) cfg.data.path = beside.lexically_normal().string();
    }
    project = validate_config(cfg);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfigError;
  }

  const fs::path project_dir =
      fs::absolute(options.workdir / project.config.project_name).lexically_normal();
  const fs::path cache_dir = options.cache_dir.value_or(default_cache_dir(options.env));
  std::string fp;
  try {
    HubClient hub(HubOptions::from_env(options.env));
    const PreparedDataset prepared = prepare_dataset(project, cache_dir, &hub);
    fp = prepared.data.fingerprint;
    err << "dataset " << fp << (prepared.cache_hit ? " (cached)" : "") << ", "
        << prepared.data.train.size() << " train records\n";
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailed;
  }

  DispatchOptions d;
  d.project_dir = project_dir;
  d.cache_dir = cache_dir;
  d.local_mode = options.mode;
  d.bindings = options.bindings;
  d.env = options.env;
  d.executable = options.executable;
  d.expected_fingerprint = fp;
  if (auto it = options.env.find("TRAINFORGE_DOCKER_IMAGE"); it != options.env.end()) {
    d.docker_image = it->second;
  }

  RunHandle handle;
  try {
    handle = dispatch(project, d);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailed;
  }
  if (handle.dry_run()) {
    err << "no container runtime found; run this command:\n";
    Out(options) << handle.command() << "\n";
    return kExitOk;
  }

  const std::atomic<bool>& interrupt = options.interrupt ? *options.interrupt : g_interrupted;
  const fs::path events = project_dir / "events.jsonl";
  std::uint64_t cursor = fs::exists(events) ? fs::file_size(events) : 0;
  bool stopping = false;
  while (!handle.wait_for(std::chrono::milliseconds(100))) {
    Relay(events, cursor, handle.run_id(), err);
    if (interrupt.load() && !stopping) {
      stopping = true;
      err << "interrupted; stopping run " << handle.run_id() << "\n";
      try {
        stop(handle);
      } catch (const Error&) {
      }
    }
  }
  Relay(events, cursor, handle.run_id(), err);

  const RunStatus status = handle.status();
  nlohmann::json summary = {{"run_id", handle.run_id()},
                            {"status", run_status_name(status)},
                            {"project_dir", fs::absolute(project_dir).string()}};
  if (status == RunStatus::kSucceeded) {
    summary["artifact"] = fs::absolute(project_dir / "artifact").string();
  }
  Out(options) << summary.dump() << "\n";
  switch (status) {
    case RunStatus::kSucceeded: return kExitOk;
    case RunStatus::kStopped: return kExitInterrupted;
    default:
      if (!handle.error().empty()) err << "error: " << handle.error() << "\n";
      return kExitFailed;
  }
}

int cmd_app(const std::string& host, int port, const CommandOptions& options) {
  AppOptions app;
  app.workdir = options.workdir;
  app.env = options.env;
  app.cache_dir = options.cache_dir.value_or(default_cache_dir(options.env));
  app.local_mode = options.mode;
  app.executable = options.executable;
  if (options.bindings) app.bindings = *options.bindings;
  if (auto it = options.env.find("TRAINFORGE_API_TOKEN"); it != options.env.end() &&
                                                          !it->second.empty()) {
    app.api_token = it->second;
  }
  if (auto it = options.env.find("TRAINFORGE_DOCKER_IMAGE"); it != options.env.end()) {
    app.docker_image = it->second;
  }
  try {
    AppServer server(std::move(app));
    int bound = 0;
    try {
      bound = server.bind(host, port);
    } catch (const Error& e) {
      Err(options) << "error: " << e.detail() << "\n";
      return kExitPortInUse;
    }
    server.start();
    Out(options) << "listening on http://" << host << ":" << bound << std::endl;
    const std::atomic<bool>& interrupt = options.interrupt ? *options.interrupt : g_interrupted;
    while (!interrupt.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
  } catch (const Error& e) {
    Err(options) << "error: " << e.what() << "\n";
    return kExitFailed;
  }
  return kExitOk;
}

int run_child(const fs::path& project_dir, const fs::path& cache_dir, const std::string& run_id,
              const std::optional<std::string>& fingerprint,
              const std::optional<fs::path>& resume_from) {
  InstallSignalHandlers();
  try {
    const Env env = current_env();
    std::ifstream in(project_dir / "config.canonical.yml");
    if (!in) throw Error(ErrorCode::kFileMissing, (project_dir / "config.canonical.yml").string());
    std::stringstream text;
    text << in.rdbuf();
    ProjectConfig config = parse_config(text.str(), env);
    if (auto it = env.find(kChildTokenEnv); it != env.end() && config.hub.token) {
      config.hub.token->value = it->second;
    }
    const ValidatedProject project = validate_config(config);
    ProjectRunOptions run;
    run.project_dir = project_dir;
    run.cache_dir = cache_dir;
    run.run_id = run_id;
    run.stop = &g_interrupted;
    run.resume_from = resume_from;
    run.expected_fingerprint = fingerprint;
    run.hub = HubOptions::from_env(env);
    const ProjectRunResult result = run_project(project, run);
    return result.artifact.outcome == RunOutcome::kStopped ? kExitInterrupted : kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitFailed;
  }
}

int run_cli(int argc, char** argv) {
  CLI::App app{"trainforge: no-code model training orchestrator", "trainforge"};
  app.require_subcommand(0, 1);

  std::string config_path;
  std::string output_dir = ".";
  app.add_option("--config", config_path, "Train from a YAML project config");
  app.add_option("--output-dir", output_dir, "Directory that receives <project_name>/");

  auto* app_cmd = app.add_subcommand("app", "Serve the HTTP API");
  std::string host = "127.0.0.1";
  int port = 7860;
  std::string workdir = ".";
  app_cmd->add_option("--host", host, "Bind address")->capture_default_str();
  app_cmd->add_option("--port", port, "Port, 0 for any free port")->capture_default_str();
  app_cmd->add_option("--workdir", workdir, "Where projects and projects.jsonl live");

  auto* tasks_cmd = app.add_subcommand("tasks", "Task registry");
  tasks_cmd->require_subcommand(1);
  auto* tasks_list = tasks_cmd->add_subcommand("list", "Print every task id");

  auto* child = app.add_subcommand("_run", "")->group("");
  std::string child_project;
  std::string child_cache;
  std::string child_run_id = "run";
  std::string child_fp;
  std::string child_resume;
  child->add_option("--project-dir", child_project)->required();
  child->add_option("--cache-dir", child_cache)->required();
  child->add_option("--run-id", child_run_id);
  child->add_option("--fingerprint", child_fp);
  child->add_option("--resume", child_resume);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (child->parsed()) {
    return run_child(child_project, child_cache, child_run_id,
                     child_fp.empty() ? std::nullopt : std::optional(child_fp),
                     child_resume.empty() ? std::nullopt : std::optional<fs::path>(child_resume));
  }
  if (tasks_list->parsed()) return cmd_tasks_list(std::cout);

  CommandOptions options;
  options.env = current_env();
  InstallSignalHandlers();
  if (app_cmd->parsed()) {
    options.workdir = workdir;
    return cmd_app(host, port, options);
  }
  if (!config_path.empty()) {
    options.workdir = output_dir;
    return cmd_config(config_path, options);
  }
  std::cerr << app.help();
  return kExitUsage;
}

}  // namespace trainforge
