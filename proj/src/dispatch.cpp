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

#include "trainforge/dispatch.hpp"

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "trainforge/error.hpp"
#include "trainforge/monitoring.hpp"
#include "trainforge/pipeline.hpp"

namespace trainforge {
namespace fs = std::filesystem;

struct RunHandle::State {
  std::string run_id;
  BackendKind backend = BackendKind::kLocal;
  LocalMode mode = LocalMode::kSubprocess;
  std::string command;
  bool dry_run = false;
  fs::path project_dir;
  std::chrono::milliseconds grace{10000};

  mutable std::mutex mu;
  mutable std::condition_variable cv;
  RunStatus status = RunStatus::kQueued;
  std::optional<pid_t> pid;
  std::string error;
  std::atomic<bool> stop_requested{false};
  std::function<void(RunStatus)> on_finish;
};

namespace {

using State = RunHandle::State;

void SetStatus(State& s, RunStatus status, std::string error = {}) {
  {
    std::lock_guard lock(s.mu);
    s.status = status;
    if (!error.empty()) s.error = std::move(error);
  }
  s.cv.notify_all();
}

void Finish(const std::shared_ptr<State>& s, RunStatus status, std::string error = {}) {
  release_project_lock(s->project_dir, s->run_id);
  // The callback runs before waiters wake so nothing it touches can be torn
  // down by a caller returning from wait().
  if (s->on_finish) s->on_finish(status);
  SetStatus(*s, status, std::move(error));
}

bool PidAlive(pid_t pid) {
  if (pid <= 0) return false;
  return ::kill(pid, 0) == 0 || errno == EPERM;
}

std::string ShellQuote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

std::optional<std::string> FindRuntime(const Env& env) {
  auto it = env.find("PATH");
  if (it == env.end()) return std::nullopt;
  for (const char* name : {"docker", "podman"}) {
    std::istringstream dirs(it->second);
    std::string dir;
    while (std::getline(dirs, dir, ':')) {
      if (dir.empty()) continue;
      const fs::path candidate = fs::path(dir) / name;
      if (::access(candidate.c_str(), X_OK) == 0) return std::string(name);
    }
  }
  return std::nullopt;
}

// Last status value in events.jsonl, if any.
std::optional<std::string> LastStatus(const fs::path& events) {
  if (!fs::exists(events)) return std::nullopt;
  std::optional<std::string> last;
  for (const auto& e : tail(events, 0).events) {
    if (e.split == EventSplit::kSystem && e.name == kStatusEvent) {
      if (const auto* v = std::get_if<std::string>(&e.value)) last = *v;
    }
  }
  return last;
}

void AppendStatus(const fs::path& project_dir, const std::string& run_id, const std::string& value,
                  const std::string& detail) {
  const fs::path events = project_dir / "events.jsonl";
  if (LastStatus(events) == value) return;
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  if (fs::exists(events)) {
    for (const auto& e : tail(events, 0).events) {
      if (e.run_id == run_id) {
        step = e.step;
        epoch = e.epoch;
      }
    }
  }
  JsonlEventSink sink(events);
  if (!detail.empty()) {
    sink.emit({now_millis(), run_id, step, epoch, EventSplit::kSystem, "error", detail});
  }
  sink.emit({now_millis(), run_id, step, epoch, EventSplit::kSystem, kStatusEvent, value});
}

std::vector<char*> CStrings(std::vector<std::string>& strings) {
  std::vector<char*> out;
  for (auto& s : strings) out.push_back(s.data());
  out.push_back(nullptr);
  return out;
}

pid_t Spawn(const SpawnSpec& spec, const fs::path& log_path) {
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, STDIN_FILENO, "/dev/null", O_RDONLY, 0);
  posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, log_path.c_str(),
                                   O_WRONLY | O_CREAT | O_APPEND, 0644);
  posix_spawn_file_actions_adddup2(&actions, STDOUT_FILENO, STDERR_FILENO);
  posix_spawnattr_t attr;
  posix_spawnattr_init(&attr);
  // Own process group so a terminal ^C reaches only the supervisor.
  posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);
  posix_spawnattr_setpgroup(&attr, 0);

  std::vector<std::string> argv = spec.argv;
  std::vector<std::string> envp;
  for (const auto& [k, v] : spec.env) envp.push_back(k + "=" + v);
  auto cargv = CStrings(argv);
  auto cenv = CStrings(envp);

  pid_t pid = -1;
  const int rc = ::posix_spawn(&pid, argv[0].c_str(), &actions, &attr, cargv.data(), cenv.data());
  posix_spawn_file_actions_destroy(&actions);
  posix_spawnattr_destroy(&attr);
  if (rc != 0) throw Error(ErrorCode::kSpawnFailed, argv[0] + ": " + std::strerror(rc));
  return pid;
}

void SuperviseChild(const std::shared_ptr<State>& s, pid_t pid) {
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  RunStatus final_status = RunStatus::kFailed;
  std::string error;
  if (WIFEXITED(status)) {
    const int code = WEXITSTATUS(status);
    if (code == 0) {
      final_status = RunStatus::kSucceeded;
    } else if (code == 130) {
      final_status = RunStatus::kStopped;
    } else {
      error = "child exited with status " + std::to_string(code);
    }
  } else if (WIFSIGNALED(status)) {
    if (s->stop_requested) {
      final_status = RunStatus::kStopped;
    } else {
      error = std::string("child killed by signal ") + strsignal(WTERMSIG(status));
    }
  }
  try {
    if (final_status == RunStatus::kFailed) {
      AppendStatus(s->project_dir, s->run_id, "failed", error);
    } else if (final_status == RunStatus::kStopped) {
      AppendStatus(s->project_dir, s->run_id, "stopped", "");
    }
  } catch (const std::exception&) {
    // The status of the handle is still authoritative.
  }
  Finish(s, final_status, error);
}

std::string Join(const std::vector<std::string>& argv) {
  std::string out;
  for (const auto& a : argv) {
    if (!out.empty()) out += ' ';
    out += ShellQuote(a);
  }
  return out;
}

}  // namespace

std::string_view run_status_name(RunStatus s) {
  switch (s) {
    case RunStatus::kQueued: return "queued";
    case RunStatus::kRunning: return "running";
    case RunStatus::kSucceeded: return "succeeded";
    case RunStatus::kFailed: return "failed";
    case RunStatus::kStopped: return "stopped";
  }
  return "?";
}

bool is_terminal(RunStatus s) {
  return s == RunStatus::kSucceeded || s == RunStatus::kFailed || s == RunStatus::kStopped;
}

const std::string& RunHandle::run_id() const { return state_->run_id; }
BackendKind RunHandle::backend() const { return state_->backend; }
const std::string& RunHandle::command() const { return state_->command; }
bool RunHandle::dry_run() const { return state_->dry_run; }

std::optional<pid_t> RunHandle::pid() const {
  std::lock_guard lock(state_->mu);
  return state_->pid;
}

RunStatus RunHandle::status() const {
  std::lock_guard lock(state_->mu);
  return state_->status;
}

std::string RunHandle::error() const {
  std::lock_guard lock(state_->mu);
  return state_->error;
}

RunStatus RunHandle::wait() const {
  std::unique_lock lock(state_->mu);
  state_->cv.wait(lock, [&] { return is_terminal(state_->status) || state_->dry_run; });
  return state_->status;
}

bool RunHandle::wait_for(std::chrono::milliseconds timeout) const {
  std::unique_lock lock(state_->mu);
  return state_->cv.wait_for(lock, timeout,
                             [&] { return is_terminal(state_->status) || state_->dry_run; });
}

std::string new_run_id() {
  static std::mutex mu;
  static std::mt19937_64 gen{std::random_device{}()};
  std::lock_guard lock(mu);
  std::ostringstream out;
  out << "run-" << now_millis() << "-" << std::hex << (gen() & 0xffffff);
  return out.str();
}

void acquire_project_lock(const fs::path& project_dir, const std::string& run_id, pid_t pid) {
  fs::create_directories(project_dir);
  const fs::path path = project_dir / ".lock";
  const std::string content = run_id + "\n" + std::to_string(pid) + "\n";
  for (int attempt = 0; attempt < 2; ++attempt) {
    const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_EXCL, 0644);
    if (fd >= 0) {
      const ssize_t n = ::write(fd, content.data(), content.size());
      ::close(fd);
      if (n != static_cast<ssize_t>(content.size())) {
        throw Error(ErrorCode::kIoError, "cannot write " + path.string());
      }
      return;
    }
    if (errno != EEXIST) {
      throw Error(ErrorCode::kBackendUnavailable, path.string() + ": " + std::strerror(errno));
    }
    std::ifstream in(path);
    std::string holder;
    pid_t holder_pid = 0;
    std::getline(in, holder);
    in >> holder_pid;
    if (PidAlive(holder_pid)) {
      throw Error(ErrorCode::kBackendUnavailable,
                  "locked by " + holder + " (pid " + std::to_string(holder_pid) + ")");
    }
    std::error_code ec;
    fs::remove(path, ec);
  }
  throw Error(ErrorCode::kBackendUnavailable, "locked");
}

void release_project_lock(const fs::path& project_dir, const std::string& run_id) {
  const fs::path path = project_dir / ".lock";
  std::ifstream in(path);
  std::string holder;
  if (!std::getline(in, holder) || holder != run_id) return;
  in.close();
  std::error_code ec;
  fs::remove(path, ec);
}

static void RewriteLockPid(const fs::path& project_dir, const std::string& run_id, pid_t pid) {
  const fs::path path = project_dir / ".lock";
  const fs::path tmp = project_dir / ".lock.tmp";
  std::ofstream(tmp, std::ios::trunc) << run_id << "\n" << pid << "\n";
  fs::rename(tmp, path);
}

SpawnSpec child_spawn_spec(const ValidatedProject& project, const DispatchOptions& options,
                           const std::string& run_id) {
  SpawnSpec spec;
  const fs::path exe = options.executable.empty() ? fs::read_symlink("/proc/self/exe")
                                                  : fs::absolute(options.executable);
  spec.argv = {exe.string(), "_run", "--project-dir", fs::absolute(options.project_dir).string(),
               "--cache-dir", fs::absolute(options.cache_dir).string(), "--run-id", run_id};
  if (options.expected_fingerprint) {
    spec.argv.insert(spec.argv.end(), {"--fingerprint", *options.expected_fingerprint});
  }
  if (options.resume_from) {
    spec.argv.insert(spec.argv.end(), {"--resume", fs::absolute(*options.resume_from).string()});
  }
  spec.env = options.env;
  const auto& token = project.config.hub.token;
  if (token && !token->value.empty()) spec.env[kChildTokenEnv] = token->value;
  spec.workdir = options.project_dir;
  spec.expected_artifacts = {"events.jsonl", "run.log", "config.canonical.yml",
                             "artifact/model.bin", "artifact/metadata.json"};
  return spec;
}

std::string docker_command(const std::string& runtime, const DispatchOptions& options,
                           const std::string& run_id) {
  const std::string image = options.docker_image.empty() ? kDefaultDockerImage
                                                         : options.docker_image;
  std::string cmd = runtime + " pull " + ShellQuote(image) + " && " + runtime + " run --rm" +
                    " -v " + ShellQuote(fs::absolute(options.project_dir).string() +
                                        ":/workspace/project") +
                    " -v " + ShellQuote(fs::absolute(options.cache_dir).string() + ":/cache");
  for (const char* name : {"HF_USERNAME", "HF_TOKEN", "HUB_ENDPOINT", kChildTokenEnv}) {
    cmd += " -e " + std::string(name);
  }
  cmd += " " + ShellQuote(image) +
         " trainforge _run --project-dir /workspace/project --cache-dir /cache --run-id " +
         ShellQuote(run_id);
  return cmd;
}

RunHandle dispatch(const ValidatedProject& project, const DispatchOptions& options) {
  auto s = std::make_shared<State>();
  s->run_id = options.run_id.empty() ? new_run_id() : options.run_id;
  s->backend = project.config.backend;
  s->mode = options.local_mode;
  s->project_dir = options.project_dir;
  s->grace = options.stop_grace;
  s->on_finish = options.on_finish;

  if (project.config.backend == BackendKind::kSpacesStub) {
    s->status = RunStatus::kFailed;
    s->error = "NotSupported: the spaces backend is a placeholder; use local or docker";
    return RunHandle(s);
  }

  const bool in_process =
      project.config.backend == BackendKind::kLocal && options.local_mode == LocalMode::kInProcess;
  const TrainerBindings reference = TrainerBindings::with_reference_trainers();
  const TrainerBindings& bindings =
      in_process && options.bindings ? *options.bindings : reference;
  // Unbound tasks fail here, before any lock or process exists.
  bindings.create(*project.spec);

  write_canonical_config(project.config, options.project_dir);

  if (project.config.backend == BackendKind::kDocker) {
    const auto runtime = options.docker_execute ? FindRuntime(options.env) : std::nullopt;
    s->command = docker_command(runtime.value_or("docker"), options, s->run_id);
    if (!runtime) {
      s->dry_run = true;
      return RunHandle(s);
    }
    acquire_project_lock(options.project_dir, s->run_id, ::getpid());
    SpawnSpec spec;
    spec.argv = {"/bin/sh", "-c", s->command};
    spec.env = options.env;
    const auto& token = project.config.hub.token;
    if (token && !token->value.empty()) spec.env[kChildTokenEnv] = token->value;
    pid_t pid = -1;
    try {
      pid = Spawn(spec, options.project_dir / "run.log");
    } catch (...) {
      release_project_lock(options.project_dir, s->run_id);
      throw;
    }
    RewriteLockPid(options.project_dir, s->run_id, pid);
    {
      std::lock_guard lock(s->mu);
      s->pid = pid;
      s->status = RunStatus::kRunning;
    }
    std::thread([s, pid] { SuperviseChild(s, pid); }).detach();
    return RunHandle(s);
  }

  acquire_project_lock(options.project_dir, s->run_id, ::getpid());
  if (in_process) {
    s->command = "in-process";
    {
      std::lock_guard lock(s->mu);
      s->status = RunStatus::kRunning;
    }
    ProjectRunOptions run;
    run.project_dir = options.project_dir;
    run.cache_dir = options.cache_dir;
    run.run_id = s->run_id;
    run.resume_from = options.resume_from;
    run.expected_fingerprint = options.expected_fingerprint;
    run.hub = HubOptions::from_env(options.env);
    std::thread([s, project, run, bindings = bindings]() mutable {
      run.bindings = &bindings;
      run.stop = &s->stop_requested;
      try {
        const ProjectRunResult r = run_project(project, run);
        Finish(s, r.artifact.outcome == RunOutcome::kStopped ? RunStatus::kStopped
                                                              : RunStatus::kSucceeded);
      } catch (const std::exception& e) {
        Finish(s, RunStatus::kFailed, e.what());
      }
    }).detach();
    return RunHandle(s);
  }

  const SpawnSpec spec = child_spawn_spec(project, options, s->run_id);
  s->command = Join(spec.argv);
  pid_t pid = -1;
  try {
    pid = Spawn(spec, options.project_dir / "run.log");
  } catch (...) {
    release_project_lock(options.project_dir, s->run_id);
    throw;
  }
  RewriteLockPid(options.project_dir, s->run_id, pid);
  {
    std::lock_guard lock(s->mu);
    s->pid = pid;
    s->status = RunStatus::kRunning;
  }
  std::thread([s, pid] { SuperviseChild(s, pid); }).detach();
  return RunHandle(s);
}

RunHandle stop(const RunHandle& handle) {
  const auto& s = handle.state();
  std::optional<pid_t> pid;
  {
    std::unique_lock lock(s->mu);
    if (is_terminal(s->status)) {
      throw Error(ErrorCode::kAlreadyTerminal,
                  s->run_id + " is already " + std::string(run_status_name(s->status)));
    }
    if (s->dry_run) {
      s->status = RunStatus::kStopped;
      lock.unlock();
      s->cv.notify_all();
      return handle;
    }
    pid = s->pid;
  }
  s->stop_requested = true;
  if (pid) ::kill(*pid, SIGTERM);
  if (!handle.wait_for(s->grace) && pid) {
    ::kill(*pid, SIGKILL);
  }
  handle.wait();
  return handle;
}

}  // namespace trainforge
