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

#include <gtest/gtest.h>

#include <signal.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include "test_support.hpp"
#include "trainforge/dispatch.hpp"
#include "trainforge/error.hpp"

namespace trainforge {
namespace {

namespace fs = std::filesystem;
using namespace std::chrono_literals;
using testing::TempDir;

ValidatedProject Project(const fs::path& data, const std::string& backend = "local",
                         int epochs = 1) {
  return validate_config(parse_config(
      "task: text-classification\nbase_model: none\nproject_name: disp\nbackend: " + backend +
          "\ndata:\n  path: " + data.string() +
          "\n  train_split: train\n  column_mapping:\n    text_column: text\n"
          "    target_column: label\nparams:\n  epochs: " + std::to_string(epochs) +
          "\n  batch_size: 1\n  hash_dim: 64\n",
      {}));
}

DispatchOptions Options(const TempDir& d, LocalMode mode = LocalMode::kInProcess) {
  DispatchOptions o;
  o.project_dir = d / "disp";
  o.cache_dir = d / "cache";
  o.local_mode = mode;
  o.executable = TRAINFORGE_EXE;
  o.stop_grace = 5000ms;
  return o;
}

std::string LastStatus(const fs::path& events) {
  std::string last;
  for (const auto& e : tail(events, 0).events) {
    if (e.name == kStatusEvent) last = std::get<std::string>(e.value);
  }
  return last;
}

TEST(Lock, ExclusiveAndStaleReclaim) {
  TempDir d;
  acquire_project_lock(d.path(), "r1", ::getpid());
  EXPECT_EQ(testing::read_file(d / ".lock"), "r1\n" + std::to_string(::getpid()) + "\n");
  try {
    acquire_project_lock(d.path(), "r2", ::getpid());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBackendUnavailable);
    EXPECT_NE(std::string(e.what()).find("locked"), std::string::npos);
  }
  release_project_lock(d.path(), "r2");
  EXPECT_TRUE(fs::exists(d / ".lock"));
  release_project_lock(d.path(), "r1");
  EXPECT_FALSE(fs::exists(d / ".lock"));

  const pid_t child = ::fork();
  if (child == 0) ::_exit(0);
  ::waitpid(child, nullptr, 0);
  acquire_project_lock(d.path(), "dead", child);
  EXPECT_NO_THROW(acquire_project_lock(d.path(), "alive", ::getpid()));
}

TEST(Dispatch, InProcessSucceeds) {
  TempDir d;
  testing::write_file(d / "train.csv", testing::separable_csv(16));
  auto h = dispatch(Project(d / "train.csv"), Options(d));
  EXPECT_EQ(h.wait(), RunStatus::kSucceeded);
  EXPECT_GT(fs::file_size(d / "disp/events.jsonl"), 0u);
  EXPECT_EQ(LastStatus(d / "disp/events.jsonl"), "succeeded");
  EXPECT_FALSE(fs::exists(d / "disp/.lock"));
  EXPECT_TRUE(fs::exists(d / "disp/config.canonical.yml"));
  try {
    stop(h);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kAlreadyTerminal);
  }
}

TEST(Dispatch, SubprocessSucceeds) {
  TempDir d;
  testing::write_file(d / "train.csv", testing::separable_csv(16));
  auto h = dispatch(Project(d / "train.csv"), Options(d, LocalMode::kSubprocess));
  ASSERT_TRUE(h.pid().has_value());
  EXPECT_EQ(h.wait(), RunStatus::kSucceeded) << h.error();
  EXPECT_EQ(LastStatus(d / "disp/events.jsonl"), "succeeded");
  EXPECT_TRUE(fs::exists(d / "disp/artifact/model.bin"));
  EXPECT_FALSE(fs::exists(d / "disp/.lock"));
}

TEST(Dispatch, ChildCrashIsFailedWithFinalEvent) {
  TempDir d;
  testing::write_file(d / "train.csv", testing::separable_csv(16));
  testing::write_file(d / "crash.sh", "#!/bin/sh\nexit 3\n");
  ::chmod((d / "crash.sh").c_str(), 0755);
  auto o = Options(d, LocalMode::kSubprocess);
  o.executable = d / "crash.sh";
  auto h = dispatch(Project(d / "train.csv"), o);
  EXPECT_EQ(h.wait(), RunStatus::kFailed);
  EXPECT_EQ(LastStatus(d / "disp/events.jsonl"), "failed");
}

TEST(Dispatch, SecondDispatchIsLocked) {
  TempDir d;
  testing::write_file(d / "train.csv", testing::separable_csv(400));
  const auto p = Project(d / "train.csv", "local", 200);
  auto h = dispatch(p, Options(d));
  try {
    dispatch(p, Options(d));
    ADD_FAILURE() << "second dispatch was not rejected";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBackendUnavailable);
  }
  stop(h);
}

TEST(Dispatch, StopInProcessAndResume) {
  TempDir d;
  testing::write_file(d / "train.csv", testing::separable_csv(400));
  const auto p = Project(d / "train.csv", "local", 200);
  auto h = dispatch(p, Options(d));
  std::this_thread::sleep_for(200ms);
  const auto t0 = std::chrono::steady_clock::now();
  stop(h);
  EXPECT_LT(std::chrono::steady_clock::now() - t0, 10s);
  EXPECT_EQ(h.status(), RunStatus::kStopped);
  EXPECT_EQ(LastStatus(d / "disp/events.jsonl"), "stopped");
  ASSERT_TRUE(fs::exists(d / "disp/checkpoints"));

  auto o = Options(d);
  o.resume_from = d / "disp/checkpoints";
  auto again = dispatch(p, o);
  std::this_thread::sleep_for(100ms);
  stop(again);
  std::int64_t first_step = -1;
  std::string run;
  for (const auto& e : tail(d / "disp/events.jsonl", 0).events) {
    if (e.run_id == again.run_id() && e.name == "loss" && first_step < 0) first_step = e.step;
  }
  EXPECT_GT(first_step, 1);
}

TEST(Dispatch, StopSubprocess) {
  TempDir d;
  testing::write_file(d / "train.csv", testing::separable_csv(400));
  auto h = dispatch(Project(d / "train.csv", "local", 10000), Options(d, LocalMode::kSubprocess));
  std::this_thread::sleep_for(500ms);
  const auto t0 = std::chrono::steady_clock::now();
  stop(h);
  EXPECT_LT(std::chrono::steady_clock::now() - t0, 10s);
  EXPECT_EQ(h.status(), RunStatus::kStopped);
  EXPECT_EQ(LastStatus(d / "disp/events.jsonl"), "stopped");
}

TEST(Dispatch, DockerWithoutRuntimeIsDryRun) {
  TempDir d;
  testing::write_file(d / "train.csv", testing::separable_csv(16));
  auto o = Options(d);
  o.env = {{"PATH", (d / "empty-bin").string()}};
  o.docker_image = "example/trainer:latest";
  auto h = dispatch(Project(d / "train.csv", "docker"), o);
  EXPECT_TRUE(h.dry_run());
  EXPECT_EQ(h.status(), RunStatus::kQueued);
  EXPECT_EQ(h.wait(), RunStatus::kQueued);
  EXPECT_NE(h.command().find("docker pull 'example/trainer:latest'"), std::string::npos);
  EXPECT_NE(h.command().find(fs::absolute(d / "disp").string()), std::string::npos);
  EXPECT_NE(h.command().find("_run"), std::string::npos);
  stop(h);
  EXPECT_EQ(h.status(), RunStatus::kStopped);
}

TEST(Dispatch, DockerRuntimeOnPathIsExecuted) {
  TempDir d;
  testing::write_file(d / "train.csv", testing::separable_csv(16));
  testing::write_file(d / "bin/docker", "#!/bin/sh\necho \"$@\" >> \"" + (d / "calls").string() + "\"\n");
  ::chmod((d / "bin/docker").c_str(), 0755);
  auto o = Options(d);
  o.env = {{"PATH", (d / "bin").string()}};
  auto h = dispatch(Project(d / "train.csv", "docker"), o);
  EXPECT_FALSE(h.dry_run());
  h.wait();
  const std::string calls = testing::read_file(d / "calls");
  EXPECT_NE(calls.find("pull trainforge/trainforge:latest"), std::string::npos);
  EXPECT_NE(calls.find("run --rm"), std::string::npos);
}

TEST(Dispatch, SpacesStubFails) {
  TempDir d;
  testing::write_file(d / "train.csv", testing::separable_csv(16));
  auto h = dispatch(Project(d / "train.csv", "spaces-stub"), Options(d));
  EXPECT_EQ(h.status(), RunStatus::kFailed);
  EXPECT_EQ(h.error().rfind("NotSupported", 0), 0u);
}

TEST(Dispatch, UnboundTaskRejectedUpFront) {
  TempDir d;
  auto p = validate_config(parse_config(testing::kOrpoListing, {{"HF_USERNAME", "u"}, {"HF_TOKEN", "t"}}));
  try {
    dispatch(p, Options(d));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTrainerUnbound);
  }
  EXPECT_FALSE(fs::exists(d / "disp/.lock"));
}

TEST(RunStatusNames, Terminality) {
  EXPECT_FALSE(is_terminal(RunStatus::kQueued));
  EXPECT_FALSE(is_terminal(RunStatus::kRunning));
  EXPECT_TRUE(is_terminal(RunStatus::kSucceeded));
  EXPECT_TRUE(is_terminal(RunStatus::kFailed));
  EXPECT_TRUE(is_terminal(RunStatus::kStopped));
  EXPECT_EQ(run_status_name(RunStatus::kStopped), "stopped");
}

}  // namespace
}  // namespace trainforge
