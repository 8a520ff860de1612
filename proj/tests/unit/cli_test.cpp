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

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <sstream>

#include "test_support.hpp"
#include "trainforge/cli.hpp"
#include "trainforge/error.hpp"

extern char** environ;

namespace trainforge {
namespace {

namespace fs = std::filesystem;
using namespace std::chrono_literals;
using testing::TempDir;

struct Child {
  pid_t pid = -1;
  int out_fd = -1;
};

Child Spawn(const std::vector<std::string>& args, const fs::path& cwd) {
  int fds[2];
  if (::pipe(fds) != 0) throw std::runtime_error("pipe");
  posix_spawn_file_actions_t fa;
  posix_spawn_file_actions_init(&fa);
  posix_spawn_file_actions_adddup2(&fa, fds[1], 1);
  posix_spawn_file_actions_addclose(&fa, fds[0]);
  posix_spawn_file_actions_addclose(&fa, fds[1]);
  posix_spawn_file_actions_addchdir_np(&fa, cwd.c_str());
  std::vector<char*> argv;
  for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);
  Child c;
  if (posix_spawn(&c.pid, argv[0], &fa, nullptr, argv.data(), environ) != 0) {
    throw std::runtime_error("spawn");
  }
  posix_spawn_file_actions_destroy(&fa);
  ::close(fds[1]);
  c.out_fd = fds[0];
  return c;
}

std::string ReadLine(int fd) {
  std::string line;
  char ch;
  while (::read(fd, &ch, 1) == 1 && ch != '\n') line.push_back(ch);
  return line;
}

int Wait(pid_t pid) {
  int status = 0;
  ::waitpid(pid, &status, 0);
  return WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
}

// Runs the binary to completion; returns {exit code, stdout}.
std::pair<int, std::string> RunExe(const std::vector<std::string>& args, const fs::path& cwd) {
  std::vector<std::string> full = {TRAINFORGE_EXE};
  full.insert(full.end(), args.begin(), args.end());
  Child c = Spawn(full, cwd);
  std::string out;
  char buf[4096];
  ssize_t n;
  while ((n = ::read(c.out_fd, buf, sizeof(buf))) > 0) out.append(buf, static_cast<std::size_t>(n));
  ::close(c.out_fd);
  return {Wait(c.pid), out};
}

CommandOptions InProcess(const TempDir& d, std::ostream& out, std::ostream& err) {
  CommandOptions o;
  o.mode = LocalMode::kInProcess;
  o.cache_dir = d / "cache";
  o.workdir = d.path();
  o.out = &out;
  o.err = &err;
  return o;
}

TEST(Cli, TasksList) {
  std::ostringstream out;
  EXPECT_EQ(cmd_tasks_list(out), kExitOk);
  std::vector<std::string> lines;
  std::istringstream in(out.str());
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  EXPECT_EQ(lines.size(), 22u);
  EXPECT_TRUE(std::is_sorted(lines.begin(), lines.end()));
  EXPECT_NE(std::find(lines.begin(), lines.end(), "llm:orpo"), lines.end());
}

TEST(Cli, TinyConfigInProcess) {
  TempDir d;
  testing::write_file(d / "train.csv", testing::separable_csv(40));
  testing::write_file(d / "config.yml", testing::tiny_text_config("tiny"));
  std::ostringstream out, err;
  EXPECT_EQ(cmd_config(d / "config.yml", InProcess(d, out, err)), kExitOk) << err.str();
  EXPECT_TRUE(fs::exists(d / "tiny/artifact/model.bin"));
  const auto summary = nlohmann::json::parse(out.str());
  EXPECT_EQ(summary["status"], "succeeded");
  EXPECT_NE(err.str().find("[train]"), std::string::npos);
}

TEST(Cli, ConfigErrorsExitThree) {
  TempDir d;
  testing::write_file(d / "config.yml", "task: nope\nbase_model: x\nproject_name: p\n"
                                        "data:\n  path: x\n  train_split: train\n");
  std::ostringstream out, err;
  EXPECT_EQ(cmd_config(d / "config.yml", InProcess(d, out, err)), kExitConfigError);
  EXPECT_NE(err.str().find("UnknownTask"), std::string::npos);
  EXPECT_NE(err.str().find("task"), std::string::npos);
  EXPECT_TRUE(out.str().empty());
  std::ostringstream out2, err2;
  EXPECT_EQ(cmd_config(d / "missing.yml", InProcess(d, out2, err2)), kExitConfigError);
}

TEST(Cli, MissingDataExitsOne) {
  TempDir d;
  testing::write_file(d / "config.yml", testing::tiny_text_config("tiny"));
  std::ostringstream out, err;
  EXPECT_EQ(cmd_config(d / "config.yml", InProcess(d, out, err)), kExitFailed);
  EXPECT_NE(err.str().find("FileMissing"), std::string::npos);
}

TEST(Cli, InterruptStopsRun) {
  TempDir d;
  testing::write_file(d / "train.csv", testing::separable_csv(400));
  testing::write_file(d / "config.yml",
                      testing::tiny_text_config("slow", 300).replace(
                          testing::tiny_text_config("slow", 300).find("batch_size: 8"), 13,
                          "batch_size: 1"));
  std::atomic<bool> interrupt{false};
  std::thread t([&] {
    std::this_thread::sleep_for(300ms);
    interrupt = true;
  });
  std::ostringstream out, err;
  auto o = InProcess(d, out, err);
  o.interrupt = &interrupt;
  EXPECT_EQ(cmd_config(d / "config.yml", o), kExitInterrupted);
  t.join();
}

// Stub llm:orpo adapter: a single scalar parameter.
class StubOrpo : public TrainerContract {
 public:
  void prepare(const ValidatedProject& p, const ProcessedDataset& d) override {
    seen_prompt_length = p.params.get_int("max_prompt_length");
    n_ = d.train.size();
  }
  std::size_t num_train_examples() const override { return n_; }
  std::vector<double> init_model(CounterRng) const override { return {1.0}; }
  double forward_backward(std::span<const double> p, std::span<const std::size_t>,
                          std::span<double> g) const override {
    g[0] = 2 * p[0];
    return p[0] * p[0];
  }
  bool has_valid() const override { return false; }
  MetricReport evaluate(std::span<const double> p, EvalSplit) const override {
    return {{{"loss", p[0] * p[0]}}, {}};
  }
  void export_artifact(std::span<const double> p, const fs::path& dir,
                       nlohmann::json&) const override {
    testing::write_file(dir / "model.bin", std::to_string(p[0]));
  }
  static inline std::int64_t seen_prompt_length = 0;

 private:
  std::size_t n_ = 0;
};

TEST(Cli, OrpoListingWithStubAdapterAndMockHub) {
  TempDir d;
  testing::MockHub hub;
  hub.require_token("hf_cli_token");
  std::string rows;
  for (int i = 0; i < 6; ++i) {
    rows += R"({"prompt":"p)" + std::to_string(i) + R"(","chosen":"c","rejected":"r"})" "\n";
  }
  hub.add_file("datasets", "HuggingFaceH4/no_robots", "train.jsonl", rows);
  testing::write_file(d / "config.yml", testing::kOrpoListing);
  std::ostringstream out, err;
  auto o = InProcess(d, out, err);
  o.env = {{"HF_USERNAME", "alice"}, {"HF_TOKEN", "hf_cli_token"}, {"HUB_ENDPOINT", hub.endpoint()}};
  TrainerBindings b = TrainerBindings::with_reference_trainers();
  b.bind_external_adapter(TaskId::parse("llm:orpo"),
                          [] { return TrainerHandle{std::make_shared<StubOrpo>()}; });
  o.bindings = b;
  EXPECT_EQ(cmd_config(d / "config.yml", o), kExitOk) << err.str();
  EXPECT_EQ(StubOrpo::seen_prompt_length, 512);
  EXPECT_EQ(hub.repo_files("models", "alice/autotrain-llama").size(), 3u);
  EXPECT_TRUE(testing::files_containing(d.path(), "hf_cli_token").empty());
}

TEST(CliBinary, TasksListUnderOneSecond) {
  TempDir d;
  const auto t0 = std::chrono::steady_clock::now();
  auto [code, out] = RunExe({"tasks", "list"}, d.path());
  EXPECT_LT(std::chrono::steady_clock::now() - t0, 1s);
  EXPECT_EQ(code, 0);
  EXPECT_EQ(std::count(out.begin(), out.end(), '\n'), 22);
}

TEST(CliBinary, ConfigRunAndExitCodes) {
  TempDir d;
  testing::write_file(d / "train.csv", testing::separable_csv(40));
  testing::write_file(d / "config.yml", testing::tiny_text_config("tiny"));
  auto [ok, out] = RunExe({"--config", "config.yml"}, d.path());
  EXPECT_EQ(ok, 0);
  EXPECT_NE(out.find("\"succeeded\""), std::string::npos);
  EXPECT_TRUE(fs::exists(d / "tiny/events.jsonl"));
  testing::write_file(d / "bad.yml", "task: nope\n");
  EXPECT_EQ(RunExe({"--config", "bad.yml"}, d.path()).first, 3);
  EXPECT_EQ(RunExe({"--bogus-flag"}, d.path()).first, 64);
}

TEST(CliBinary, AppPortZeroAndHealth) {
  TempDir d;
  Child c = Spawn({TRAINFORGE_EXE, "app", "--port", "0", "--workdir", d.path().string()}, d.path());
  const std::string line = ReadLine(c.out_fd);
  ASSERT_EQ(line.rfind("listening on http://", 0), 0u) << line;
  const int port = std::stoi(line.substr(line.rfind(':') + 1));
  testing::ApiClient api(port);
  EXPECT_EQ(api.get("/api/health").status, 200);
  ::kill(c.pid, SIGINT);
  EXPECT_EQ(Wait(c.pid), 0);
  ::close(c.out_fd);
}

TEST(CliBinary, PortInUseExitsTwo) {
  const int s = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  ASSERT_EQ(::bind(s, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)), 0);
  ASSERT_EQ(::listen(s, 1), 0);
  socklen_t len = sizeof(addr);
  ::getsockname(s, reinterpret_cast<sockaddr*>(&addr), &len);
  TempDir d;
  auto [code, out] = RunExe({"app", "--host", "127.0.0.1", "--port",
                          std::to_string(ntohs(addr.sin_port))}, d.path());
  EXPECT_EQ(code, 2);
  ::close(s);
}

}  // namespace
}  // namespace trainforge
