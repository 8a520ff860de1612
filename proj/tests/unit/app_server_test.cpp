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

#include "api_fuzz.hpp"
#include "test_support.hpp"
#include "trainforge/app_server.hpp"
#include "trainforge/cli.hpp"

namespace trainforge {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace std::chrono_literals;
using testing::ApiClient;
using testing::TempDir;

class AppServerTest : public ::testing::Test {
 protected:
  void SetUp() override { Start(); }

  void Start(std::optional<std::string> token = std::nullopt) {
    AppOptions o;
    o.workdir = dir_ / "work";
    o.cache_dir = dir_ / "cache";
    o.local_mode = LocalMode::kInProcess;
    o.long_poll = 200ms;
    o.stop_grace = 2000ms;
    o.api_token = token;
    fs::create_directories(o.workdir);
    server_ = std::make_unique<AppServer>(o);
    port_ = server_->bind("127.0.0.1", 0);
    server_->start();
    api_ = std::make_unique<ApiClient>(port_, token);
  }

  void Restart(std::optional<std::string> token = std::nullopt) {
    api_.reset();
    server_.reset();
    Start(token);
  }

  std::string Create(const std::string& name, int epochs = 2) {
    const auto r = api_->post("/api/projects", {{"config", testing::tiny_text_config(name, epochs)}});
    EXPECT_EQ(r.status, 201) << r.raw;
    return r.body.value("id", "");
  }

  std::string State(const std::string& id) {
    return api_->get("/api/projects/" + id).body.value("state", "");
  }

  // Polls logs until the run is terminal; returns every event seen.
  std::vector<json> Drain(const std::string& id) {
    std::vector<json> events;
    std::uint64_t cursor = 0;
    for (int i = 0; i < 500; ++i) {
      const auto r = api_->get("/api/projects/" + id + "/logs?cursor=" + std::to_string(cursor));
      EXPECT_EQ(r.status, 200) << r.raw;
      for (const auto& e : r.body["events"]) events.push_back(e);
      cursor = r.body["cursor"].get<std::uint64_t>();
      const std::string st = r.body["state"];
      if (st != "running" && r.body["events"].empty()) break;
    }
    return events;
  }

  TempDir dir_;
  std::unique_ptr<AppServer> server_;
  std::unique_ptr<ApiClient> api_;
  int port_ = 0;
};

TEST_F(AppServerTest, HealthAndTasks) {
  EXPECT_EQ(api_->get("/api/health").status, 200);
  const auto tasks = api_->get("/api/tasks");
  ASSERT_EQ(tasks.status, 200);
  EXPECT_EQ(tasks.body.size(), 22u);
  const auto params = api_->get("/api/tasks/text-classification/params");
  ASSERT_EQ(params.status, 200);
  bool found = false;
  for (const auto& p : params.body["params"]) {
    if (p["name"] == "epochs") {
      found = true;
      EXPECT_EQ(p["default"], 3);
    }
  }
  EXPECT_TRUE(found);
  const auto nope = api_->get("/api/tasks/nope/params");
  EXPECT_EQ(nope.status, 404);
  EXPECT_TRUE(nope.body.contains("error"));
  EXPECT_TRUE(nope.body.contains("detail"));
}

TEST_F(AppServerTest, CreateRules) {
  const std::string id = Create("alpha");
  EXPECT_EQ(id.size(), 36u);
  EXPECT_EQ(State(id), "created");
  const auto dup = api_->post("/api/projects", {{"config", testing::tiny_text_config("alpha")}});
  EXPECT_EQ(dup.status, 409);
  const auto bad = api_->post("/api/projects", {{"config", "task: nope\nbase_model: x\nproject_name: b\n"
                                                           "data:\n  path: x\n  train_split: train\n"}});
  EXPECT_EQ(bad.status, 422);
  EXPECT_EQ(bad.body["error_key_path"], "task");
  EXPECT_EQ(bad.body["error"], "UnknownTask");
  EXPECT_EQ(api_->post_raw("/api/projects", "{oops", "application/json").status, 400);
  EXPECT_EQ(api_->get("/api/projects/unknown").status, 404);
  EXPECT_EQ(api_->get("/api/projects").body.size(), 1u);
}

TEST_F(AppServerTest, UploadRules) {
  const std::string id = Create("up");
  const auto r1 = api_->upload("/api/projects/" + id + "/dataset", "train.csv",
                               "text,label\na x,A\nb y,B\nc x,A\nd y,B\n");
  ASSERT_EQ(r1.status, 200) << r1.raw;
  EXPECT_EQ(r1.body["rows"], 4);
  EXPECT_EQ(State(id), "data_ready");
  const auto r2 = api_->upload("/api/projects/" + id + "/dataset", "train.csv",
                               "text,label\na x,A\nb y,B\nc x,A\nd y,B\n");
  EXPECT_EQ(r2.body["fingerprint"], r1.body["fingerprint"]);
  EXPECT_EQ(api_->upload("/api/projects/" + id + "/dataset", "train.txt", "x").status, 415);
  EXPECT_EQ(api_->upload("/api/projects/nope/dataset", "train.csv", "a\n1\n").status, 404);
}

TEST_F(AppServerTest, StartPollStop) {
  const std::string id = Create("run", 2);
  EXPECT_EQ(api_->post("/api/projects/" + id + "/stop", json::object()).status, 409);
  api_->upload("/api/projects/" + id + "/dataset", "train.csv", testing::separable_csv(40));
  const auto start = api_->post("/api/projects/" + id + "/start", json::object());
  ASSERT_EQ(start.status, 202) << start.raw;
  const auto events = Drain(id);
  ASSERT_FALSE(events.empty());
  EXPECT_EQ(events.back()["name"], "status");
  EXPECT_EQ(events.back()["value"], "succeeded");
  EXPECT_EQ(State(id), "succeeded");
  const auto again = api_->post("/api/projects/" + id + "/start", json::object());
  EXPECT_EQ(again.status, 409);
  const auto end = api_->get("/api/projects/" + id + "/logs?cursor=" +
                             std::to_string(fs::file_size(dir_ / "work/run/events.jsonl")));
  EXPECT_TRUE(end.body["events"].empty());
  EXPECT_EQ(api_->get("/api/projects/nope/logs?cursor=0").status, 404);
}

TEST_F(AppServerTest, StopRunningThenResume) {
  const auto r = api_->post("/api/projects",
                            {{"config", testing::tiny_text_config("long", 10000)}});
  const std::string id = r.body["id"];
  api_->upload("/api/projects/" + id + "/dataset", "train.csv", testing::separable_csv(200));
  ASSERT_EQ(api_->post("/api/projects/" + id + "/start", json::object()).status, 202);
  EXPECT_EQ(api_->post("/api/projects/" + id + "/start", json::object()).status, 409);
  std::this_thread::sleep_for(200ms);
  ASSERT_EQ(api_->post("/api/projects/" + id + "/stop", json::object()).status, 200);
  EXPECT_EQ(State(id), "stopped");
  EXPECT_EQ(api_->post("/api/projects/" + id + "/stop", json::object()).status, 409);
  ASSERT_EQ(api_->post("/api/projects/" + id + "/start", json::object()).status, 202);
  std::this_thread::sleep_for(100ms);
  api_->post("/api/projects/" + id + "/stop", json::object());
  EXPECT_EQ(State(id), "stopped");
}

TEST_F(AppServerTest, JournalReplay) {
  const std::string id = Create("persist");
  api_->upload("/api/projects/" + id + "/dataset", "train.csv", testing::separable_csv(8));
  Restart();
  EXPECT_EQ(State(id), "data_ready");
  EXPECT_EQ(api_->post("/api/projects", {{"config", testing::tiny_text_config("persist")}}).status, 409);
}

TEST_F(AppServerTest, BearerToken) {
  Restart("sekrit");
  ApiClient anon(port_);
  EXPECT_EQ(anon.get("/api/health").status, 200);
  const auto denied = anon.get("/api/tasks");
  EXPECT_EQ(denied.status, 401);
  EXPECT_TRUE(denied.body.contains("detail"));
  EXPECT_EQ(api_->get("/api/tasks").status, 200);
}

TEST_F(AppServerTest, HttpAndCliProduceSameEvents) {
  const std::string csv = testing::separable_csv(24);
  const std::string id = Create("same", 2);
  api_->upload("/api/projects/" + id + "/dataset", "train.csv", csv);
  api_->post("/api/projects/" + id + "/start", json::object());
  Drain(id);

  TempDir cli;
  testing::write_file(cli / "train.csv", csv);
  testing::write_file(cli / "config.yml", testing::tiny_text_config("same", 2));
  std::ostringstream out, err;
  CommandOptions o;
  o.mode = LocalMode::kInProcess;
  o.cache_dir = cli / "cache";
  o.workdir = cli.path();
  o.out = &out;
  o.err = &err;
  ASSERT_EQ(cmd_config(cli / "config.yml", o), kExitOk) << err.str();

  auto normalized = [](const fs::path& p) {
    std::vector<std::string> lines;
    for (auto e : tail(p, 0).events) {
      e.ts = 0;
      e.run_id.clear();
      lines.push_back(event_to_json_line(e));
    }
    return lines;
  };
  EXPECT_EQ(normalized(dir_ / "work/same/events.jsonl"), normalized(cli / "same/events.jsonl"));
}

TEST(AppServerFuzz, RandomSequencesStayLegal) {
  const auto report = testing::run_api_fuzz(150, 99);
  EXPECT_EQ(report.sequences, 150);
  EXPECT_EQ(report.server_errors, 0);
  EXPECT_EQ(report.illegal_transitions, 0);
  EXPECT_EQ(report.malformed_errors, 0);
  for (const auto& f : report.findings) ADD_FAILURE() << f;
}

TEST(ProjectStates, DeclaredEdges) {
  using S = ProjectState;
  EXPECT_TRUE(is_legal_transition(S::kCreated, S::kDataReady));
  EXPECT_TRUE(is_legal_transition(S::kDataReady, S::kRunning));
  EXPECT_TRUE(is_legal_transition(S::kRunning, S::kStopped));
  EXPECT_TRUE(is_legal_transition(S::kFailed, S::kRunning));
  EXPECT_FALSE(is_legal_transition(S::kSucceeded, S::kRunning));
  EXPECT_FALSE(is_legal_transition(S::kCreated, S::kSucceeded));
  EXPECT_FALSE(is_legal_transition(S::kRunning, S::kDataReady));
  for (S s : {S::kCreated, S::kDataReady, S::kRunning, S::kSucceeded, S::kFailed, S::kStopped}) {
    EXPECT_EQ(parse_project_state(project_state_name(s)), s);
  }
}

}  // namespace
}  // namespace trainforge
