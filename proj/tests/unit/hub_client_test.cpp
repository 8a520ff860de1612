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

#include "test_support.hpp"
#include "trainforge/error.hpp"
#include "trainforge/hub_client.hpp"
#include "trainforge/pipeline.hpp"
#include "trainforge/trainer.hpp"

namespace trainforge {
namespace {

namespace fs = std::filesystem;
using testing::MockHub;
using testing::TempDir;

HubOptions Fast(const MockHub& hub) {
  HubOptions o;
  o.endpoint = hub.endpoint();
  o.backoff_base = std::chrono::milliseconds(1);
  o.timeout = std::chrono::seconds(5);
  return o;
}

ErrorCode CodeOf(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kIoError;
}

// Trains a tiny project into dir so there is an artifact to push.
void TrainInto(const fs::path& dir) {
  const auto project = testing::make_project(
      "text-classification", {{"epochs", std::int64_t{1}}, {"hash_dim", std::int64_t{64}}});
  MemorySink sink;
  RunOptions o;
  o.project_dir = dir;
  run_training(project, testing::make_processed(project, testing::separable_records(8)),
               TrainerBindings::with_reference_trainers(), sink, o);
}

TEST(HubPull, MaterializesAndIsIdempotent) {
  MockHub hub;
  hub.add_file("datasets", "HuggingFaceH4/no_robots", "train.jsonl", "{\"a\":1}\n");
  hub.add_file("datasets", "HuggingFaceH4/no_robots", "sub/valid.jsonl", "{\"a\":2}\n");
  HubClient client(Fast(hub));
  TempDir d;
  const HubRef ref{"HuggingFaceH4/no_robots", RepoKind::kDataset, std::nullopt};
  const fs::path root = client.pull(ref, d.path());
  EXPECT_EQ(testing::read_file(root / "train.jsonl"), "{\"a\":1}\n");
  EXPECT_EQ(testing::read_file(root / "sub/valid.jsonl"), "{\"a\":2}\n");
  EXPECT_EQ(hub.downloads(), 2);
  client.pull(ref, d.path());
  EXPECT_EQ(hub.downloads(), 2);
  hub.set_revision("r2");
  client.pull(ref, d.path());
  EXPECT_EQ(hub.downloads(), 4);  // new revision, files refetched
  hub.add_file("datasets", "HuggingFaceH4/no_robots", "train.jsonl", "{\"a\":3}\n");
  hub.set_revision("r3");
  client.pull(ref, d.path());
  EXPECT_EQ(testing::read_file(root / "train.jsonl"), "{\"a\":3}\n");
}

TEST(HubPull, NotFoundAndRetries) {
  MockHub hub;
  HubClient client(Fast(hub));
  TempDir d;
  EXPECT_EQ(CodeOf([&] { client.pull({"nobody/nothing", RepoKind::kModel, {}}, d.path()); }),
            ErrorCode::kNotFound);
  hub.add_file("models", "a/b", "x.bin", "x");
  hub.fail_next(2);
  EXPECT_NO_THROW(client.pull({"a/b", RepoKind::kModel, {}}, d.path()));
  hub.fail_next(100);
  TempDir d2;
  EXPECT_EQ(CodeOf([&] { client.pull({"a/b", RepoKind::kModel, {}}, d2.path()); }),
            ErrorCode::kNetworkError);
}

TEST(HubPush, ManifestAndAuth) {
  MockHub hub;
  hub.require_token("tok-XYZ");
  TempDir d;
  TrainInto(d.path());
  HubClient client(Fast(hub));
  const HubRef ref{"alice/tiny", RepoKind::kModel, {}};
  EXPECT_EQ(CodeOf([&] { client.push_artifact(d.path(), ref, ""); }), ErrorCode::kAuthRequired);
  EXPECT_TRUE(hub.seen_tokens().empty());
  EXPECT_EQ(CodeOf([&] { client.push_artifact(d.path(), ref, "wrong"); }), ErrorCode::kAuthRequired);
  const std::string url = client.push_artifact(d.path(), ref, "tok-XYZ");
  EXPECT_EQ(url, hub.endpoint() + "/alice/tiny");
  const auto files = hub.repo_files("models", "alice/tiny");
  std::set<std::string> names;
  for (const auto& [n, _] : files) names.insert(n);
  EXPECT_EQ(names, (std::set<std::string>{"model.bin", "metadata.json", "README.md"}));
  EXPECT_EQ(files.at("model.bin"), testing::read_file(d / "artifact/model.bin"));
  const auto before = hub.repo_files("models", "alice/tiny");
  client.push_artifact(d.path(), ref, "tok-XYZ");
  EXPECT_EQ(hub.repo_files("models", "alice/tiny"), before);
  EXPECT_TRUE(testing::files_containing(d.path(), "tok-XYZ").empty());
}

TEST(HubPush, ResumesFromPushState) {
  MockHub hub;
  TempDir d;
  TrainInto(d.path());
  testing::write_file(d / ".push-state.json",
                      R"({"repo_id":"alice/tiny","uploaded":["model.bin"]})");
  HubClient client(Fast(hub));
  client.push_artifact(d.path(), {"alice/tiny", RepoKind::kModel, {}}, "t");
  EXPECT_EQ(hub.uploads(), 2);
  EXPECT_FALSE(fs::exists(d / ".push-state.json"));
}

std::string PushConfig(const fs::path& data, bool push) {
  return "task: text-classification\nbase_model: none\nproject_name: pushy\n"
         "data:\n  path: " + data.string() + "\n  train_split: train\n"
         "  column_mapping:\n    text_column: text\n    target_column: label\n"
         "params:\n  epochs: 1\n  hash_dim: 64\n"
         "hub:\n  username: ${HF_USERNAME}\n  token: ${HF_TOKEN}\n  push_to_hub: " +
         (push ? "true" : "false") + "\n";
}

TEST(HubPush, ProjectRunPushesAndNeverWritesToken) {
  MockHub hub;
  const std::string token = "hf_TOKEN_never_written_9f3a";
  hub.require_token(token);
  TempDir d;
  testing::write_file(d / "train.csv", testing::separable_csv(12));
  const Env env = {{"HF_USERNAME", "alice"}, {"HF_TOKEN", token}};
  const auto project = validate_config(parse_config(PushConfig(d / "train.csv", true), env));
  ProjectRunOptions o;
  o.project_dir = d / "pushy";
  o.cache_dir = d / "cache";
  o.hub = Fast(hub);
  const auto r = run_project(project, o);
  ASSERT_TRUE(r.pushed_url.has_value());
  EXPECT_EQ(hub.repo_files("models", "alice/pushy").size(), 3u);
  EXPECT_TRUE(testing::files_containing(d.path(), token).empty());
  bool pushed_event = false;
  for (const auto& e : tail(d / "pushy/events.jsonl", 0).events) pushed_event |= e.name == "pushed";
  EXPECT_TRUE(pushed_event);
}

TEST(HubPush, PushDisabledNeverCallsHub) {
  MockHub hub;
  TempDir d;
  testing::write_file(d / "train.csv", testing::separable_csv(12));
  const Env env = {{"HF_USERNAME", "alice"}, {"HF_TOKEN", "t"}};
  const auto project = validate_config(parse_config(PushConfig(d / "train.csv", false), env));
  ProjectRunOptions o;
  o.project_dir = d / "pushy";
  o.cache_dir = d / "cache";
  o.hub = Fast(hub);
  const auto r = run_project(project, o);
  EXPECT_FALSE(r.pushed_url.has_value());
  EXPECT_EQ(hub.uploads(), 0);
  EXPECT_TRUE(hub.seen_tokens().empty());
}

TEST(HubRef, RepoIds) {
  EXPECT_TRUE(HubRef::is_valid_repo_id("HuggingFaceH4/no_robots"));
  EXPECT_FALSE(HubRef::is_valid_repo_id("no_slash"));
  EXPECT_FALSE(HubRef::is_valid_repo_id("a/b/c"));
  EXPECT_EQ(HubOptions::from_env({{"HUB_ENDPOINT", "http://x"}}).endpoint, "http://x");
}

}  // namespace
}  // namespace trainforge
