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

#include "api_fuzz.hpp"

#include <map>
#include <set>

#include "test_support.hpp"
#include "trainforge/app_server.hpp"
#include "trainforge/rng.hpp"

namespace trainforge::testing {
namespace {

using json = nlohmann::json;
using namespace std::chrono_literals;

// Lifecycle edges, written out independently of the server.
const std::map<std::string, std::set<std::string>> kEdges = {
    {"created", {"data_ready", "running"}},
    {"data_ready", {"data_ready", "running"}},
    {"running", {"succeeded", "failed", "stopped"}},
    {"failed", {"running"}},
    {"stopped", {"running"}},
    {"succeeded", {}},
};

// An observation may skip states that came and went between two polls.
bool Reachable(const std::string& from, const std::string& to) {
  if (from == to) return true;
  std::set<std::string> seen = {from};
  std::vector<std::string> frontier = {from};
  while (!frontier.empty()) {
    const std::string s = frontier.back();
    frontier.pop_back();
    auto it = kEdges.find(s);
    if (it == kEdges.end()) continue;
    for (const auto& n : it->second) {
      if (n == to) return true;
      if (seen.insert(n).second) frontier.push_back(n);
    }
  }
  return false;
}

std::string Config(const std::string& name, int epochs, int batch) {
  return "task: text-classification\nbase_model: none\nproject_name: " + name +
         "\ndata:\n  path: train.csv\n  train_split: train\n"
         "  column_mapping:\n    text_column: text\n    target_column: label\n"
         "params:\n  epochs: " + std::to_string(epochs) + "\n  batch_size: " +
         std::to_string(batch) + "\n  lr: 0.05\n  hash_dim: 64\n";
}

}  // namespace

FuzzReport run_api_fuzz(int sequences, std::uint64_t seed) {
  TempDir dir;
  AppOptions options;
  options.workdir = dir / "work";
  options.cache_dir = dir / "cache";
  options.local_mode = LocalMode::kInProcess;
  options.long_poll = 20ms;
  options.stop_grace = 2000ms;
  std::filesystem::create_directories(options.workdir);
  AppServer server(options);
  const int port = server.bind("127.0.0.1", 0);
  server.start();
  ApiClient api(port);

  const std::string small_csv = separable_csv(8, seed);
  const std::string big_csv = separable_csv(64, seed + 1);
  CounterRng rng(seed);
  FuzzReport report;

  auto note = [&](const std::string& what) {
    if (report.findings.size() < 10) report.findings.push_back(what);
  };
  auto check = [&](const HttpReply& r, const std::string& what) {
    ++report.requests;
    if (r.status >= 500 || r.status == 0) {
      ++report.server_errors;
      note(what + " -> HTTP " + std::to_string(r.status) + " " + r.raw);
    }
    if (r.status >= 400 && r.status < 600 &&
        !(r.body.is_object() && r.body.contains("error") && r.body.contains("detail"))) {
      ++report.malformed_errors;
      note(what + " -> error body " + r.raw);
    }
  };

  for (int seq = 0; seq < sequences; ++seq) {
    CounterRng srng = rng.split(static_cast<std::uint64_t>(seq));
    const std::string name = "fuzz-" + std::to_string(seq);
    std::string id = "no-such-project";
    std::string observed;
    const int ops = 3 + static_cast<int>(srng.below(6));

    auto observe = [&](const std::string& after) {
      if (observed.empty()) return;
      const HttpReply r = api.get("/api/projects/" + id);
      check(r, "GET project");
      if (r.status != 200) return;
      const std::string now = r.body.value("state", "");
      if (!Reachable(observed, now)) {
        ++report.illegal_transitions;
        note(name + ": " + observed + " -> " + now + " after " + after);
      }
      observed = now;
    };

    for (int k = 0; k < ops; ++k) {
      const auto op = srng.below(k == 0 ? 2 : 7);
      switch (op) {
        case 0: {  // create
          const bool slow = srng.below(5) == 0;
          const HttpReply r = api.post("/api/projects",
                                       {{"config", Config(name, slow ? 40 : 1 + static_cast<int>(srng.below(3)),
                                                          slow ? 1 : 2)}});
          check(r, "create");
          if (r.status == 201) {
            id = r.body.value("id", id);
            if (observed.empty()) observed = "created";
          }
          break;
        }
        case 1: {  // create with an invalid body
          const HttpReply r = srng.below(2) ? api.post_raw("/api/projects", "{oops", "application/json")
                                            : api.post("/api/projects", {{"config", "task: nope\n"}});
          check(r, "create invalid");
          break;
        }
        case 2: {  // upload
          const auto which = srng.below(4);
          const HttpReply r = which == 0   ? api.upload("/api/projects/" + id + "/dataset", "train.txt", "x")
                              : which == 1 ? api.upload("/api/projects/" + id + "/dataset", "train.csv", big_csv)
                                           : api.upload("/api/projects/" + id + "/dataset", "train.csv", small_csv);
          check(r, "upload");
          observe("upload");
          break;
        }
        case 3:
        case 4: {  // start
          const HttpReply r = api.post("/api/projects/" + id + "/start", json::object());
          check(r, "start");
          observe("start");
          if (r.status == 202 && observed == "data_ready") {
            ++report.illegal_transitions;
            note(name + ": start accepted but state stayed data_ready");
          }
          break;
        }
        case 5: {  // stop
          const HttpReply r = api.post("/api/projects/" + id + "/stop", json::object());
          check(r, "stop");
          observe("stop");
          if (r.status == 200 && observed == "running") {
            ++report.illegal_transitions;
            note(name + ": stop answered 200 while still running");
          }
          break;
        }
        default: {  // poll
          const HttpReply r = api.get("/api/projects/" + id + "/logs?cursor=" +
                                      std::to_string(srng.below(3) == 0 ? 0 : srng.below(4096)));
          check(r, "logs");
          observe("logs");
          break;
        }
      }
    }
    // Leave nothing running for the next sequence.
    if (observed == "running") {
      check(api.post("/api/projects/" + id + "/stop", json::object()), "final stop");
      observe("final stop");
    }
    ++report.sequences;
  }
  server.stop();
  return report;
}

}  // namespace trainforge::testing
