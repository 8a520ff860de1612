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

#include "trainforge/pipeline.hpp"

#include <fstream>

#include "trainforge/error.hpp"
#include "trainforge/monitoring.hpp"

namespace trainforge {
namespace fs = std::filesystem;

namespace {

// Remembers whether a terminal status already went out.
class StatusTracker : public MetricSink {
 public:
  explicit StatusTracker(MetricSink& inner) : inner_(inner) {}
  void emit(const MetricEvent& e) override {
    inner_.emit(e);
    if (e.split == EventSplit::kSystem && e.name == kStatusEvent) {
      const auto* v = std::get_if<std::string>(&e.value);
      terminal_ = v != nullptr && *v != "running";
      last_step_ = e.step;
      last_epoch_ = e.epoch;
    }
  }
  bool terminal() const { return terminal_; }
  std::int64_t last_step() const { return last_step_; }
  std::int64_t last_epoch() const { return last_epoch_; }

 private:
  MetricSink& inner_;
  bool terminal_ = false;
  std::int64_t last_step_ = 0;
  std::int64_t last_epoch_ = 0;
};

}  // namespace

fs::path default_cache_dir(const Env& env) {
  if (auto it = env.find("TRAINFORGE_CACHE_DIR"); it != env.end() && !it->second.empty()) {
    return it->second;
  }
  if (auto it = env.find("HOME"); it != env.end() && !it->second.empty()) {
    return fs::path(it->second) / ".cache" / "trainforge";
  }
  return fs::path(".trainforge-cache");
}

void write_canonical_config(const ProjectConfig& config, const fs::path& project_dir) {
  fs::create_directories(project_dir);
  const fs::path tmp = project_dir / "config.canonical.yml.tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << canonicalize(config);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + tmp.string());
  }
  fs::rename(tmp, project_dir / "config.canonical.yml");
}

ProjectRunResult run_project(const ValidatedProject& project, const ProjectRunOptions& options) {
  write_canonical_config(project.config, options.project_dir);
  JsonlEventSink file_sink(options.project_dir / "events.jsonl");
  StatusTracker sink(file_sink);
  TextLog log(options.project_dir / "run.log");

  auto fail = [&](const std::string& what) {
    log.line("failed: " + what);
    const std::int64_t step = sink.last_step();
    const std::int64_t epoch = sink.last_epoch();
    sink.emit({now_millis(), options.run_id, step, epoch, EventSplit::kSystem, "error", what});
    // A failed push comes after the training run already succeeded.
    if (sink.terminal()) return;
    sink.emit({now_millis(), options.run_id, step, epoch, EventSplit::kSystem, kStatusEvent,
               std::string("failed")});
  };

  try {
    ProjectRunResult result;
    HubClient hub(options.hub);
    log.line("preparing dataset " + project.config.data.path);
    PreparedDataset prepared = prepare_dataset(project, options.cache_dir, &hub);
    if (options.expected_fingerprint && *options.expected_fingerprint != prepared.data.fingerprint) {
      throw Error(ErrorCode::kFingerprintMismatch,
                  "expected dataset " + *options.expected_fingerprint + ", processed " +
                      prepared.data.fingerprint);
    }
    result.fingerprint = prepared.data.fingerprint;
    result.cache_hit = prepared.cache_hit;
    log.line("dataset " + prepared.data.fingerprint + (prepared.cache_hit ? " (cached)" : ""));

    const TrainerBindings fallback = TrainerBindings::with_reference_trainers();
    const TrainerBindings& bindings = options.bindings ? *options.bindings : fallback;
    RunOptions run;
    run.project_dir = options.project_dir;
    run.run_id = options.run_id;
    run.stop = options.stop;
    run.resume_from = options.resume_from;
    result.artifact = run_training(project, prepared.data, bindings, sink, run);

    const HubConfig& hub_cfg = project.config.hub;
    if (result.artifact.outcome == RunOutcome::kSucceeded && hub_cfg.push_to_hub) {
      const HubRef target{*hub_cfg.username + "/" + project.config.project_name,
                          RepoKind::kModel, std::nullopt};
      const std::string url =
          hub.push_artifact(options.project_dir, target, hub_cfg.token ? hub_cfg.token->value : "");
      result.pushed_url = url;
      sink.emit({now_millis(), options.run_id, result.artifact.global_step, sink.last_epoch(),
                 EventSplit::kSystem, "pushed", url});
      log.line("pushed to " + url);
    }
    return result;
  } catch (const Error& e) {
    fail(e.what());
    throw;
  } catch (const std::exception& e) {
    fail(e.what());
    throw;
  }
}

}  // namespace trainforge
