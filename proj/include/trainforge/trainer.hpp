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
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "trainforge/dataset.hpp"
#include "trainforge/metrics.hpp"
#include "trainforge/monitoring.hpp"
#include "trainforge/project_config.hpp"
#include "trainforge/rng.hpp"

namespace trainforge {

enum class EvalSplit { kTrain, kValid };

// A model trained by gradient steps inside run_training. Parameters are one
// flat vector owned by the loop; the trainer only reads them.
class TrainerContract {
 public:
  virtual ~TrainerContract() = default;

  // Receives the validated project and processed dataset unchanged.
  virtual void prepare(const ValidatedProject& project, const ProcessedDataset& data) = 0;
  virtual std::size_t num_train_examples() const = 0;
  virtual std::vector<double> init_model(CounterRng rng) const = 0;
  // Mean loss over the listed train examples; grad (same size as params)
  // is overwritten with the gradient of that mean.
  virtual double forward_backward(std::span<const double> params,
                                  std::span<const std::size_t> batch,
                                  std::span<double> grad) const = 0;
  virtual bool has_valid() const = 0;
  // Always reports "loss" plus the task's metric family when it has one.
  virtual MetricReport evaluate(std::span<const double> params, EvalSplit split) const = 0;
  // Writes model files into dir and adds trainer-specific keys (label
  // vocabulary, dimensions) to metadata; the loop writes metadata.json.
  virtual void export_artifact(std::span<const double> params,
                               const std::filesystem::path& dir,
                               nlohmann::json& metadata) const = 0;
};

// A model fitted by its own procedure (boosting rounds). fit reports one
// training loss per round through the callback and ends early when it
// returns false or the stop flag is raised.
class DirectTrainer {
 public:
  virtual ~DirectTrainer() = default;

  virtual void prepare(const ValidatedProject& project, const ProcessedDataset& data) = 0;
  virtual void fit(const std::function<bool(std::int64_t round, double loss)>& on_round,
                   const std::atomic<bool>* stop) = 0;
  virtual bool has_valid() const = 0;
  virtual MetricReport evaluate(EvalSplit split) const = 0;
  // Flattened fitted state, stored in the final checkpoint.
  virtual std::vector<double> state() const = 0;
  virtual void export_artifact(const std::filesystem::path& dir,
                               nlohmann::json& metadata) const = 0;
};

using TrainerHandle =
    std::variant<std::shared_ptr<TrainerContract>, std::shared_ptr<DirectTrainer>>;
using TrainerFactory = std::function<TrainerHandle()>;

// Task -> trainer factory. Reference tasks are bound by
// with_reference_trainers(); adapter-bound tasks need bind_external_adapter.
class TrainerBindings {
 public:
  static TrainerBindings with_reference_trainers();

  void bind_reference(const TaskId& task, TrainerFactory factory);
  // Throws TaskHasReferenceTrainer for tasks with a reference binding,
  // UnknownTask for unregistered ids.
  void bind_external_adapter(const TaskId& task, TrainerFactory factory);
  bool is_bound(const TaskId& task) const;
  // Throws TrainerUnbound.
  TrainerHandle create(const TaskSpec& spec) const;

 private:
  std::map<std::string, TrainerFactory> factories_;
};

enum class RunOutcome { kSucceeded, kStopped };

struct RunOptions {
  // Output root (<project_name>/). Empty: nothing is written to disk.
  std::filesystem::path project_dir;
  std::string run_id = "run";
  int world_size = 1;
  const std::atomic<bool>* stop = nullptr;
  // Checkpoint step dir or checkpoints root to continue from.
  std::optional<std::filesystem::path> resume_from;
  // Behaves as a stop request raised right after this global step.
  std::optional<std::int64_t> stop_after_step;
};

struct TrainedArtifact {
  RunOutcome outcome = RunOutcome::kSucceeded;
  std::filesystem::path artifact_dir;  // empty when nothing was written
  std::filesystem::path last_checkpoint;
  std::vector<double> params;
  // Train loss of every optimizer step (or boosting round) run by this call.
  std::vector<double> step_losses;
  std::int64_t global_step = 0;
  std::int64_t total_steps = 0;
  std::optional<MetricReport> train_metrics;
  std::optional<MetricReport> valid_metrics;
  nlohmann::json metadata;
};

// Steps per epoch = ceil(n / (batch_size * gradient_accumulation)); the last
// partial window still steps.
std::int64_t steps_per_epoch(std::size_t n, std::int64_t batch_size,
                             std::int64_t gradient_accumulation);

// Emits status events (running, then succeeded / stopped / failed), one
// "loss" event per optimizer step and per-epoch validation metrics.
// Throws NonFiniteLoss (after emitting failed), FingerprintMismatch on
// resume against different data, ShardTooSmall.
TrainedArtifact run_training(const ValidatedProject& project, const ProcessedDataset& data,
                             const TrainerHandle& trainer, MetricSink& sink,
                             const RunOptions& options = {});

// Resolves the trainer through bindings. Throws TrainerUnbound.
TrainedArtifact run_training(const ValidatedProject& project, const ProcessedDataset& data,
                             const TrainerBindings& bindings, MetricSink& sink,
                             const RunOptions& options = {});

// run_training with every micro-batch split into world_size near-equal
// shards whose gradients are averaged (weighted by shard size) before the
// update. Throws ShardTooSmall when batch_size < world_size.
TrainedArtifact simulate_data_parallel(const ValidatedProject& project,
                                       const ProcessedDataset& data,
                                       const TrainerHandle& trainer, MetricSink& sink,
                                       int world_size, RunOptions options = {});

// SHA-256 of the canonical config text.
std::string config_digest(const ProjectConfig& config);

}  // namespace trainforge
