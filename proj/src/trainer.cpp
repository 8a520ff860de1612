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

#include "trainforge/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "trainforge/checkpoint.hpp"
#include "trainforge/error.hpp"
#include "trainforge/optimizer.hpp"
#include "trainforge/sha256.hpp"

namespace trainforge {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Emitter {
 public:
  Emitter(MetricSink& sink, std::string run_id) : sink_(sink), run_id_(std::move(run_id)) {}

  void metric(std::int64_t step, std::int64_t epoch, EventSplit split, const std::string& name,
              double value) {
    sink_.emit({now_millis(), run_id_, step, epoch, split, name, value});
  }
  void status(std::int64_t step, std::int64_t epoch, const std::string& value) {
    sink_.emit({now_millis(), run_id_, step, epoch, EventSplit::kSystem, kStatusEvent, value});
  }
  void system(std::int64_t step, std::int64_t epoch, const std::string& name,
              const std::string& value) {
    sink_.emit({now_millis(), run_id_, step, epoch, EventSplit::kSystem, name, value});
  }

 private:
  MetricSink& sink_;
  std::string run_id_;
};

json ParamJson(const ParamValue& v) {
  return std::visit([](const auto& x) { return json(x); }, v);
}

json ReportJson(const MetricReport& r) {
  json out = json::object();
  for (const auto& [k, v] : r.values) out[k] = v;
  return out;
}

json BaseMetadata(const ValidatedProject& project, const ProcessedDataset& data) {
  json params = json::object();
  for (const auto& [k, v] : project.params.values()) params[k] = ParamJson(v);
  json schema = json::array();
  for (const auto& [role, kind] : data.schema) schema.push_back(json::array({role, kind}));
  return json{
      {"format_version", kModelFormatVersion},
      {"task", project.config.task.canonical()},
      {"base_model", project.config.base_model},
      {"project_name", project.config.project_name},
      {"schema", schema},
      {"params", params},
      {"dataset_fingerprint", data.fingerprint},
      {"config_digest", config_digest(project.config)},
  };
}

void WriteMetadata(const fs::path& dir, const json& metadata) {
  const fs::path tmp = dir / "metadata.json.tmp";
  std::ofstream(tmp, std::ios::trunc) << metadata.dump(2) << "\n";
  fs::rename(tmp, dir / "metadata.json");
}

// Emits validation metrics; the loss is reported as eval_loss.
void EmitEval(Emitter& emit, std::int64_t step, std::int64_t epoch, EventSplit split,
              const MetricReport& report) {
  for (const auto& [name, value] : report.values) {
    if (name == "loss") {
      if (split == EventSplit::kValid) emit.metric(step, epoch, split, "eval_loss", value);
      continue;
    }
    emit.metric(step, epoch, split, name, value);
  }
  for (const auto& w : report.warnings) emit.system(step, epoch, "warning", w);
}

bool AllFinite(std::span<const double> xs) {
  for (double x : xs) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

struct Files {
  std::optional<TextLog> log;
  fs::path artifact_dir;
  fs::path checkpoints;

  explicit Files(const fs::path& project_dir) {
    if (project_dir.empty()) return;
    fs::create_directories(project_dir);
    log.emplace(project_dir / "run.log");
    artifact_dir = project_dir / "artifact";
    checkpoints = project_dir / "checkpoints";
  }
  bool enabled() const { return log.has_value(); }
  void line(const std::string& s) {
    if (log) log->line(s);
  }
};

TrainedArtifact RunGradient(const ValidatedProject& project, const ProcessedDataset& data,
                            TrainerContract& trainer, MetricSink& sink,
                            const RunOptions& options) {
  const ValidatedParams& p = project.params;
  const std::int64_t epochs = p.get_int("epochs");
  const std::int64_t batch_size = p.get_int("batch_size");
  const std::int64_t accumulation = p.get_int("gradient_accumulation");
  const int world = options.world_size;
  if (world < 1) throw Error(ErrorCode::kInvalidValue, "world_size must be >= 1");
  if (batch_size < world) {
    throw Error(ErrorCode::kShardTooSmall, "batch_size " + std::to_string(batch_size) +
                                               " < world_size " + std::to_string(world));
  }
  const auto seed = static_cast<std::uint64_t>(p.get_int("seed"));
  const CounterRng root(seed);
  const SchedulerKind scheduler = parse_scheduler(p.get_string("scheduler"));
  const std::string optimizer = p.get_string("optimizer");
  const double base_lr = p.get_float("lr");
  const std::int64_t warmup = p.get_int("warmup_steps");
  const std::int64_t checkpoint_every = p.get_int("checkpoint_steps");

  Files files(options.project_dir);
  Emitter emit(sink, options.run_id);

  trainer.prepare(project, data);
  const std::size_t n = trainer.num_train_examples();
  const std::int64_t per_epoch = steps_per_epoch(n, batch_size, accumulation);
  const std::int64_t total = epochs * per_epoch;
  const auto window = static_cast<std::size_t>(batch_size * accumulation);

  TrainState state;
  state.params = trainer.init_model(root.split("init"));
  state.optimizer.hp.weight_decay = p.get_float("weight_decay");
  state.total_steps = total;
  state.rng = root.state();
  state.dataset_fingerprint = data.fingerprint;
  state.config_digest = config_digest(project.config);

  if (options.resume_from) {
    TrainState restored = resume(*options.resume_from);
    if (restored.dataset_fingerprint != data.fingerprint) {
      throw Error(ErrorCode::kFingerprintMismatch,
                  "checkpoint was taken on dataset " + restored.dataset_fingerprint +
                      ", current dataset is " + data.fingerprint);
    }
    if (restored.params.size() != state.params.size()) {
      throw Error(ErrorCode::kShapeMismatch,
                  "checkpoint holds " + std::to_string(restored.params.size()) +
                      " parameters, model has " + std::to_string(state.params.size()));
    }
    restored.total_steps = total;
    state = std::move(restored);
    files.line("resumed from step " + std::to_string(state.global_step));
  }

  TrainedArtifact result;
  result.total_steps = total;
  emit.status(state.global_step, state.epoch + 1, "running");
  files.line("training " + project.config.task.canonical() + ": " + std::to_string(n) +
             " examples, " + std::to_string(total) + " optimizer steps");

  auto checkpoint = [&]() {
    if (!files.enabled()) return;
    result.last_checkpoint = save_checkpoint(state, files.checkpoints);
  };

  std::vector<std::size_t> order(n);
  std::vector<double> grad(state.params.size());
  std::vector<double> shard_grad(state.params.size());
  bool stopped = false;

  while (state.epoch < epochs && per_epoch > 0 && !stopped) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    root.split("shuffle").split(static_cast<std::uint64_t>(state.epoch)).shuffle(std::span(order));

    while (state.step_in_epoch < per_epoch) {
      if (options.stop != nullptr && options.stop->load()) {
        stopped = true;
        break;
      }
      const std::size_t begin = static_cast<std::size_t>(state.step_in_epoch) * window;
      const std::size_t end = std::min(n, begin + window);
      std::fill(grad.begin(), grad.end(), 0.0);
      double loss_sum = 0;
      for (std::size_t mb = begin; mb < end; mb += static_cast<std::size_t>(batch_size)) {
        const std::size_t mb_end = std::min(end, mb + static_cast<std::size_t>(batch_size));
        const std::size_t m = mb_end - mb;
        std::size_t offset = mb;
        for (int w = 0; w < world; ++w) {
          const std::size_t size = m / world + (static_cast<std::size_t>(w) < m % world ? 1 : 0);
          if (size == 0) continue;
          const std::span<const std::size_t> shard(order.data() + offset, size);
          offset += size;
          const double loss = trainer.forward_backward(state.params, shard, shard_grad);
          const auto weight = static_cast<double>(size);
          loss_sum += weight * loss;
          for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += weight * shard_grad[i];
        }
      }
      const auto count = static_cast<double>(end - begin);
      const double loss = loss_sum / count;
      for (double& g : grad) g /= count;

      const std::int64_t step = state.global_step + 1;
      if (!std::isfinite(loss) || !AllFinite(grad)) {
        emit.status(state.global_step, state.epoch + 1, "failed");
        files.line("non-finite loss at step " + std::to_string(step));
        throw Error(ErrorCode::kNonFiniteLoss, "step " + std::to_string(step));
      }
      const double lr = scheduler_lr(scheduler, base_lr, state.global_step, total, warmup);
      if (optimizer == "sgd") {
        sgd_step(state.params, grad, state.optimizer, lr);
      } else {
        adamw_step(state.params, grad, state.optimizer, lr);
      }
      state.global_step = step;
      ++state.step_in_epoch;
      result.step_losses.push_back(loss);
      emit.metric(step, state.epoch + 1, EventSplit::kTrain, "loss", loss);

      if (state.step_in_epoch == per_epoch) {
        if (trainer.has_valid()) {
          const MetricReport report = trainer.evaluate(state.params, EvalSplit::kValid);
          EmitEval(emit, step, state.epoch + 1, EventSplit::kValid, report);
          result.valid_metrics = report;
        }
        files.line("epoch " + std::to_string(state.epoch + 1) + " done at step " +
                   std::to_string(step) + ", loss " + std::to_string(loss));
        ++state.epoch;
        state.step_in_epoch = 0;
      }
      const bool stop_here = options.stop_after_step && step == *options.stop_after_step;
      if ((checkpoint_every > 0 && step % checkpoint_every == 0) || stop_here) checkpoint();
      if (stop_here) {
        stopped = true;
        break;
      }
      if (state.step_in_epoch == 0) break;  // epoch finished; reshuffle
    }
  }

  result.params = state.params;
  result.global_step = state.global_step;
  if (stopped) {
    if (result.last_checkpoint.empty() ||
        result.last_checkpoint.filename() != "step-" + std::to_string(state.global_step)) {
      checkpoint();
    }
    result.outcome = RunOutcome::kStopped;
    emit.status(state.global_step, state.epoch + 1, "stopped");
    files.line("stopped at step " + std::to_string(state.global_step));
    return result;
  }

  const std::int64_t last_epoch = std::max<std::int64_t>(epochs, 1);
  result.train_metrics = trainer.evaluate(state.params, EvalSplit::kTrain);
  EmitEval(emit, state.global_step, last_epoch, EventSplit::kTrain, *result.train_metrics);
  if (trainer.has_valid() && !result.valid_metrics) {
    result.valid_metrics = trainer.evaluate(state.params, EvalSplit::kValid);
    EmitEval(emit, state.global_step, last_epoch, EventSplit::kValid, *result.valid_metrics);
  }

  json metadata = BaseMetadata(project, data);
  metadata["global_step"] = state.global_step;
  metadata["metrics"] = {{"train", ReportJson(*result.train_metrics)}};
  if (result.valid_metrics) metadata["metrics"]["valid"] = ReportJson(*result.valid_metrics);
  if (files.enabled()) {
    fs::create_directories(files.artifact_dir);
    trainer.export_artifact(state.params, files.artifact_dir, metadata);
    WriteMetadata(files.artifact_dir, metadata);
    result.artifact_dir = files.artifact_dir;
    checkpoint();
  } else {
    trainer.export_artifact(state.params, {}, metadata);
  }
  result.metadata = std::move(metadata);
  emit.status(state.global_step, last_epoch, "succeeded");
  files.line("succeeded after " + std::to_string(state.global_step) + " steps");
  return result;
}

TrainedArtifact RunDirect(const ValidatedProject& project, const ProcessedDataset& data,
                          DirectTrainer& trainer, MetricSink& sink, const RunOptions& options) {
  Files files(options.project_dir);
  Emitter emit(sink, options.run_id);
  trainer.prepare(project, data);
  TrainedArtifact result;
  emit.status(0, 1, "running");
  files.line("fitting " + project.config.task.canonical());

  bool stopped = false;
  trainer.fit(
      [&](std::int64_t round, double loss) {
        if (!std::isfinite(loss)) {
          emit.status(result.global_step, 1, "failed");
          throw Error(ErrorCode::kNonFiniteLoss, "round " + std::to_string(round));
        }
        result.global_step = round;
        result.step_losses.push_back(loss);
        emit.metric(round, 1, EventSplit::kTrain, "loss", loss);
        if (options.stop_after_step && round == *options.stop_after_step) stopped = true;
        return !stopped;
      },
      options.stop);
  if (options.stop != nullptr && options.stop->load()) stopped = true;
  result.total_steps = result.global_step;
  result.params = trainer.state();

  TrainState state;
  state.params = result.params;
  state.global_step = result.global_step;
  state.dataset_fingerprint = data.fingerprint;
  state.config_digest = config_digest(project.config);
  if (stopped) {
    if (files.enabled()) result.last_checkpoint = save_checkpoint(state, files.checkpoints);
    result.outcome = RunOutcome::kStopped;
    emit.status(result.global_step, 1, "stopped");
    return result;
  }

  result.train_metrics = trainer.evaluate(EvalSplit::kTrain);
  EmitEval(emit, result.global_step, 1, EventSplit::kTrain, *result.train_metrics);
  if (trainer.has_valid()) {
    result.valid_metrics = trainer.evaluate(EvalSplit::kValid);
    EmitEval(emit, result.global_step, 1, EventSplit::kValid, *result.valid_metrics);
  }
  json metadata = BaseMetadata(project, data);
  metadata["global_step"] = result.global_step;
  metadata["metrics"] = {{"train", ReportJson(*result.train_metrics)}};
  if (result.valid_metrics) metadata["metrics"]["valid"] = ReportJson(*result.valid_metrics);
  if (files.enabled()) {
    fs::create_directories(files.artifact_dir);
    trainer.export_artifact(files.artifact_dir, metadata);
    WriteMetadata(files.artifact_dir, metadata);
    result.artifact_dir = files.artifact_dir;
    result.last_checkpoint = save_checkpoint(state, files.checkpoints);
  }
  result.metadata = std::move(metadata);
  emit.status(result.global_step, 1, "succeeded");
  files.line("succeeded after " + std::to_string(result.global_step) + " rounds");
  return result;
}

}  // namespace

std::int64_t steps_per_epoch(std::size_t n, std::int64_t batch_size,
                             std::int64_t gradient_accumulation) {
  const auto window = static_cast<std::size_t>(batch_size * gradient_accumulation);
  return static_cast<std::int64_t>((n + window - 1) / window);
}

std::string config_digest(const ProjectConfig& config) { return sha256_hex(canonicalize(config)); }

void TrainerBindings::bind_reference(const TaskId& task, TrainerFactory factory) {
  factories_[task.canonical()] = std::move(factory);
}

void TrainerBindings::bind_external_adapter(const TaskId& task, TrainerFactory factory) {
  const TaskSpec& spec = TaskRegistry::builtin().resolve(task.canonical());
  if (spec.trainer_binding == TrainerBinding::kReference) {
    throw Error(ErrorCode::kTaskHasReferenceTrainer, task.canonical());
  }
  factories_[task.canonical()] = std::move(factory);
}

bool TrainerBindings::is_bound(const TaskId& task) const {
  return factories_.contains(task.canonical());
}

TrainerHandle TrainerBindings::create(const TaskSpec& spec) const {
  auto it = factories_.find(spec.id.canonical());
  if (it == factories_.end()) {
    throw Error(ErrorCode::kTrainerUnbound,
                spec.id.canonical() + " needs an external adapter and none is bound", "task");
  }
  return it->second();
}

TrainedArtifact run_training(const ValidatedProject& project, const ProcessedDataset& data,
                             const TrainerHandle& trainer, MetricSink& sink,
                             const RunOptions& options) {
  if (const auto* gradient = std::get_if<std::shared_ptr<TrainerContract>>(&trainer)) {
    return RunGradient(project, data, **gradient, sink, options);
  }
  return RunDirect(project, data, *std::get<std::shared_ptr<DirectTrainer>>(trainer), sink,
                   options);
}

TrainedArtifact run_training(const ValidatedProject& project, const ProcessedDataset& data,
                             const TrainerBindings& bindings, MetricSink& sink,
                             const RunOptions& options) {
  return run_training(project, data, bindings.create(*project.spec), sink, options);
}

TrainedArtifact simulate_data_parallel(const ValidatedProject& project,
                                       const ProcessedDataset& data,
                                       const TrainerHandle& trainer, MetricSink& sink,
                                       int world_size, RunOptions options) {
  options.world_size = world_size;
  return run_training(project, data, trainer, sink, options);
}

}  // namespace trainforge
