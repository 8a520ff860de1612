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

#include "trainforge/reference/softmax_text_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "targets.hpp"
#include "trainforge/checkpoint.hpp"
#include "trainforge/error.hpp"
#include "trainforge/monitoring.hpp"

namespace trainforge {
using nlohmann::json;

SoftmaxTextModel::SoftmaxTextModel(std::uint32_t dimension, std::size_t outputs,
                                   bool regression)
    : dim_(dimension), outputs_(regression ? 1 : outputs), regression_(regression) {}

std::vector<double> SoftmaxTextModel::logits(std::span<const double> params,
                                             const SparseVector& x) const {
  const std::size_t c = outputs_;
  const double* bias = params.data() + static_cast<std::size_t>(dim_) * c;
  std::vector<double> z(bias, bias + c);
  for (const auto& [i, v] : x) {
    const double* row = params.data() + static_cast<std::size_t>(i) * c;
    for (std::size_t k = 0; k < c; ++k) z[k] += v * row[k];
  }
  return z;
}

double SoftmaxTextModel::predict(std::span<const double> params, const SparseVector& x) const {
  const auto z = logits(params, x);
  if (regression_) return z[0];
  return static_cast<double>(std::max_element(z.begin(), z.end()) - z.begin());
}

double SoftmaxTextModel::loss_and_grad(std::span<const double> params,
                                       std::span<const SparseVector* const> xs,
                                       std::span<const double> targets,
                                       std::span<double> grad) const {
  if (params.size() != num_params() || grad.size() != num_params() ||
      xs.size() != targets.size()) {
    throw Error(ErrorCode::kShapeMismatch, "softmax text model buffers");
  }
  std::fill(grad.begin(), grad.end(), 0.0);
  if (xs.empty()) return 0.0;
  const std::size_t c = outputs_;
  const double inv_n = 1.0 / static_cast<double>(xs.size());
  double* gbias = grad.data() + static_cast<std::size_t>(dim_) * c;
  double total = 0;
  std::vector<double> dz(c);
  for (std::size_t e = 0; e < xs.size(); ++e) {
    const auto z = logits(params, *xs[e]);
    if (regression_) {
      const double diff = z[0] - targets[e];
      total += diff * diff;
      dz[0] = 2.0 * diff * inv_n;
    } else {
      const auto y = static_cast<std::size_t>(targets[e]);
      const double zmax = *std::max_element(z.begin(), z.end());
      double sum = 0;
      for (std::size_t k = 0; k < c; ++k) sum += std::exp(z[k] - zmax);
      const double log_sum = zmax + std::log(sum);
      total += log_sum - z[y];
      for (std::size_t k = 0; k < c; ++k) {
        dz[k] = (std::exp(z[k] - log_sum) - (k == y ? 1.0 : 0.0)) * inv_n;
      }
    }
    for (std::size_t k = 0; k < c; ++k) gbias[k] += dz[k];
    for (const auto& [i, v] : *xs[e]) {
      double* row = grad.data() + static_cast<std::size_t>(i) * c;
      for (std::size_t k = 0; k < c; ++k) row[k] += v * dz[k];
    }
  }
  return total * inv_n;
}

TextTrainer::Split TextTrainer::encode(const std::vector<Record>& records,
                                       bool is_train) const {
  Split out;
  out.x.reserve(records.size());
  out.y.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Record& r = records[i];
    const json text = r.value("text_column", json());
    const std::string s = text.is_string() ? text.get<std::string>() : "";
    if (HashedBowFeaturizer::tokenize(s).empty()) {
      throw Error(ErrorCode::kEmptyText,
                  std::string(is_train ? "train" : "valid") + " record " + std::to_string(i));
    }
    out.x.push_back(featurizer_->featurize(s));
    const json target = r.value("target_column", json());
    if (regression_) {
      const auto v = reference::as_number(target);
      if (!v) {
        throw Error(ErrorCode::kInvalidValue,
                    "non-numeric target in record " + std::to_string(i));
      }
      out.y.push_back(*v);
    } else {
      const std::string label = reference::label_text(target);
      auto it = std::lower_bound(labels_.begin(), labels_.end(), label);
      if (it != labels_.end() && *it == label) {
        out.y.push_back(static_cast<double>(it - labels_.begin()));
      } else {
        // Unseen validation label: never predicted, always counted wrong.
        out.y.push_back(static_cast<double>(labels_.size()));
      }
    }
  }
  return out;
}

void TextTrainer::prepare(const ValidatedProject& project, const ProcessedDataset& data) {
  featurizer_ = std::make_unique<HashedBowFeaturizer>(
      static_cast<std::uint32_t>(project.params.get_int("hash_dim")));
  labels_.clear();
  if (!regression_) {
    std::set<std::string> distinct;
    for (const auto& r : data.train) {
      distinct.insert(reference::label_text(r.value("target_column", json())));
    }
    if (distinct.size() < 2) {
      throw Error(ErrorCode::kSingleClass,
                  std::to_string(distinct.size()) + " distinct label(s) in the train split");
    }
    labels_.assign(distinct.begin(), distinct.end());
  }
  model_ = std::make_unique<SoftmaxTextModel>(featurizer_->dimension(), labels_.size(),
                                              regression_);
  train_ = encode(data.train, true);
  valid_.reset();
  if (data.valid) valid_ = encode(*data.valid, false);
}

std::vector<double> TextTrainer::init_model(CounterRng) const {
  return std::vector<double>(model_->num_params(), 0.0);
}

double TextTrainer::forward_backward(std::span<const double> params,
                                     std::span<const std::size_t> batch,
                                     std::span<double> grad) const {
  std::vector<const SparseVector*> xs;
  std::vector<double> ys;
  xs.reserve(batch.size());
  ys.reserve(batch.size());
  for (std::size_t i : batch) {
    xs.push_back(&train_.x[i]);
    ys.push_back(train_.y[i]);
  }
  return model_->loss_and_grad(params, xs, ys, grad);
}

MetricReport TextTrainer::evaluate(std::span<const double> params, EvalSplit which) const {
  const Split& split = which == EvalSplit::kTrain ? train_ : *valid_;
  std::vector<double> preds;
  preds.reserve(split.x.size());
  for (const auto& x : split.x) preds.push_back(model_->predict(params, x));
  MetricReport report = compute_metrics(
      regression_ ? ProblemKind::kRegression : ProblemKind::kClassification, preds, split.y);
  // Loss over the examples whose label the model knows.
  std::vector<const SparseVector*> xs;
  std::vector<double> ys;
  for (std::size_t i = 0; i < split.x.size(); ++i) {
    if (!regression_ && split.y[i] >= static_cast<double>(labels_.size())) continue;
    xs.push_back(&split.x[i]);
    ys.push_back(split.y[i]);
  }
  std::vector<double> scratch(model_->num_params());
  report.values["loss"] = model_->loss_and_grad(params, xs, ys, scratch);
  return report;
}

void TextTrainer::export_artifact(std::span<const double> params,
                                  const std::filesystem::path& dir, json& metadata) const {
  metadata["model"] = {
      {"kind", regression_ ? "hashed-bow-linear-regressor" : "hashed-bow-softmax"},
      {"hash", "fnv1a64"},
      {"hash_dim", featurizer_->dimension()},
      {"outputs", model_->outputs()},
  };
  if (!regression_) metadata["labels"] = labels_;
  if (dir.empty()) return;
  const std::size_t w = static_cast<std::size_t>(featurizer_->dimension()) * model_->outputs();
  BinaryBlob blob;
  blob.header = metadata["model"];
  blob.arrays.emplace_back(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(w));
  blob.arrays.emplace_back(params.begin() + static_cast<std::ptrdiff_t>(w), params.end());
  write_blob(dir / "model.bin", kModelMagic, kModelFormatVersion, blob);
}

TextClassifierResult train_text_classifier(const std::vector<Record>& records,
                                           const ParamSet& params, bool regression) {
  ValidatedProject project;
  project.config.task = TaskId::parse(regression ? "text-regression" : "text-classification");
  project.config.project_name = "in-memory";
  project.config.data.train_split = "train";
  project.spec = &TaskRegistry::builtin().resolve(project.config.task.canonical());
  project.params = validate_params(*project.spec, params);
  project.config.params = project.params.values();

  ProcessedDataset data;
  data.task = project.config.task;
  data.train = records;
  data.fingerprint = fingerprint(data);

  auto trainer = std::make_shared<TextTrainer>(regression);
  MemorySink sink;
  TrainedArtifact run = run_training(project, data, TrainerHandle(trainer), sink);
  return {std::move(run.params), trainer->labels(), std::move(*run.train_metrics)};
}

}  // namespace trainforge
