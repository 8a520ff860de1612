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

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "trainforge/reference/featurizer.hpp"
#include "trainforge/trainer.hpp"

namespace trainforge {

// Linear head over hashed bag-of-words features. Parameters are W (D x C,
// row-major) followed by b (C). Classification uses mean softmax
// cross-entropy; regression (C = 1) uses mean squared error.
class SoftmaxTextModel {
 public:
  SoftmaxTextModel(std::uint32_t dimension, std::size_t outputs, bool regression);

  std::size_t num_params() const { return static_cast<std::size_t>(dim_) * outputs_ + outputs_; }
  std::size_t outputs() const { return outputs_; }
  bool regression() const { return regression_; }

  std::vector<double> logits(std::span<const double> params, const SparseVector& x) const;
  // Class index (classification) or value (regression).
  double predict(std::span<const double> params, const SparseVector& x) const;

  // Mean loss over the examples; grad is overwritten. Classification
  // targets are class indices.
  double loss_and_grad(std::span<const double> params,
                       std::span<const SparseVector* const> xs,
                       std::span<const double> targets, std::span<double> grad) const;

 private:
  std::uint32_t dim_;
  std::size_t outputs_;
  bool regression_;
};

// text-classification / text-regression trainer. Classification labels are
// the sorted distinct train targets. Throws SingleClass, EmptyText (with the
// record index).
class TextTrainer : public TrainerContract {
 public:
  explicit TextTrainer(bool regression) : regression_(regression) {}

  void prepare(const ValidatedProject& project, const ProcessedDataset& data) override;
  std::size_t num_train_examples() const override { return train_.x.size(); }
  std::vector<double> init_model(CounterRng rng) const override;
  double forward_backward(std::span<const double> params, std::span<const std::size_t> batch,
                          std::span<double> grad) const override;
  bool has_valid() const override { return valid_.has_value(); }
  MetricReport evaluate(std::span<const double> params, EvalSplit split) const override;
  void export_artifact(std::span<const double> params, const std::filesystem::path& dir,
                       nlohmann::json& metadata) const override;

  const std::vector<std::string>& labels() const { return labels_; }
  const SoftmaxTextModel& model() const { return *model_; }

 private:
  struct Split {
    std::vector<SparseVector> x;
    std::vector<double> y;  // class index (may be >= C for unseen labels) or value
  };
  Split encode(const std::vector<Record>& records, bool is_train) const;

  bool regression_;
  std::unique_ptr<HashedBowFeaturizer> featurizer_;
  std::unique_ptr<SoftmaxTextModel> model_;
  std::vector<std::string> labels_;
  Split train_;
  std::optional<Split> valid_;
};

struct TextClassifierResult {
  std::vector<double> params;
  std::vector<std::string> labels;
  MetricReport train_metrics;
};

// Runs the full loop on in-memory records ({text_column, target_column}).
TextClassifierResult train_text_classifier(const std::vector<Record>& records,
                                           const ParamSet& params, bool regression = false);

}  // namespace trainforge
