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

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "trainforge/trainer.hpp"

namespace trainforge {

// Predicts left when x[feature] <= threshold.
struct Stump {
  std::size_t feature = 0;
  double threshold = std::numeric_limits<double>::infinity();
  double left = 0;
  double right = 0;

  double operator()(std::span<const double> x) const {
    return x[feature] <= threshold ? left : right;
  }
  friend bool operator==(const Stump&, const Stump&) = default;
};

// Row-major n x F feature matrix.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t i) const {
    return {values.data() + i * cols, cols};
  }
};

// Candidate thresholds are midpoints between consecutive distinct values
// of a feature. Returns the least-squares stump for the targets; SSEs
// within 1e-9*(1+|min|) of the minimum tie and go to the lowest (feature,
// threshold). Without any candidate the stump sends everything left with
// the mean target.
Stump find_best_stump(const FeatureMatrix& x, std::span<const double> targets);

// Sum of squared errors of a stump; also used by the brute-force oracle.
double stump_sse(const Stump& stump, const FeatureMatrix& x, std::span<const double> targets);

enum class BoostObjective { kSquaredError, kLogistic };

struct BoostedStumpModel {
  BoostObjective objective = BoostObjective::kSquaredError;
  double f0 = 0;
  double shrinkage = 0.1;
  std::vector<Stump> stumps;

  // Raw score F0 + shrinkage * sum of stump outputs.
  double score(std::span<const double> x) const;
};

// Fits one stump per round to the negative gradient (residuals for
// squared error, y - sigmoid(F) for logistic loss with y in {0, 1}). on_round gets
// the training loss after each round (mean squared error or mean log loss)
// and may return false to end early.
BoostedStumpModel train_boosted_stumps(
    const FeatureMatrix& x, std::span<const double> y, BoostObjective objective,
    std::int64_t rounds, double shrinkage,
    const std::function<bool(std::int64_t, double)>& on_round = {});

// tabular:classification (binary) and tabular:regression. Throws
// NoNumericFeatures, SingleClass, UnsupportedMulticlass.
class StumpsTrainer : public DirectTrainer {
 public:
  explicit StumpsTrainer(bool regression) : regression_(regression) {}

  void prepare(const ValidatedProject& project, const ProcessedDataset& data) override;
  void fit(const std::function<bool(std::int64_t round, double loss)>& on_round,
           const std::atomic<bool>* stop) override;
  bool has_valid() const override { return valid_x_.has_value(); }
  MetricReport evaluate(EvalSplit split) const override;
  std::vector<double> state() const override;
  void export_artifact(const std::filesystem::path& dir,
                       nlohmann::json& metadata) const override;

  const BoostedStumpModel& model() const { return model_; }
  const std::vector<std::string>& feature_names() const { return features_; }

 private:
  FeatureMatrix encode(const std::vector<Record>& records, std::vector<double>& y,
                       bool is_train);

  bool regression_;
  std::int64_t rounds_ = 100;
  double shrinkage_ = 0.1;
  std::vector<std::string> features_;
  std::vector<std::string> labels_;
  FeatureMatrix train_x_;
  std::vector<double> train_y_;
  std::optional<FeatureMatrix> valid_x_;
  std::vector<double> valid_y_;
  BoostedStumpModel model_;
};

}  // namespace trainforge
