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

#include "trainforge/reference/boosted_stumps.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "targets.hpp"
#include "trainforge/checkpoint.hpp"
#include "trainforge/error.hpp"

namespace trainforge {
using nlohmann::json;

namespace {

double Sigmoid(double f) {
  return f >= 0 ? 1.0 / (1.0 + std::exp(-f)) : std::exp(f) / (1.0 + std::exp(f));
}

// log(1 + e^f) - y*f, the logistic loss on the raw score.
double LogLoss(double f, double y) {
  const double softplus = f > 0 ? f + std::log1p(std::exp(-f)) : std::log1p(std::exp(f));
  return softplus - y * f;
}

double TrainLoss(BoostObjective objective, std::span<const double> f, std::span<const double> y) {
  double total = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (objective == BoostObjective::kSquaredError) {
      const double d = f[i] - y[i];
      total += d * d;
    } else {
      total += LogLoss(f[i], y[i]);
    }
  }
  return total / static_cast<double>(y.size());
}

}  // namespace

double stump_sse(const Stump& stump, const FeatureMatrix& x, std::span<const double> targets) {
  double sse = 0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    const double d = targets[i] - stump(x.row(i));
    sse += d * d;
  }
  return sse;
}

Stump find_best_stump(const FeatureMatrix& x, std::span<const double> targets) {
  const std::size_t n = x.rows;
  if (n == 0 || targets.size() != n) throw Error(ErrorCode::kEmptyInput, "stump search");
  double total = 0;
  double total_sq = 0;
  for (double t : targets) {
    total += t;
    total_sq += t * t;
  }
  struct Candidate {
    double sse;
    Stump stump;
  };
  std::vector<Candidate> candidates;
  std::vector<std::size_t> order(n);
  for (std::size_t f = 0; f < x.cols; ++f) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return x.values[a * x.cols + f] < x.values[b * x.cols + f];
    });
    double left_sum = 0;
    for (std::size_t k = 0; k + 1 < n; ++k) {
      left_sum += targets[order[k]];
      const double here = x.values[order[k] * x.cols + f];
      const double next = x.values[order[k + 1] * x.cols + f];
      if (!(here < next)) continue;
      const auto nl = static_cast<double>(k + 1);
      const auto nr = static_cast<double>(n - k - 1);
      const double right_sum = total - left_sum;
      Stump s{f, here + (next - here) / 2, left_sum / nl, right_sum / nr};
      const double sse = total_sq - left_sum * left_sum / nl - right_sum * right_sum / nr;
      candidates.push_back({sse, s});
    }
  }
  if (candidates.empty()) {
    return Stump{0, std::numeric_limits<double>::infinity(), total / static_cast<double>(n), 0};
  }
  double best = candidates.front().sse;
  for (const auto& c : candidates) best = std::min(best, c.sse);
  const double tol = 1e-9 * (1.0 + std::abs(best));
  // Candidates are generated in (feature, threshold) order.
  for (const auto& c : candidates) {
    if (c.sse <= best + tol) return c.stump;
  }
  return candidates.front().stump;
}

double BoostedStumpModel::score(std::span<const double> x) const {
  double s = 0;
  for (const auto& stump : stumps) s += stump(x);
  return f0 + shrinkage * s;
}

BoostedStumpModel train_boosted_stumps(const FeatureMatrix& x, std::span<const double> y,
                                       BoostObjective objective, std::int64_t rounds,
                                       double shrinkage,
                                       const std::function<bool(std::int64_t, double)>& on_round) {
  const std::size_t n = x.rows;
  if (n == 0 || y.size() != n) throw Error(ErrorCode::kEmptyInput, "boosting needs records");
  BoostedStumpModel model;
  model.objective = objective;
  model.shrinkage = shrinkage;
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  if (objective == BoostObjective::kSquaredError) {
    model.f0 = mean;
  } else {
    if (mean <= 0.0 || mean >= 1.0) {
      throw Error(ErrorCode::kSingleClass, "binary targets hold a single class");
    }
    model.f0 = std::log(mean / (1.0 - mean));
  }
  std::vector<double> f(n, model.f0);
  std::vector<double> residual(n);
  for (std::int64_t round = 1; round <= rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      residual[i] = objective == BoostObjective::kSquaredError ? y[i] - f[i]
                                                               : y[i] - Sigmoid(f[i]);
    }
    const Stump stump = find_best_stump(x, residual);
    model.stumps.push_back(stump);
    for (std::size_t i = 0; i < n; ++i) f[i] += shrinkage * stump(x.row(i));
    if (on_round && !on_round(round, TrainLoss(objective, f, y))) break;
  }
  return model;
}

FeatureMatrix StumpsTrainer::encode(const std::vector<Record>& records, std::vector<double>& y,
                                    bool is_train) {
  if (is_train) {
    std::set<std::string> names;
    for (const auto& r : records) {
      const json fc = r.value("feature_columns", json::object());
      for (const auto& [k, v] : fc.items()) {
        if (reference::as_number(v)) names.insert(k);
      }
    }
    features_.assign(names.begin(), names.end());
    if (features_.empty()) {
      throw Error(ErrorCode::kNoNumericFeatures, "no numeric feature column",
                  "data.column_mapping.feature_columns");
    }
    if (!regression_) {
      std::set<std::string> labels;
      for (const auto& r : records) {
        labels.insert(reference::label_text(r.value("target_column", json())));
      }
      if (labels.size() < 2) {
        throw Error(ErrorCode::kSingleClass,
                    std::to_string(labels.size()) + " distinct label(s) in the train split");
      }
      if (labels.size() > 2) {
        throw Error(ErrorCode::kUnsupportedMulticlass,
                    std::to_string(labels.size()) + " classes; boosted stumps are binary");
      }
      labels_.assign(labels.begin(), labels.end());
    }
  }
  FeatureMatrix m;
  m.rows = records.size();
  m.cols = features_.size();
  m.values.assign(m.rows * m.cols, 0.0);
  y.clear();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const json fc = records[i].value("feature_columns", json::object());
    for (std::size_t c = 0; c < features_.size(); ++c) {
      auto it = fc.find(features_[c]);
      if (it != fc.end()) m.values[i * m.cols + c] = reference::as_number(*it).value_or(0.0);
    }
    const json target = records[i].value("target_column", json());
    if (regression_) {
      const auto v = reference::as_number(target);
      if (!v) {
        throw Error(ErrorCode::kInvalidValue,
                    "non-numeric target in record " + std::to_string(i));
      }
      y.push_back(*v);
    } else {
      const auto it = std::find(labels_.begin(), labels_.end(), reference::label_text(target));
      y.push_back(static_cast<double>(it - labels_.begin()));
    }
  }
  return m;
}

void StumpsTrainer::prepare(const ValidatedProject& project, const ProcessedDataset& data) {
  rounds_ = project.params.get_int("rounds");
  shrinkage_ = project.params.get_float("shrinkage");
  train_x_ = encode(data.train, train_y_, true);
  valid_x_.reset();
  if (data.valid) valid_x_ = encode(*data.valid, valid_y_, false);
  model_ = {};
}

void StumpsTrainer::fit(const std::function<bool(std::int64_t, double)>& on_round,
                        const std::atomic<bool>* stop) {
  model_ = train_boosted_stumps(
      train_x_, train_y_,
      regression_ ? BoostObjective::kSquaredError : BoostObjective::kLogistic, rounds_,
      shrinkage_, [&](std::int64_t round, double loss) {
        const bool go_on = on_round(round, loss);
        return go_on && !(stop != nullptr && stop->load());
      });
}

MetricReport StumpsTrainer::evaluate(EvalSplit split) const {
  const FeatureMatrix& x = split == EvalSplit::kTrain ? train_x_ : *valid_x_;
  const std::vector<double>& y = split == EvalSplit::kTrain ? train_y_ : valid_y_;
  std::vector<double> scores(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) scores[i] = model_.score(x.row(i));
  if (regression_) {
    MetricReport r = compute_metrics(ProblemKind::kRegression, scores, y);
    r.values["loss"] = r.values["mse"];
    return r;
  }
  std::vector<double> preds(x.rows);
  double loss = 0;
  std::size_t known = 0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    preds[i] = scores[i] > 0 ? 1.0 : 0.0;
    if (y[i] <= 1.0) {
      loss += LogLoss(scores[i], y[i]);
      ++known;
    }
  }
  MetricReport r = compute_metrics(ProblemKind::kClassification, preds, y);
  r.values["loss"] = known ? loss / static_cast<double>(known) : 0.0;
  return r;
}

std::vector<double> StumpsTrainer::state() const {
  std::vector<double> out = {model_.f0, model_.shrinkage};
  for (const auto& s : model_.stumps) {
    out.insert(out.end(), {static_cast<double>(s.feature), s.threshold, s.left, s.right});
  }
  return out;
}

void StumpsTrainer::export_artifact(const std::filesystem::path& dir, json& metadata) const {
  metadata["model"] = {
      {"kind", "boosted-stumps"},
      {"objective", regression_ ? "squared_error" : "logistic"},
      {"rounds", model_.stumps.size()},
      {"shrinkage", model_.shrinkage},
      {"f0", model_.f0},
  };
  metadata["features"] = features_;
  if (!regression_) metadata["labels"] = labels_;
  if (dir.empty()) return;
  BinaryBlob blob;
  blob.header = metadata["model"];
  blob.header["features"] = features_;
  blob.arrays.push_back({model_.f0, model_.shrinkage});
  std::vector<double> stumps;
  for (const auto& s : model_.stumps) {
    stumps.insert(stumps.end(), {static_cast<double>(s.feature), s.threshold, s.left, s.right});
  }
  blob.arrays.push_back(std::move(stumps));
  write_blob(dir / "model.bin", kModelMagic, kModelFormatVersion, blob);
}

}  // namespace trainforge
