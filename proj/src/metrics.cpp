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

#include "trainforge/metrics.hpp"

#include <cmath>
#include <set>

#include "trainforge/error.hpp"

namespace trainforge {

MetricReport compute_metrics(ProblemKind kind, std::span<const double> predictions,
                             std::span<const double> targets) {
  if (predictions.size() != targets.size()) {
    throw Error(ErrorCode::kLengthMismatch,
                std::to_string(predictions.size()) + " predictions vs " +
                    std::to_string(targets.size()) + " targets");
  }
  if (targets.empty()) throw Error(ErrorCode::kEmptyInput, "no examples");
  const double n = static_cast<double>(targets.size());
  MetricReport report;

  if (kind == ProblemKind::kClassification) {
    std::set<double> classes(targets.begin(), targets.end());
    classes.insert(predictions.begin(), predictions.end());
    double correct = 0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
      if (predictions[i] == targets[i]) correct += 1;
    }
    double p_sum = 0, r_sum = 0, f_sum = 0;
    for (double c : classes) {
      double tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < targets.size(); ++i) {
        const bool pred = predictions[i] == c;
        const bool truth = targets[i] == c;
        tp += pred && truth;
        fp += pred && !truth;
        fn += !pred && truth;
      }
      const double p = tp + fp > 0 ? tp / (tp + fp) : 0.0;
      const double r = tp + fn > 0 ? tp / (tp + fn) : 0.0;
      const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
      p_sum += p;
      r_sum += r;
      f_sum += f;
    }
    const double k = static_cast<double>(classes.size());
    report.values["accuracy"] = correct / n;
    report.values["precision_macro"] = p_sum / k;
    report.values["recall_macro"] = r_sum / k;
    report.values["f1_macro"] = f_sum / k;
    return report;
  }

  double mean = 0;
  for (double t : targets) mean += t;
  mean /= n;
  double ss_res = 0, ss_tot = 0, abs_sum = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double e = predictions[i] - targets[i];
    ss_res += e * e;
    abs_sum += std::abs(e);
    ss_tot += (targets[i] - mean) * (targets[i] - mean);
  }
  report.values["mse"] = ss_res / n;
  report.values["mae"] = abs_sum / n;
  if (ss_tot == 0.0) {
    report.values["r2"] = 0.0;
    report.warnings.push_back("r2 undefined for zero target variance; reported as 0");
  } else {
    report.values["r2"] = 1.0 - ss_res / ss_tot;
  }
  return report;
}

ProblemKind problem_kind_for(const TaskId& task) {
  const std::string id = task.canonical();
  if (id == "text-classification" || id == "tabular:classification" ||
      id == "image-classification" || id == "sentence-transformers:pair_class") {
    return ProblemKind::kClassification;
  }
  if (id == "text-regression" || id == "tabular:regression" ||
      id == "image-regression" || id == "sentence-transformers:pair_score") {
    return ProblemKind::kRegression;
  }
  throw Error(ErrorCode::kNotSupported, "no metric family for " + id);
}

}  // namespace trainforge
