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

#include <map>
#include <span>
#include <string>
#include <vector>

#include "trainforge/task_registry.hpp"

namespace trainforge {

struct MetricReport {
  std::map<std::string, double> values;
  std::vector<std::string> warnings;

  double at(const std::string& name) const { return values.at(name); }
};

enum class ProblemKind { kClassification, kRegression };

// Classification labels are class indices stored as doubles.
// Classification: accuracy, precision_macro, recall_macro, f1_macro over the
// classes present in targets or predictions. Regression: mse, mae, r2, with
// r2 = 0 plus a warning when the targets have zero variance.
// Throws LengthMismatch, EmptyInput.
MetricReport compute_metrics(ProblemKind kind, std::span<const double> predictions,
                             std::span<const double> targets);

// Throws NotSupported for tasks without a metric family.
ProblemKind problem_kind_for(const TaskId& task);

}  // namespace trainforge
