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
#include <span>
#include <string_view>
#include <vector>

namespace trainforge {

struct AdamWHyperParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct OptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;
  AdamWHyperParams hp;
};

// One AdamW update in place:
//   t += 1
//   m = b1*m + (1-b1)*g,  v = b2*v + (1-b2)*g^2
//   mhat = m/(1-b1^t),    vhat = v/(1-b2^t)
//   theta -= lr * (mhat/(sqrt(vhat)+eps) + weight_decay*theta)
// Empty moment vectors are zero-initialised; other size disagreements throw
// ShapeMismatch.
void adamw_step(std::span<double> params, std::span<const double> grads,
                OptimizerState& state, double lr);

// theta -= lr * (g + weight_decay*theta); t counts steps.
void sgd_step(std::span<double> params, std::span<const double> grads,
              OptimizerState& state, double lr);

enum class SchedulerKind { kConstant, kLinear, kCosine };

SchedulerKind parse_scheduler(std::string_view name);

// Learning rate for the update performed at `step` (0-based). Warmup ramps
// linearly from 0; decay then runs over the remaining steps. Throws
// InvalidStep unless 0 <= step <= total_steps.
double scheduler_lr(SchedulerKind kind, double base_lr, std::int64_t step,
                    std::int64_t total_steps, std::int64_t warmup_steps = 0);

}  // namespace trainforge
