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

#include "trainforge/optimizer.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "trainforge/error.hpp"

namespace trainforge {
namespace {

void CheckShapes(std::span<double> params, std::span<const double> grads,
                 OptimizerState& state) {
  if (grads.size() != params.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "params " + std::to_string(params.size()) + " vs grads " +
                    std::to_string(grads.size()));
  }
  if (state.m.empty() && state.v.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "optimizer moments sized " + std::to_string(state.m.size()) +
                    " for " + std::to_string(params.size()) + " params");
  }
}

}  // namespace

void adamw_step(std::span<double> params, std::span<const double> grads,
                OptimizerState& state, double lr) {
  CheckShapes(params, grads, state);
  const auto& hp = state.hp;
  state.t += 1;
  const double bias1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
  const double bias2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
    state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
    const double m_hat = state.m[i] / bias1;
    const double v_hat = state.v[i] / bias2;
    params[i] -= lr * (m_hat / (std::sqrt(v_hat) + hp.eps) + hp.weight_decay * params[i]);
  }
}

void sgd_step(std::span<double> params, std::span<const double> grads,
              OptimizerState& state, double lr) {
  if (grads.size() != params.size()) {
    throw Error(ErrorCode::kShapeMismatch, "params/grads size differ");
  }
  state.t += 1;
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i] -= lr * (grads[i] + state.hp.weight_decay * params[i]);
  }
}

SchedulerKind parse_scheduler(std::string_view name) {
  if (name == "constant") return SchedulerKind::kConstant;
  if (name == "linear") return SchedulerKind::kLinear;
  if (name == "cosine") return SchedulerKind::kCosine;
  throw Error(ErrorCode::kInvalidValue, "unknown scheduler " + std::string(name),
              "params.scheduler");
}

double scheduler_lr(SchedulerKind kind, double base_lr, std::int64_t step,
                    std::int64_t total_steps, std::int64_t warmup_steps) {
  if (step < 0 || step > total_steps || warmup_steps < 0) {
    throw Error(ErrorCode::kInvalidStep,
                "step " + std::to_string(step) + " outside [0, " +
                    std::to_string(total_steps) + "]");
  }
  if (kind == SchedulerKind::kConstant) return base_lr;
  if (step < warmup_steps) {
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  const std::int64_t span = total_steps - warmup_steps;
  if (span <= 0) return base_lr;
  const double progress =
      static_cast<double>(step - warmup_steps) / static_cast<double>(span);
  if (kind == SchedulerKind::kLinear) return base_lr * (1.0 - progress);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace trainforge
