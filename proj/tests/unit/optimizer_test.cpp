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

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "trainforge/metrics.hpp"
#include "trainforge/optimizer.hpp"
#include "trainforge/rng.hpp"

namespace trainforge {
namespace {

// Scalar AdamW written out independently of the library.
struct ScalarAdam {
  double m = 0, v = 0;
  int t = 0;
  double step(double theta, double g, double lr, double wd = 0, double b1 = 0.9,
              double b2 = 0.999, double eps = 1e-8) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    return theta - lr * (mh / (std::sqrt(vh) + eps) + wd * theta);
  }
};

TEST(AdamW, HandComputedSingleStep) {
  std::vector<double> theta = {0.0};
  const std::vector<double> g = {1.0};
  OptimizerState st;
  adamw_step(theta, g, st, 0.1);
  EXPECT_NEAR(st.m[0], 0.1, 1e-15);
  EXPECT_NEAR(st.v[0], 0.001, 1e-15);
  EXPECT_NEAR(theta[0], -0.1 / (1 + 1e-8), 1e-12);
}

TEST(AdamW, MatchesScalarOracleOverManySteps) {
  CounterRng rng(5);
  std::vector<double> theta = {0.3, -1.2, 2.0};
  OptimizerState st;
  st.hp.weight_decay = 0.01;
  std::vector<ScalarAdam> oracle(3);
  std::vector<double> expect = theta;
  for (int k = 0; k < 50; ++k) {
    std::vector<double> g(3);
    for (auto& x : g) x = rng.normal();
    adamw_step(theta, g, st, 0.01);
    for (int i = 0; i < 3; ++i) expect[i] = oracle[i].step(expect[i], g[i], 0.01, 0.01);
  }
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(theta[i], expect[i], 1e-12);
}

TEST(AdamW, ZeroGradientAndZeroLr) {
  std::vector<double> theta = {1.5, -2.0};
  OptimizerState st;
  adamw_step(theta, std::vector<double>{0, 0}, st, 0.1);
  EXPECT_EQ(theta, (std::vector<double>{1.5, -2.0}));

  OptimizerState st2;
  adamw_step(theta, std::vector<double>{1, 1}, st2, 0.0);
  EXPECT_EQ(theta, (std::vector<double>{1.5, -2.0}));
  EXPECT_NEAR(st2.m[0], 0.1, 1e-15);
  EXPECT_EQ(st2.t, 1);
}

TEST(Sgd, PlainStep) {
  std::vector<double> theta = {1.0};
  OptimizerState st;
  sgd_step(theta, std::vector<double>{2.0}, st, 0.25);
  EXPECT_DOUBLE_EQ(theta[0], 0.5);
}

TEST(Scheduler, Endpoints) {
  EXPECT_DOUBLE_EQ(scheduler_lr(SchedulerKind::kLinear, 3e-5, 0, 100), 3e-5);
  EXPECT_DOUBLE_EQ(scheduler_lr(SchedulerKind::kLinear, 3e-5, 100, 100), 0.0);
  EXPECT_NEAR(scheduler_lr(SchedulerKind::kCosine, 1.0, 50, 100), 0.5, 1e-15);
  EXPECT_DOUBLE_EQ(scheduler_lr(SchedulerKind::kConstant, 0.7, 99, 100), 0.7);
}

TEST(Scheduler, WarmupRampsThenDecays) {
  const double base = 1.0;
  EXPECT_DOUBLE_EQ(scheduler_lr(SchedulerKind::kLinear, base, 0, 100, 10), 0.0);
  EXPECT_DOUBLE_EQ(scheduler_lr(SchedulerKind::kLinear, base, 5, 100, 10), 0.5);
  EXPECT_DOUBLE_EQ(scheduler_lr(SchedulerKind::kLinear, base, 10, 100, 10), 1.0);
  double prev = 2.0;
  for (int s = 10; s <= 100; ++s) {
    const double lr = scheduler_lr(SchedulerKind::kLinear, base, s, 100, 10);
    EXPECT_LE(lr, prev);
    prev = lr;
  }
  EXPECT_DOUBLE_EQ(prev, 0.0);
}

TEST(Metrics, Classification) {
  const std::vector<double> p = {1, 0, 1, 1}, t = {1, 0, 0, 1};
  const auto r = compute_metrics(ProblemKind::kClassification, p, t);
  EXPECT_DOUBLE_EQ(r.at("accuracy"), 0.75);
  const auto same = compute_metrics(ProblemKind::kClassification, t, t);
  EXPECT_DOUBLE_EQ(same.at("accuracy"), 1.0);
  EXPECT_DOUBLE_EQ(same.at("f1_macro"), 1.0);
}

TEST(Metrics, MacroF1ByHand) {
  // class 0: tp 1, fp 0, fn 1 -> p 1, r .5, f1 2/3; class 1: tp 2, fp 1, fn 0 -> p 2/3, r 1, f1 .8
  const std::vector<double> p = {1, 0, 1, 1}, t = {1, 0, 0, 1};
  const auto r = compute_metrics(ProblemKind::kClassification, p, t);
  EXPECT_NEAR(r.at("precision_macro"), (1.0 + 2.0 / 3) / 2, 1e-12);
  EXPECT_NEAR(r.at("recall_macro"), 0.75, 1e-12);
  EXPECT_NEAR(r.at("f1_macro"), (2.0 / 3 + 0.8) / 2, 1e-12);
}

TEST(Metrics, Regression) {
  const std::vector<double> v = {1, 2, 3};
  const auto r = compute_metrics(ProblemKind::kRegression, v, v);
  EXPECT_DOUBLE_EQ(r.at("mse"), 0.0);
  EXPECT_DOUBLE_EQ(r.at("r2"), 1.0);
  const std::vector<double> c = {2, 2, 2};
  const auto flat = compute_metrics(ProblemKind::kRegression, c, c);
  EXPECT_DOUBLE_EQ(flat.at("r2"), 0.0);
  EXPECT_FALSE(flat.warnings.empty());
}

TEST(Rng, SplitStreamsAreIndependentAndDeterministic) {
  CounterRng root(42);
  auto a = root.split("init"), b = root.split("init"), c = root.split("shuffle");
  const auto x = a.next_u64();
  EXPECT_EQ(x, b.next_u64());
  EXPECT_NE(x, c.next_u64());
  CounterRng r(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(r.below(7), 7u);
  }
}

}  // namespace
}  // namespace trainforge
