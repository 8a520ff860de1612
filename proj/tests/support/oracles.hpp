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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "trainforge/reference/boosted_stumps.hpp"

namespace trainforge::testing {

// ||analytic - numeric|| / (||analytic|| + ||numeric||) with central
// differences of step h; 0 when both gradients vanish.
double gradient_rel_error(const std::function<double(std::span<const double>)>& loss,
                          const std::function<void(std::span<const double>, std::span<double>)>& grad,
                          std::vector<double> params, double h = 1e-5);

// Worst gradient check over seeds 0..seeds-1 on random small instances.
double softmax_text_gradcheck(int seeds, bool regression);
double causal_lm_gradcheck(int seeds);

// Cross-entropy of next-token prediction written out with plain loops.
double lm_block_loss_oracle(std::span<const double> params, std::size_t dim,
                            std::span<const int> block);

// Exhaustive least-squares stump: every (feature, midpoint) candidate in
// order, SSE summed directly, first candidate within the tie tolerance.
Stump brute_force_stump(const FeatureMatrix& x, std::span<const double> targets);

// Residual-replay check: true when every stump of a squared-error model
// equals the brute-force stump fitted to that round's residuals.
bool stumps_match_brute_force(const FeatureMatrix& x, std::span<const double> y,
                              const BoostedStumpModel& model, std::string* why = nullptr);

// Whitespace tokens, integer vocabulary, perceptron until an epoch without
// mistakes. Returns the epoch count, or -1 when max_epochs pass.
int perceptron_epochs_to_separate(const std::vector<std::string>& texts,
                                  const std::vector<int>& labels, int max_epochs = 100);

// Least squares on whitespace-token counts plus intercept; returns r2.
double least_squares_token_r2(const std::vector<std::string>& texts, const std::vector<double>& y);

}  // namespace trainforge::testing
