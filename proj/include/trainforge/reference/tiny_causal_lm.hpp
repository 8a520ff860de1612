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
#include <vector>

#include "trainforge/trainer.hpp"

namespace trainforge {

inline constexpr int kLmPad = 256;
inline constexpr int kLmEos = 257;
inline constexpr int kLmVocab = 258;

enum class PadSide { kRight, kLeft };

// Each text becomes its bytes plus eos, truncated to model_max_length; the
// concatenated stream is cut into blocks of block_size and the final short
// block is padded. Blocks with fewer than two real tokens are dropped.
std::vector<std::vector<int>> pack_blocks(const std::vector<std::string>& texts,
                                          std::int64_t block_size,
                                          std::int64_t model_max_length, PadSide side);

// Byte-level bigram model: logits(next | x) = E[x] . U with E (V x d) and
// U (d x V), stored in that order.
class TinyCausalLM {
 public:
  explicit TinyCausalLM(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t num_params() const { return 2 * static_cast<std::size_t>(kLmVocab) * dim_; }
  std::vector<double> init(CounterRng rng) const;

  // Mean cross-entropy over the non-pad (input, target) pairs of one block.
  double block_loss(std::span<const double> params, std::span<const int> block) const;
  // Mean over blocks of block_loss; grad is overwritten.
  double loss_and_grad(std::span<const double> params,
                       std::span<const std::vector<int>* const> blocks,
                       std::span<double> grad) const;

 private:
  std::size_t dim_;
};

// llm:sft trainer over the text_column role. Throws
// BlockSizeExceedsMaxLength, EmptyText.
class CausalLmTrainer : public TrainerContract {
 public:
  void prepare(const ValidatedProject& project, const ProcessedDataset& data) override;
  std::size_t num_train_examples() const override { return train_.size(); }
  std::vector<double> init_model(CounterRng rng) const override;
  double forward_backward(std::span<const double> params, std::span<const std::size_t> batch,
                          std::span<double> grad) const override;
  bool has_valid() const override { return valid_.has_value(); }
  MetricReport evaluate(std::span<const double> params, EvalSplit split) const override;
  void export_artifact(std::span<const double> params, const std::filesystem::path& dir,
                       nlohmann::json& metadata) const override;

 private:
  std::unique_ptr<TinyCausalLM> model_;
  std::int64_t block_size_ = 0;
  std::vector<std::vector<int>> train_;
  std::optional<std::vector<std::vector<int>>> valid_;
};

}  // namespace trainforge
