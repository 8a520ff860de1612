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

#include "trainforge/reference/tiny_causal_lm.hpp"

#include <algorithm>
#include <cmath>

#include "trainforge/checkpoint.hpp"
#include "trainforge/error.hpp"

namespace trainforge {
using nlohmann::json;

namespace {

constexpr std::size_t kV = kLmVocab;

std::vector<std::vector<int>> BlocksFor(const std::vector<Record>& records, std::int64_t block,
                                        std::int64_t max_len, PadSide side, bool require) {
  std::vector<std::string> texts;
  bool any = false;
  for (const auto& r : records) {
    const json t = r.value("text_column", json());
    texts.push_back(t.is_string() ? t.get<std::string>() : "");
    any = any || !texts.back().empty();
  }
  if (require && !any) throw Error(ErrorCode::kEmptyText, "no text in the train split");
  auto blocks = pack_blocks(texts, block, max_len, side);
  if (require && blocks.empty()) {
    throw Error(ErrorCode::kEmptyText, "train text yields no block with two tokens");
  }
  return blocks;
}

}  // namespace

std::vector<std::vector<int>> pack_blocks(const std::vector<std::string>& texts,
                                          std::int64_t block_size,
                                          std::int64_t model_max_length, PadSide side) {
  if (block_size < 2) {
    throw Error(ErrorCode::kOutOfBounds, "block_size must be >= 2", "params.block_size");
  }
  std::vector<int> stream;
  for (const auto& text : texts) {
    std::vector<int> seq;
    seq.reserve(text.size() + 1);
    for (unsigned char c : text) seq.push_back(c);
    seq.push_back(kLmEos);
    if (static_cast<std::int64_t>(seq.size()) > model_max_length) {
      seq.resize(static_cast<std::size_t>(model_max_length));
    }
    stream.insert(stream.end(), seq.begin(), seq.end());
  }
  const auto b = static_cast<std::size_t>(block_size);
  std::vector<std::vector<int>> blocks;
  for (std::size_t i = 0; i < stream.size(); i += b) {
    const std::size_t len = std::min(b, stream.size() - i);
    if (len < 2) continue;
    std::vector<int> block(stream.begin() + static_cast<std::ptrdiff_t>(i),
                           stream.begin() + static_cast<std::ptrdiff_t>(i + len));
    if (len < b) {
      block.insert(side == PadSide::kRight ? block.end() : block.begin(), b - len, kLmPad);
    }
    blocks.push_back(std::move(block));
  }
  return blocks;
}

std::vector<double> TinyCausalLM::init(CounterRng rng) const {
  std::vector<double> p(num_params());
  for (double& x : p) x = 0.1 * rng.normal();
  return p;
}

double TinyCausalLM::block_loss(std::span<const double> params, std::span<const int> block) const {
  const double* E = params.data();
  const double* U = params.data() + kV * dim_;
  double total = 0;
  std::size_t pairs = 0;
  std::vector<double> z(kV);
  for (std::size_t t = 0; t + 1 < block.size(); ++t) {
    if (block[t] == kLmPad || block[t + 1] == kLmPad) continue;
    const double* h = E + static_cast<std::size_t>(block[t]) * dim_;
    std::fill(z.begin(), z.end(), 0.0);
    for (std::size_t k = 0; k < dim_; ++k) {
      const double* u = U + k * kV;
      for (std::size_t v = 0; v < kV; ++v) z[v] += h[k] * u[v];
    }
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0;
    for (double x : z) sum += std::exp(x - zmax);
    total += zmax + std::log(sum) - z[static_cast<std::size_t>(block[t + 1])];
    ++pairs;
  }
  return pairs ? total / static_cast<double>(pairs) : 0.0;
}

double TinyCausalLM::loss_and_grad(std::span<const double> params,
                                   std::span<const std::vector<int>* const> blocks,
                                   std::span<double> grad) const {
  if (params.size() != num_params() || grad.size() != num_params()) {
    throw Error(ErrorCode::kShapeMismatch, "tiny causal lm buffers");
  }
  std::fill(grad.begin(), grad.end(), 0.0);
  if (blocks.empty()) return 0.0;
  const double* E = params.data();
  const double* U = params.data() + kV * dim_;
  double* gE = grad.data();
  double* gU = grad.data() + kV * dim_;
  const double inv_blocks = 1.0 / static_cast<double>(blocks.size());
  double total = 0;
  std::vector<double> z(kV);
  for (const auto* block : blocks) {
    std::size_t pairs = 0;
    for (std::size_t t = 0; t + 1 < block->size(); ++t) {
      if ((*block)[t] != kLmPad && (*block)[t + 1] != kLmPad) ++pairs;
    }
    if (pairs == 0) continue;
    const double w = inv_blocks / static_cast<double>(pairs);
    double block_total = 0;
    for (std::size_t t = 0; t + 1 < block->size(); ++t) {
      const int x = (*block)[t];
      const int y = (*block)[t + 1];
      if (x == kLmPad || y == kLmPad) continue;
      const double* h = E + static_cast<std::size_t>(x) * dim_;
      std::fill(z.begin(), z.end(), 0.0);
      for (std::size_t k = 0; k < dim_; ++k) {
        const double* u = U + k * kV;
        for (std::size_t v = 0; v < kV; ++v) z[v] += h[k] * u[v];
      }
      const double zmax = *std::max_element(z.begin(), z.end());
      double sum = 0;
      for (double s : z) sum += std::exp(s - zmax);
      const double log_sum = zmax + std::log(sum);
      block_total += log_sum - z[static_cast<std::size_t>(y)];
      // z now holds dLoss/dlogits scaled by the pair weight.
      for (std::size_t v = 0; v < kV; ++v) {
        z[v] = (std::exp(z[v] - log_sum) - (v == static_cast<std::size_t>(y) ? 1.0 : 0.0)) * w;
      }
      double* gh = gE + static_cast<std::size_t>(x) * dim_;
      for (std::size_t k = 0; k < dim_; ++k) {
        const double* u = U + k * kV;
        double* gu = gU + k * kV;
        double acc = 0;
        for (std::size_t v = 0; v < kV; ++v) {
          gu[v] += h[k] * z[v];
          acc += u[v] * z[v];
        }
        gh[k] += acc;
      }
    }
    total += block_total / static_cast<double>(pairs) * inv_blocks;
  }
  return total;
}

void CausalLmTrainer::prepare(const ValidatedProject& project, const ProcessedDataset& data) {
  const auto& p = project.params;
  block_size_ = p.get_int("block_size");
  const std::int64_t max_len = p.get_int("model_max_length");
  if (block_size_ > max_len) {
    throw Error(ErrorCode::kBlockSizeExceedsMaxLength,
                "block_size " + std::to_string(block_size_) + " > model_max_length " +
                    std::to_string(max_len),
                "params.block_size");
  }
  const PadSide side = p.get_string("padding") == "left" ? PadSide::kLeft : PadSide::kRight;
  model_ = std::make_unique<TinyCausalLM>(static_cast<std::size_t>(p.get_int("embedding_dim")));
  train_ = BlocksFor(data.train, block_size_, max_len, side, true);
  valid_.reset();
  if (data.valid) valid_ = BlocksFor(*data.valid, block_size_, max_len, side, false);
}

std::vector<double> CausalLmTrainer::init_model(CounterRng rng) const {
  return model_->init(rng);
}

double CausalLmTrainer::forward_backward(std::span<const double> params,
                                         std::span<const std::size_t> batch,
                                         std::span<double> grad) const {
  std::vector<const std::vector<int>*> blocks;
  blocks.reserve(batch.size());
  for (std::size_t i : batch) blocks.push_back(&train_[i]);
  return model_->loss_and_grad(params, blocks, grad);
}

MetricReport CausalLmTrainer::evaluate(std::span<const double> params, EvalSplit split) const {
  const auto& blocks = split == EvalSplit::kTrain ? train_ : *valid_;
  double total = 0;
  for (const auto& b : blocks) total += model_->block_loss(params, b);
  const double loss = blocks.empty() ? 0.0 : total / static_cast<double>(blocks.size());
  MetricReport report;
  report.values["loss"] = loss;
  report.values["perplexity"] = std::exp(loss);
  return report;
}

void CausalLmTrainer::export_artifact(std::span<const double> params,
                                      const std::filesystem::path& dir, json& metadata) const {
  metadata["model"] = {
      {"kind", "byte-bigram-lm"},
      {"vocab", "bytes+pad+eos"},
      {"vocab_size", kLmVocab},
      {"pad_id", kLmPad},
      {"eos_id", kLmEos},
      {"embedding_dim", model_->dim()},
      {"block_size", block_size_},
  };
  if (dir.empty()) return;
  const auto half = static_cast<std::ptrdiff_t>(kV * model_->dim());
  BinaryBlob blob;
  blob.header = metadata["model"];
  blob.arrays.emplace_back(params.begin(), params.begin() + half);
  blob.arrays.emplace_back(params.begin() + half, params.end());
  write_blob(dir / "model.bin", kModelMagic, kModelFormatVersion, blob);
}

}  // namespace trainforge
