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
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace trainforge {

std::uint64_t fnv1a64(std::string_view bytes);

// (index, count) pairs sorted by index, no duplicates.
using SparseVector = std::vector<std::pair<std::uint32_t, double>>;

// Bag of words hashed into a fixed dimension. Tokens are maximal runs of
// ASCII letters/digits or non-ASCII bytes, lowercased; index =
// fnv1a64(token) mod D.
class HashedBowFeaturizer {
 public:
  // Throws InvalidValue unless dimension is a power of two.
  explicit HashedBowFeaturizer(std::uint32_t dimension = 1u << 15);

  std::uint32_t dimension() const { return dimension_; }
  SparseVector featurize(std::string_view text) const;

  static std::vector<std::string> tokenize(std::string_view text);

 private:
  std::uint32_t dimension_;
};

}  // namespace trainforge
