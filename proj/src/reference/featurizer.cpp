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

#include "trainforge/reference/featurizer.hpp"

#include <algorithm>
#include <map>

#include "trainforge/error.hpp"

namespace trainforge {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

HashedBowFeaturizer::HashedBowFeaturizer(std::uint32_t dimension) : dimension_(dimension) {
  if (dimension == 0 || (dimension & (dimension - 1)) != 0) {
    throw Error(ErrorCode::kInvalidValue,
                "hash dimension " + std::to_string(dimension) + " is not a power of two",
                "params.hash_dim");
  }
}

std::vector<std::string> HashedBowFeaturizer::tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    const bool word = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') ||
                      (c >= 'A' && c <= 'Z') || c >= 0x80;
    if (word) {
      cur.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

SparseVector HashedBowFeaturizer::featurize(std::string_view text) const {
  std::map<std::uint32_t, double> counts;
  for (const auto& t : tokenize(text)) {
    counts[static_cast<std::uint32_t>(fnv1a64(t) & (dimension_ - 1))] += 1.0;
  }
  return SparseVector(counts.begin(), counts.end());
}

}  // namespace trainforge
