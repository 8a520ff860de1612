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

namespace trainforge {

// Counter-based generator: the n-th draw of a stream is a pure function of
// (key, n), so the whole state is two integers and streams split by name
// are independent. Distributions are implemented here rather than through
// <random> so sequences are identical across standard libraries.
class CounterRng {
 public:
  struct State {
    std::uint64_t key = 0;
    std::uint64_t counter = 0;
  };

  explicit CounterRng(std::uint64_t seed) : state_{Mix(seed), 0} {}
  explicit CounterRng(State state) : state_(state) {}

  // Independent child stream; does not advance this generator.
  CounterRng split(std::string_view name) const;
  CounterRng split(std::uint64_t index) const;

  std::uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform();
  // Uniform integer in [0, bound); bound > 0. Rejection-sampled, unbiased.
  std::uint64_t below(std::uint64_t bound);
  double normal();

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

  State state() const { return state_; }

  static std::uint64_t Mix(std::uint64_t x);

 private:
  State state_;
};

}  // namespace trainforge
