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
#include <vector>

namespace trainforge::testing {

struct FuzzReport {
  int sequences = 0;
  int requests = 0;
  int server_errors = 0;       // any 5xx
  int illegal_transitions = 0;
  int malformed_errors = 0;    // error bodies without {error, detail}
  std::vector<std::string> findings;  // first few problems, for the log
};

// Drives an in-process app server with random create / upload / start /
// stop / poll sequences and checks every observed project state change
// against the declared lifecycle edges.
FuzzReport run_api_fuzz(int sequences, std::uint64_t seed);

}  // namespace trainforge::testing
