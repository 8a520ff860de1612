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

#include "trainforge/reference/boosted_stumps.hpp"
#include "trainforge/reference/softmax_text_model.hpp"
#include "trainforge/reference/tiny_causal_lm.hpp"
#include "trainforge/trainer.hpp"

namespace trainforge {

TrainerBindings TrainerBindings::with_reference_trainers() {
  TrainerBindings b;
  b.bind_reference(TaskId::parse("text-classification"),
                   [] { return TrainerHandle(std::make_shared<TextTrainer>(false)); });
  b.bind_reference(TaskId::parse("text-regression"),
                   [] { return TrainerHandle(std::make_shared<TextTrainer>(true)); });
  b.bind_reference(TaskId::parse("llm:sft"),
                   [] { return TrainerHandle(std::make_shared<CausalLmTrainer>()); });
  b.bind_reference(TaskId::parse("tabular:classification"),
                   [] { return TrainerHandle(std::make_shared<StumpsTrainer>(false)); });
  b.bind_reference(TaskId::parse("tabular:regression"),
                   [] { return TrainerHandle(std::make_shared<StumpsTrainer>(true)); });
  return b;
}

}  // namespace trainforge
