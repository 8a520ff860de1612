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
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace trainforge {

// "family" or "family:subtype", e.g. "text-classification", "llm:orpo".
struct TaskId {
  std::string family;
  std::optional<std::string> subtype;

  // Throws MalformedTaskId for empty input or more than one ':'.
  static TaskId parse(std::string_view text);
  std::string canonical() const;

  friend bool operator==(const TaskId&, const TaskId&) = default;
  friend auto operator<=>(const TaskId& a, const TaskId& b) {
    return a.canonical() <=> b.canonical();
  }
};

enum class ParamKind { kInt, kFloat, kBool, kString, kEnum };

using ParamValue = std::variant<bool, std::int64_t, double, std::string>;
using ParamSet = std::map<std::string, ParamValue>;

std::string_view param_kind_name(ParamKind kind);
// Human-readable rendering (used in errors, canonical YAML, metadata).
std::string param_value_to_string(const ParamValue& value);

struct ParamDef {
  std::string name;
  ParamKind kind = ParamKind::kInt;
  ParamValue default_value;
  std::optional<double> min;  // inclusive
  std::optional<double> max;  // inclusive
  std::vector<std::string> allowed;  // kEnum only
  bool power_of_two = false;         // kInt only
  std::string help;
};

// A completed, schema-checked parameter set.
class ValidatedParams {
 public:
  ValidatedParams() = default;
  explicit ValidatedParams(ParamSet values) : values_(std::move(values)) {}

  const ParamSet& values() const { return values_; }
  bool contains(const std::string& name) const { return values_.contains(name); }

  std::int64_t get_int(const std::string& name) const;
  double get_float(const std::string& name) const;  // accepts int values
  bool get_bool(const std::string& name) const;
  const std::string& get_string(const std::string& name) const;

  friend bool operator==(const ValidatedParams&, const ValidatedParams&) = default;

 private:
  ParamSet values_;
};

enum class Modality { kText, kImage, kTabular };
enum class ArtifactKind { kModelWeights, kTabularModel, kAdapterDelegated };
enum class TrainerBinding { kReference, kExternalAdapter };

std::string_view modality_name(Modality m);
std::string_view artifact_kind_name(ArtifactKind k);
std::string_view trainer_binding_name(TrainerBinding b);

struct ColumnRole {
  std::string name;
  bool required = true;
  // Accepts a comma-separated list of source columns.
  bool multi = false;
};

struct TaskSpec {
  TaskId id;
  Modality modality = Modality::kText;
  std::vector<ColumnRole> column_roles;
  std::vector<ParamDef> param_schema;
  ArtifactKind artifact_kind = ArtifactKind::kModelWeights;
  TrainerBinding trainer_binding = TrainerBinding::kReference;

  const ParamDef* find_param(std::string_view name) const;
  const ColumnRole* find_role(std::string_view name) const;
};

// Static, immutable registry of every supported task.
class TaskRegistry {
 public:
  static const TaskRegistry& builtin();

  // Throws UnknownTask (with nearest ids) or MalformedTaskId.
  const TaskSpec& resolve(std::string_view text) const;
  const TaskSpec* find(const TaskId& id) const;
  // Sorted lexicographically by canonical id.
  const std::vector<TaskSpec>& list() const { return specs_; }

 private:
  explicit TaskRegistry(std::vector<TaskSpec> specs);
  std::vector<TaskSpec> specs_;
};

const TaskSpec& resolve_task(std::string_view text);
const std::vector<TaskSpec>& list_tasks();
ParamSet default_params(const TaskSpec& spec);
// Throws UnknownParam / TypeMismatch / OutOfBounds with the param name as
// key path. Missing keys are filled from defaults; ints are widened to
// floats where the schema asks for a float.
ValidatedParams validate_params(const TaskSpec& spec, const ParamSet& params);

}  // namespace trainforge
