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

#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "trainforge/task_registry.hpp"

namespace trainforge {

using Env = std::map<std::string, std::string>;

// Snapshot of the process environment.
Env current_env();

enum class LogKind { kEventLog, kNone };
enum class BackendKind { kLocal, kDocker, kSpacesStub };
enum class ChatTemplateId { kZephyr, kChatml, kNone };

std::string_view backend_name(BackendKind b);
std::string_view chat_template_name(ChatTemplateId t);

// A secret string. When the configured text was exactly one `${NAME}`
// placeholder the placeholder is kept so it can be re-emitted instead of
// the value.
struct Secret {
  std::string value;
  std::optional<std::string> placeholder;

  friend bool operator==(const Secret&, const Secret&) = default;
};

struct DataConfig {
  std::string path;
  std::string train_split;
  std::optional<std::string> valid_split;
  std::optional<ChatTemplateId> chat_template;
  std::map<std::string, std::string> column_mapping;  // role -> source column

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct HubConfig {
  std::optional<std::string> username;
  std::optional<Secret> token;
  bool push_to_hub = false;

  friend bool operator==(const HubConfig&, const HubConfig&) = default;
};

struct ProjectConfig {
  TaskId task;
  std::string base_model;
  std::string project_name;
  LogKind log = LogKind::kEventLog;
  BackendKind backend = BackendKind::kLocal;
  DataConfig data;
  ParamSet params;  // as written; defaults are filled by validate_config
  HubConfig hub;

  friend bool operator==(const ProjectConfig&, const ProjectConfig&) = default;
};

struct ValidatedProject {
  ProjectConfig config;
  const TaskSpec* spec = nullptr;
  ValidatedParams params;
};

// Replaces every ${NAME} (NAME = [A-Z_][A-Z0-9_]*) in one left-to-right
// pass; substituted text is never rescanned. Throws MissingEnvVar.
std::string interpolate_env(std::string_view text, const Env& env);

// Throws YamlSyntax, UnknownKey, MissingRequiredKey, MissingEnvVar,
// MalformedTaskId, InvalidValue.
ProjectConfig parse_config(std::string_view text, const Env& env);

ValidatedProject validate_config(const ProjectConfig& cfg,
                                 const TaskRegistry& registry = TaskRegistry::builtin());

// Deterministic YAML. Secrets never appear in clear text.
std::string canonicalize(const ProjectConfig& cfg);

}  // namespace trainforge
