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

#include "trainforge/project_config.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cmath>
#include <regex>
#include <set>
#include <sstream>

#include "trainforge/error.hpp"

extern char** environ;

namespace trainforge {
namespace {

bool IsEnvNameStart(char c) { return (c >= 'A' && c <= 'Z') || c == '_'; }
bool IsEnvNameChar(char c) { return IsEnvNameStart(c) || (c >= '0' && c <= '9'); }

// Returns NAME when text is exactly "${NAME}".
std::optional<std::string> SolePlaceholder(std::string_view text) {
  if (text.size() < 4 || !text.starts_with("${") || text.back() != '}') {
    return std::nullopt;
  }
  const std::string_view name = text.substr(2, text.size() - 3);
  if (name.empty() || !IsEnvNameStart(name[0])) return std::nullopt;
  for (char c : name) {
    if (!IsEnvNameChar(c)) return std::nullopt;
  }
  return std::string(text);
}

const std::regex& IntPattern() {
  static const std::regex re("[-+]?[0-9]+");
  return re;
}
const std::regex& FloatPattern() {
  static const std::regex re(
      R"([-+]?(\.[0-9]+|[0-9]+(\.[0-9]*)?)([eE][-+]?[0-9]+)?)");
  return re;
}

bool IsNullText(const std::string& s) {
  return s.empty() || s == "~" || s == "null" || s == "Null" || s == "NULL";
}
std::optional<bool> BoolText(const std::string& s) {
  if (s == "true" || s == "True" || s == "TRUE") return true;
  if (s == "false" || s == "False" || s == "FALSE") return false;
  return std::nullopt;
}

bool IsPlain(const YAML::Node& n) { return n.Tag() == "?" || n.Tag().empty(); }

// Typed view of a scalar after interpolation, using the YAML 1.2 core
// schema for plain scalars. Quoted scalars are always strings.
ParamValue InferScalar(const std::string& text, bool plain, const std::string& path) {
  if (!plain) return text;
  if (auto b = BoolText(text)) return *b;
  if (std::regex_match(text, IntPattern())) {
    std::int64_t v = 0;
    const char* begin = text.data() + (text[0] == '+' ? 1 : 0);
    auto [ptr, ec] = std::from_chars(begin, text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      throw Error(ErrorCode::kInvalidValue, "integer out of range: " + text, path);
    }
    return v;
  }
  if (std::regex_match(text, FloatPattern())) return std::stod(text);
  return text;
}

class Parser {
 public:
  explicit Parser(const Env& env) : env_(env) {}

  ProjectConfig Parse(std::string_view text) {
    YAML::Node root;
    try {
      root = YAML::Load(std::string(text));
    } catch (const YAML::Exception& e) {
      throw Error(ErrorCode::kYamlSyntax, e.what());
    }
    if (root.IsNull() || !root.IsDefined()) {
      throw Error(ErrorCode::kMissingRequiredKey, "required key is missing", "task");
    }
    if (!root.IsMap()) {
      throw Error(ErrorCode::kYamlSyntax, "top level must be a mapping");
    }
    CheckKeys(root, "", {"task", "base_model", "project_name", "log", "backend",
                         "data", "params", "hub"});

    ProjectConfig cfg;
    cfg.task = TaskId::parse(RequiredString(root, "task", "task"));
    cfg.base_model = RequiredString(root, "base_model", "base_model");
    cfg.project_name = RequiredString(root, "project_name", "project_name");

    if (auto log = OptionalString(root, "log", "log")) {
      if (*log == "tensorboard" || *log == "eventlog") {
        cfg.log = LogKind::kEventLog;
      } else if (*log == "none") {
        cfg.log = LogKind::kNone;
      } else {
        throw Error(ErrorCode::kInvalidValue,
                    "'" + *log + "' not in {tensorboard|eventlog|none}", "log");
      }
    }
    if (auto backend = OptionalString(root, "backend", "backend")) {
      if (*backend == "local") {
        cfg.backend = BackendKind::kLocal;
      } else if (*backend == "docker") {
        cfg.backend = BackendKind::kDocker;
      } else if (*backend == "spaces-stub") {
        cfg.backend = BackendKind::kSpacesStub;
      } else {
        throw Error(ErrorCode::kInvalidValue,
                    "'" + *backend + "' not in {local|docker|spaces-stub}",
                    "backend");
      }
    }

    const YAML::Node data = root["data"];
    if (!data || data.IsNull()) {
      throw Error(ErrorCode::kMissingRequiredKey, "required key is missing", "data");
    }
    RequireMap(data, "data");
    CheckKeys(data, "data.", {"path", "train_split", "valid_split",
                              "chat_template", "column_mapping"});
    cfg.data.path = RequiredString(data, "path", "data.path");
    cfg.data.train_split = RequiredString(data, "train_split", "data.train_split");
    cfg.data.valid_split = OptionalString(data, "valid_split", "data.valid_split");
    if (auto tpl = OptionalString(data, "chat_template", "data.chat_template")) {
      if (*tpl == "zephyr") {
        cfg.data.chat_template = ChatTemplateId::kZephyr;
      } else if (*tpl == "chatml") {
        cfg.data.chat_template = ChatTemplateId::kChatml;
      } else if (*tpl == "none") {
        cfg.data.chat_template = ChatTemplateId::kNone;
      } else {
        throw Error(ErrorCode::kInvalidValue,
                    "'" + *tpl + "' not in {zephyr|chatml|none}",
                    "data.chat_template");
      }
    }
    if (const YAML::Node mapping = data["column_mapping"];
        mapping && !mapping.IsNull()) {
      RequireMap(mapping, "data.column_mapping");
      for (const auto& kv : mapping) {
        const std::string role = kv.first.as<std::string>();
        const std::string path = "data.column_mapping." + role;
        if (!kv.second.IsScalar()) {
          throw Error(ErrorCode::kInvalidValue, "expected a column name", path);
        }
        cfg.data.column_mapping[role] = Interpolate(kv.second.Scalar(), path);
      }
    }

    if (const YAML::Node params = root["params"]; params && !params.IsNull()) {
      RequireMap(params, "params");
      for (const auto& kv : params) {
        const std::string name = kv.first.as<std::string>();
        const std::string path = "params." + name;
        if (!kv.second.IsScalar()) {
          throw Error(ErrorCode::kTypeMismatch, "expected a scalar", path);
        }
        const std::string text = Interpolate(kv.second.Scalar(), path);
        cfg.params[name] = InferScalar(text, IsPlain(kv.second), path);
      }
    }

    if (const YAML::Node hub = root["hub"]; hub && !hub.IsNull()) {
      RequireMap(hub, "hub");
      CheckKeys(hub, "hub.", {"username", "token", "push_to_hub"});
      cfg.hub.username = OptionalString(hub, "username", "hub.username");
      if (const YAML::Node tok = hub["token"]; tok && !IsNullScalar(tok)) {
        if (!tok.IsScalar()) {
          throw Error(ErrorCode::kInvalidValue, "expected a string", "hub.token");
        }
        Secret secret;
        secret.placeholder = SolePlaceholder(tok.Scalar());
        secret.value = Interpolate(tok.Scalar(), "hub.token");
        cfg.hub.token = std::move(secret);
      }
      if (const YAML::Node push = hub["push_to_hub"]; push && !IsNullScalar(push)) {
        const std::string text =
            push.IsScalar() ? Interpolate(push.Scalar(), "hub.push_to_hub") : "";
        auto b = BoolText(text);
        if (!b) {
          throw Error(ErrorCode::kInvalidValue, "expected true or false",
                      "hub.push_to_hub");
        }
        cfg.hub.push_to_hub = *b;
      }
    }
    return cfg;
  }

 private:
  static bool IsNullScalar(const YAML::Node& n) {
    return n.IsNull() || (n.IsScalar() && IsPlain(n) && IsNullText(n.Scalar()));
  }

  static void RequireMap(const YAML::Node& n, const std::string& path) {
    if (!n.IsMap()) throw Error(ErrorCode::kInvalidValue, "expected a mapping", path);
  }

  static void CheckKeys(const YAML::Node& map, const std::string& prefix,
                        std::initializer_list<const char*> allowed) {
    const std::set<std::string> known(allowed.begin(), allowed.end());
    for (const auto& kv : map) {
      const std::string key = kv.first.as<std::string>();
      if (!known.contains(key)) {
        throw Error(ErrorCode::kUnknownKey, "key is not part of the schema",
                    prefix + key);
      }
    }
  }

  std::string Interpolate(const std::string& text, const std::string& path) const {
    try {
      return interpolate_env(text, env_);
    } catch (const Error& e) {
      throw Error(e.code(), e.detail(), path);
    }
  }

  std::optional<std::string> OptionalString(const YAML::Node& map, const char* key,
                                            const std::string& path) const {
    const YAML::Node n = map[key];
    if (!n || IsNullScalar(n)) return std::nullopt;
    if (!n.IsScalar()) throw Error(ErrorCode::kInvalidValue, "expected a string", path);
    return Interpolate(n.Scalar(), path);
  }

  std::string RequiredString(const YAML::Node& map, const char* key,
                             const std::string& path) const {
    auto v = OptionalString(map, key, path);
    if (!v) throw Error(ErrorCode::kMissingRequiredKey, "required key is missing", path);
    return *v;
  }

  const Env& env_;
};

std::string FormatDouble(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, ptr);
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

std::string JsonQuote(std::string_view s) {
  std::string out = "\"";
  for (unsigned char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (c < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\x%02x", c);
          out += buf;
        } else {
          out.push_back(static_cast<char>(c));
        }
    }
  }
  return out + "\"";
}

// Plain when the text would re-parse as the same string, else quoted.
std::string YamlString(std::string_view s) {
  const std::string text(s);
  bool plain = !text.empty() && !IsNullText(text) && !BoolText(text) &&
               !std::regex_match(text, IntPattern()) &&
               !std::regex_match(text, FloatPattern());
  if (plain) {
    const char first = text.front();
    plain = std::isalnum(static_cast<unsigned char>(first)) || first == '_' ||
            first == '.' || first == '/';
    for (char c : text) {
      if (!(std::isalnum(static_cast<unsigned char>(c)) ||
            std::string_view("_./:@+-").find(c) != std::string_view::npos)) {
        plain = false;
      }
    }
    if (text.back() == ':') plain = false;
  }
  return plain ? text : JsonQuote(text);
}

std::string YamlValue(const ParamValue& v) {
  if (const auto* d = std::get_if<double>(&v)) return FormatDouble(*d);
  if (const auto* s = std::get_if<std::string>(&v)) return YamlString(*s);
  return param_value_to_string(v);
}

}  // namespace

Env current_env() {
  Env env;
  for (char** e = environ; e != nullptr && *e != nullptr; ++e) {
    std::string_view entry(*e);
    const auto eq = entry.find('=');
    if (eq == std::string_view::npos) continue;
    env.emplace(std::string(entry.substr(0, eq)), std::string(entry.substr(eq + 1)));
  }
  return env;
}

std::string_view backend_name(BackendKind b) {
  switch (b) {
    case BackendKind::kLocal: return "local";
    case BackendKind::kDocker: return "docker";
    case BackendKind::kSpacesStub: return "spaces-stub";
  }
  return "?";
}

std::string_view chat_template_name(ChatTemplateId t) {
  switch (t) {
    case ChatTemplateId::kZephyr: return "zephyr";
    case ChatTemplateId::kChatml: return "chatml";
    case ChatTemplateId::kNone: return "none";
  }
  return "?";
}

std::string interpolate_env(std::string_view text, const Env& env) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '$' && i + 2 < text.size() && text[i + 1] == '{' &&
        IsEnvNameStart(text[i + 2])) {
      std::size_t j = i + 2;
      while (j < text.size() && IsEnvNameChar(text[j])) ++j;
      if (j < text.size() && text[j] == '}') {
        const std::string name(text.substr(i + 2, j - i - 2));
        const auto it = env.find(name);
        if (it == env.end()) {
          throw Error(ErrorCode::kMissingEnvVar, name + " is not set");
        }
        out += it->second;
        i = j + 1;
        continue;
      }
    }
    out.push_back(text[i]);
    ++i;
  }
  return out;
}

ProjectConfig parse_config(std::string_view text, const Env& env) {
  return Parser(env).Parse(text);
}

ValidatedProject validate_config(const ProjectConfig& cfg,
                                 const TaskRegistry& registry) {
  static const std::regex kName("[A-Za-z0-9._-]+");
  if (cfg.project_name.empty() || cfg.project_name.size() > 96 ||
      !std::regex_match(cfg.project_name, kName)) {
    throw Error(ErrorCode::kInvalidValue,
                "must be 1-96 characters from [A-Za-z0-9._-]", "project_name");
  }
  if (cfg.project_name == "." || cfg.project_name == "..") {
    throw Error(ErrorCode::kInvalidValue, "reserved name", "project_name");
  }
  const TaskSpec& spec = registry.resolve(cfg.task.canonical());

  if (cfg.data.train_split.empty()) {
    throw Error(ErrorCode::kInvalidValue, "must be non-empty", "data.train_split");
  }
  ValidatedParams params = validate_params(spec, cfg.params);

  for (const auto& [role, column] : cfg.data.column_mapping) {
    if (spec.find_role(role) == nullptr) {
      throw Error(ErrorCode::kUnknownKey,
                  "'" + role + "' is not a column role of " + spec.id.canonical(),
                  "data.column_mapping." + role);
    }
    if (column.empty()) {
      throw Error(ErrorCode::kInvalidValue, "empty column name",
                  "data.column_mapping." + role);
    }
  }
  for (const auto& role : spec.column_roles) {
    if (role.required && !cfg.data.column_mapping.contains(role.name)) {
      throw Error(ErrorCode::kMissingColumnRole,
                  "required by " + spec.id.canonical(),
                  "data.column_mapping." + role.name);
    }
  }

  if (cfg.hub.push_to_hub) {
    if (!cfg.hub.username || cfg.hub.username->empty()) {
      throw Error(ErrorCode::kHubCredentialsMissing,
                  "push_to_hub requires a username", "hub.username");
    }
    if (!cfg.hub.token || cfg.hub.token->value.empty()) {
      throw Error(ErrorCode::kHubCredentialsMissing,
                  "push_to_hub requires a token", "hub.token");
    }
  }
  return ValidatedProject{cfg, &spec, std::move(params)};
}

std::string canonicalize(const ProjectConfig& cfg) {
  std::ostringstream os;
  os << "task: " << YamlString(cfg.task.canonical()) << "\n";
  os << "base_model: " << YamlString(cfg.base_model) << "\n";
  os << "project_name: " << YamlString(cfg.project_name) << "\n";
  os << "log: " << (cfg.log == LogKind::kEventLog ? "eventlog" : "none") << "\n";
  os << "backend: " << backend_name(cfg.backend) << "\n";
  os << "data:\n";
  os << "  path: " << YamlString(cfg.data.path) << "\n";
  os << "  train_split: " << YamlString(cfg.data.train_split) << "\n";
  os << "  valid_split: "
     << (cfg.data.valid_split ? YamlString(*cfg.data.valid_split) : "null") << "\n";
  os << "  chat_template: "
     << (cfg.data.chat_template ? std::string(chat_template_name(*cfg.data.chat_template))
                                : "null")
     << "\n";
  if (cfg.data.column_mapping.empty()) {
    os << "  column_mapping: {}\n";
  } else {
    os << "  column_mapping:\n";
    for (const auto& [role, column] : cfg.data.column_mapping) {
      os << "    " << role << ": " << YamlString(column) << "\n";
    }
  }
  if (cfg.params.empty()) {
    os << "params: {}\n";
  } else {
    os << "params:\n";
    for (const auto& [name, value] : cfg.params) {
      os << "  " << name << ": " << YamlValue(value) << "\n";
    }
  }
  os << "hub:\n";
  os << "  username: " << (cfg.hub.username ? YamlString(*cfg.hub.username) : "null")
     << "\n";
  os << "  token: ";
  if (!cfg.hub.token) {
    os << "null";
  } else if (cfg.hub.token->placeholder) {
    os << JsonQuote(*cfg.hub.token->placeholder);
  } else {
    os << JsonQuote("***");
  }
  os << "\n";
  os << "  push_to_hub: " << (cfg.hub.push_to_hub ? "true" : "false") << "\n";
  return os.str();
}

}  // namespace trainforge
