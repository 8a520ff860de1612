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

#include "trainforge/task_registry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "trainforge/error.hpp"

namespace trainforge {
namespace {

std::size_t EditDistance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1,
                         diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

ParamDef Int(std::string name, std::int64_t def, double min, double max,
             std::string help) {
  return ParamDef{std::move(name), ParamKind::kInt, def, min, max, {}, false,
                  std::move(help)};
}
ParamDef Float(std::string name, double def, double min, double max,
               std::string help) {
  return ParamDef{std::move(name), ParamKind::kFloat, def, min, max, {}, false,
                  std::move(help)};
}
ParamDef Bool(std::string name, bool def, std::string help) {
  return ParamDef{std::move(name), ParamKind::kBool, def, std::nullopt,
                  std::nullopt, {}, false, std::move(help)};
}
ParamDef Str(std::string name, std::string def, std::string help) {
  return ParamDef{std::move(name), ParamKind::kString, std::move(def),
                  std::nullopt, std::nullopt, {}, false, std::move(help)};
}
ParamDef Enum(std::string name, std::string def,
              std::vector<std::string> allowed, std::string help) {
  return ParamDef{std::move(name), ParamKind::kEnum, std::move(def),
                  std::nullopt, std::nullopt, std::move(allowed), false,
                  std::move(help)};
}

constexpr double kMaxCount = 1e9;

// Schema table. These defaults are the documented source of truth for the
// tests (see README "Parameter defaults").
std::vector<ParamDef> TrainingLoopParams() {
  return {
      Int("epochs", 3, 0, 10000, "passes over the training split"),
      Int("batch_size", 8, 1, 65536, "examples per micro-batch"),
      Float("lr", 5e-5, 0, 10, "base learning rate"),
      Enum("optimizer", "adamw_torch", {"adamw_torch", "sgd"}, "optimizer"),
      Enum("scheduler", "linear", {"linear", "cosine", "constant"},
           "learning-rate schedule"),
      Int("warmup_steps", 0, 0, kMaxCount, "linear warmup steps"),
      Int("gradient_accumulation", 1, 1, 4096,
          "micro-batches per optimizer step"),
      Enum("mixed_precision", "none", {"none", "fp16", "bf16"},
           "recorded only; reference trainers compute in fp64"),
      Float("weight_decay", 0.0, 0, 1, "decoupled weight decay"),
      Int("seed", 42, 0, 4294967295.0, "root seed for all random streams"),
      Float("auto_valid_fraction", 0.0, 0, 0.9,
            "hold out this fraction as validation when valid_split is null; "
            "0 disables"),
      Int("checkpoint_steps", 0, 0, kMaxCount,
          "also checkpoint every N optimizer steps; 0 = end of run only"),
  };
}

std::vector<ParamDef> PeftParams() {
  return {
      Bool("peft", false, "recorded only; executed by adapters"),
      Enum("quantization", "none", {"none", "int4", "int8"},
           "recorded only; executed by adapters"),
      Str("target_modules", "all-linear", "recorded only; executed by adapters"),
  };
}

std::vector<ParamDef> LlmParams() {
  auto p = TrainingLoopParams();
  p.push_back(Int("block_size", 128, 2, 1 << 20, "packed sequence length"));
  p.push_back(Int("model_max_length", 2048, 2, 1 << 20,
                  "per-sequence truncation length"));
  p.push_back(Int("max_prompt_length", 128, 1, 1 << 20,
                  "prompt truncation for preference tasks"));
  p.push_back(Enum("padding", "right", {"right", "left"}, "padding side"));
  p.push_back(Int("embedding_dim", 32, 1, 4096,
                  "reference LM embedding width"));
  for (auto& d : PeftParams()) p.push_back(std::move(d));
  return p;
}

std::vector<ParamDef> TextModelParams() {
  auto p = TrainingLoopParams();
  ParamDef dim = Int("hash_dim", 32768, 2, 1 << 24,
                     "hashed bag-of-words dimension (power of two)");
  dim.power_of_two = true;
  p.push_back(std::move(dim));
  return p;
}

std::vector<ParamDef> GenericTextParams(bool peft) {
  auto p = TrainingLoopParams();
  p.push_back(Int("max_seq_length", 128, 1, 1 << 20, "tokenizer truncation"));
  if (peft) {
    for (auto& d : PeftParams()) p.push_back(std::move(d));
  }
  return p;
}

std::vector<ParamDef> ImageParams() {
  auto p = TrainingLoopParams();
  p.push_back(Int("image_size", 224, 8, 8192, "resize edge in pixels"));
  return p;
}

std::vector<ParamDef> TabularParams() {
  return {
      Int("rounds", 100, 0, 100000, "boosting rounds"),
      Float("shrinkage", 0.1, 0, 1, "learning rate applied to each stump"),
      Int("seed", 42, 0, 4294967295.0, "root seed"),
      Float("auto_valid_fraction", 0.0, 0, 0.9,
            "hold out this fraction as validation; 0 disables"),
  };
}

std::vector<ColumnRole> Roles(std::initializer_list<const char*> required,
                              std::initializer_list<const char*> optional = {}) {
  std::vector<ColumnRole> out;
  for (const char* r : required) out.push_back({r, true, false});
  for (const char* r : optional) out.push_back({r, false, false});
  return out;
}

TaskSpec Make(std::string_view id, Modality modality,
              std::vector<ColumnRole> roles, std::vector<ParamDef> params,
              ArtifactKind artifact, TrainerBinding binding) {
  return TaskSpec{TaskId::parse(id), modality, std::move(roles),
                  std::move(params), artifact, binding};
}

std::vector<TaskSpec> BuiltinSpecs() {
  using enum Modality;
  constexpr auto kRef = TrainerBinding::kReference;
  constexpr auto kExt = TrainerBinding::kExternalAdapter;
  constexpr auto kWeights = ArtifactKind::kModelWeights;
  constexpr auto kTab = ArtifactKind::kTabularModel;
  constexpr auto kDel = ArtifactKind::kAdapterDelegated;

  std::vector<TaskSpec> s;
  // Text (16).
  s.push_back(Make("text-classification", kText,
                   Roles({"text_column", "target_column"}), TextModelParams(),
                   kWeights, kRef));
  s.push_back(Make("text-regression", kText,
                   Roles({"text_column", "target_column"}), TextModelParams(),
                   kWeights, kRef));
  s.push_back(Make("token-classification", kText,
                   Roles({"tokens_column", "tags_column"}),
                   GenericTextParams(false), kDel, kExt));
  s.push_back(Make("seq2seq", kText, Roles({"text_column", "target_column"}),
                   GenericTextParams(true), kDel, kExt));
  s.push_back(Make("llm:sft", kText, Roles({"text_column"}), LlmParams(),
                   kWeights, kRef));
  s.push_back(Make("llm:generic", kText, Roles({"text_column"}), LlmParams(),
                   kDel, kExt));
  for (const char* pref : {"llm:orpo", "llm:dpo"}) {
    s.push_back(Make(pref, kText,
                     Roles({"text_column", "rejected_text_column",
                            "prompt_text_column"}),
                     LlmParams(), kDel, kExt));
  }
  s.push_back(Make("llm:reward", kText,
                   Roles({"text_column", "rejected_text_column"}), LlmParams(),
                   kDel, kExt));
  s.push_back(Make("sentence-transformers:pair", kText,
                   Roles({"sentence1_column", "sentence2_column"}),
                   GenericTextParams(false), kDel, kExt));
  s.push_back(Make("sentence-transformers:pair_class", kText,
                   Roles({"sentence1_column", "sentence2_column",
                          "target_column"}),
                   GenericTextParams(false), kDel, kExt));
  s.push_back(Make("sentence-transformers:pair_score", kText,
                   Roles({"sentence1_column", "sentence2_column",
                          "target_column"}),
                   GenericTextParams(false), kDel, kExt));
  s.push_back(Make("sentence-transformers:triplet", kText,
                   Roles({"sentence1_column", "sentence2_column",
                          "sentence3_column"}),
                   GenericTextParams(false), kDel, kExt));
  s.push_back(Make("sentence-transformers:qa", kText,
                   Roles({"sentence1_column", "sentence2_column"}),
                   GenericTextParams(false), kDel, kExt));
  s.push_back(Make("vlm:captioning", kText,
                   Roles({"image_column", "text_column"}),
                   GenericTextParams(true), kDel, kExt));
  s.push_back(Make("vlm:vqa", kText,
                   Roles({"image_column", "text_column", "prompt_text_column"}),
                   GenericTextParams(true), kDel, kExt));
  // Image (4).
  s.push_back(Make("image-classification", kImage,
                   Roles({"image_column", "target_column"}), ImageParams(),
                   kDel, kExt));
  s.push_back(Make("image-regression", kImage,
                   Roles({"image_column", "target_column"}), ImageParams(),
                   kDel, kExt));
  s.push_back(Make("object-detection", kImage,
                   Roles({"image_column", "objects_column"}), ImageParams(),
                   kDel, kExt));
  s.push_back(Make("image-segmentation", kImage,
                   Roles({"image_column", "mask_column"}), ImageParams(), kDel,
                   kExt));
  // Tabular (2).
  for (const char* tab : {"tabular:classification", "tabular:regression"}) {
    auto roles = Roles({"target_column"}, {"id_column"});
    roles.push_back({"feature_columns", false, true});
    s.push_back(Make(tab, kTabular, std::move(roles), TabularParams(), kTab,
                     kRef));
  }
  return s;
}

}  // namespace

TaskId TaskId::parse(std::string_view text) {
  if (text.empty()) {
    throw Error(ErrorCode::kMalformedTaskId, "empty task id", "task");
  }
  const auto first = text.find(':');
  if (first == std::string_view::npos) return TaskId{std::string(text), {}};
  if (text.find(':', first + 1) != std::string_view::npos) {
    throw Error(ErrorCode::kMalformedTaskId,
                "more than one ':' in '" + std::string(text) + "'", "task");
  }
  if (first == 0 || first + 1 == text.size()) {
    throw Error(ErrorCode::kMalformedTaskId,
                "empty family or subtype in '" + std::string(text) + "'",
                "task");
  }
  return TaskId{std::string(text.substr(0, first)),
                std::string(text.substr(first + 1))};
}

std::string TaskId::canonical() const {
  return subtype ? family + ":" + *subtype : family;
}

std::string_view param_kind_name(ParamKind kind) {
  switch (kind) {
    case ParamKind::kInt: return "int";
    case ParamKind::kFloat: return "float";
    case ParamKind::kBool: return "bool";
    case ParamKind::kString: return "string";
    case ParamKind::kEnum: return "enum";
  }
  return "?";
}

std::string param_value_to_string(const ParamValue& value) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, bool>) {
          return v ? "true" : "false";
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          return std::to_string(v);
        } else if constexpr (std::is_same_v<T, double>) {
          std::ostringstream os;
          os.precision(17);
          os << v;
          std::string s = os.str();
          // Keep a float recognisable as a float when re-parsed.
          if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
          return s;
        } else {
          return v;
        }
      },
      value);
}

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::kText: return "text";
    case Modality::kImage: return "image";
    case Modality::kTabular: return "tabular";
  }
  return "?";
}

std::string_view artifact_kind_name(ArtifactKind k) {
  switch (k) {
    case ArtifactKind::kModelWeights: return "model-weights";
    case ArtifactKind::kTabularModel: return "tabular-model";
    case ArtifactKind::kAdapterDelegated: return "adapter-delegated";
  }
  return "?";
}

std::string_view trainer_binding_name(TrainerBinding b) {
  return b == TrainerBinding::kReference ? "reference" : "external-adapter";
}

std::int64_t ValidatedParams::get_int(const std::string& name) const {
  return std::get<std::int64_t>(values_.at(name));
}

double ValidatedParams::get_float(const std::string& name) const {
  const auto& v = values_.at(name);
  if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  return std::get<double>(v);
}

bool ValidatedParams::get_bool(const std::string& name) const {
  return std::get<bool>(values_.at(name));
}

const std::string& ValidatedParams::get_string(const std::string& name) const {
  return std::get<std::string>(values_.at(name));
}

const ParamDef* TaskSpec::find_param(std::string_view name) const {
  for (const auto& p : param_schema) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

const ColumnRole* TaskSpec::find_role(std::string_view name) const {
  for (const auto& r : column_roles) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

TaskRegistry::TaskRegistry(std::vector<TaskSpec> specs) : specs_(std::move(specs)) {
  std::sort(specs_.begin(), specs_.end(),
            [](const TaskSpec& a, const TaskSpec& b) {
              return a.id.canonical() < b.id.canonical();
            });
}

const TaskRegistry& TaskRegistry::builtin() {
  static const TaskRegistry registry(BuiltinSpecs());
  return registry;
}

const TaskSpec* TaskRegistry::find(const TaskId& id) const {
  for (const auto& s : specs_) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

const TaskSpec& TaskRegistry::resolve(std::string_view text) const {
  const TaskId id = TaskId::parse(text);
  if (const TaskSpec* s = find(id)) return *s;

  std::vector<std::pair<std::size_t, std::string>> ranked;
  for (const auto& s : specs_) {
    const std::string c = s.id.canonical();
    ranked.emplace_back(EditDistance(text, c), c);
  }
  std::sort(ranked.begin(), ranked.end());
  std::string nearest;
  for (std::size_t i = 0; i < std::min<std::size_t>(3, ranked.size()); ++i) {
    if (i) nearest += ", ";
    nearest += ranked[i].second;
  }
  throw Error(ErrorCode::kUnknownTask,
              "'" + std::string(text) + "' is not registered; nearest: " + nearest,
              "task");
}

const TaskSpec& resolve_task(std::string_view text) {
  return TaskRegistry::builtin().resolve(text);
}

const std::vector<TaskSpec>& list_tasks() { return TaskRegistry::builtin().list(); }

ParamSet default_params(const TaskSpec& spec) {
  ParamSet out;
  for (const auto& def : spec.param_schema) out[def.name] = def.default_value;
  return out;
}

ValidatedParams validate_params(const TaskSpec& spec, const ParamSet& params) {
  ParamSet out = default_params(spec);
  for (const auto& [name, value] : params) {
    const ParamDef* def = spec.find_param(name);
    if (def == nullptr) {
      throw Error(ErrorCode::kUnknownParam,
                  "'" + name + "' is not a parameter of " + spec.id.canonical(),
                  "params." + name);
    }
    const std::string path = "params." + name;
    auto mismatch = [&] {
      return Error(ErrorCode::kTypeMismatch,
                   "expected " + std::string(param_kind_name(def->kind)) +
                       ", got '" + param_value_to_string(value) + "'",
                   path);
    };
    auto check_range = [&](double v) {
      if ((def->min && v < *def->min) || (def->max && v > *def->max)) {
        std::ostringstream bound;
        bound << "[" << def->min.value_or(-INFINITY) << ", "
              << def->max.value_or(INFINITY) << "]";
        throw Error(ErrorCode::kOutOfBounds,
                    param_value_to_string(value) + " outside " + bound.str(),
                    path);
      }
    };

    ParamValue stored;
    switch (def->kind) {
      case ParamKind::kInt: {
        const auto* i = std::get_if<std::int64_t>(&value);
        if (i == nullptr) throw mismatch();
        check_range(static_cast<double>(*i));
        if (def->power_of_two && (*i <= 0 || (*i & (*i - 1)) != 0)) {
          throw Error(ErrorCode::kOutOfBounds,
                      std::to_string(*i) + " is not a power of two", path);
        }
        stored = *i;
        break;
      }
      case ParamKind::kFloat: {
        double v;
        if (const auto* i = std::get_if<std::int64_t>(&value)) {
          v = static_cast<double>(*i);
        } else if (const auto* d = std::get_if<double>(&value)) {
          v = *d;
        } else {
          throw mismatch();
        }
        if (!std::isfinite(v)) throw mismatch();
        check_range(v);
        stored = v;
        break;
      }
      case ParamKind::kBool: {
        if (!std::holds_alternative<bool>(value)) throw mismatch();
        stored = value;
        break;
      }
      case ParamKind::kString: {
        if (!std::holds_alternative<std::string>(value)) throw mismatch();
        stored = value;
        break;
      }
      case ParamKind::kEnum: {
        const auto* s = std::get_if<std::string>(&value);
        if (s == nullptr) throw mismatch();
        if (std::find(def->allowed.begin(), def->allowed.end(), *s) ==
            def->allowed.end()) {
          std::string allowed;
          for (const auto& a : def->allowed) {
            allowed += allowed.empty() ? a : "|" + a;
          }
          throw Error(ErrorCode::kOutOfBounds,
                      "'" + *s + "' not in {" + allowed + "}", path);
        }
        stored = *s;
        break;
      }
    }
    out[name] = std::move(stored);
  }
  return ValidatedParams(std::move(out));
}

}  // namespace trainforge
