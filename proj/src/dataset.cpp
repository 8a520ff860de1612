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

#include "trainforge/dataset.hpp"

#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "csv.hpp"
#include "trainforge/error.hpp"
#include "trainforge/hub_client.hpp"
#include "trainforge/rng.hpp"
#include "trainforge/sha256.hpp"
#include "zip_reader.hpp"

namespace trainforge {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint8_t kCacheVersion = 1;
constexpr int kFingerprintFormat = 1;

std::string Lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

bool IsImageFile(const fs::path& p) {
  static const std::set<std::string> kExt = {".png", ".jpg", ".jpeg", ".bmp",
                                             ".gif", ".webp", ".tif", ".tiff"};
  return kExt.contains(Lower(p.extension().string()));
}

std::string ReadFile(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::kFileMissing, p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string Dump(const json& j) {
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

bool IsImageFolder(const fs::path& dir) {
  if (!fs::is_directory(dir)) return false;
  for (const auto& sub : fs::directory_iterator(dir)) {
    if (!sub.is_directory()) continue;
    for (const auto& f : fs::directory_iterator(sub.path())) {
      if (f.is_regular_file() && IsImageFile(f.path())) return true;
    }
  }
  return false;
}

std::vector<Record> ReadJsonl(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kFileMissing, path.string());
  std::vector<Record> out;
  std::vector<std::string> keys;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw Error(ErrorCode::kFileCorrupt,
                  path.filename().string() + " line " + std::to_string(lineno) +
                      ": not a JSON object");
    }
    std::vector<std::string> k;
    for (const auto& [key, _] : j.items()) k.push_back(key);
    if (out.empty()) {
      keys = k;
    } else if (k != keys) {
      throw Error(ErrorCode::kFileCorrupt,
                  path.filename().string() + " line " + std::to_string(lineno) +
                      ": keys differ from the first record");
    }
    out.push_back(std::move(j));
  }
  return out;
}

std::vector<Record> ReadCsv(const fs::path& path) {
  csv::Table table;
  try {
    table = csv::parse(ReadFile(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.filename().string() + " " + e.detail());
  }
  std::vector<Record> out;
  out.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    json r = json::object();
    for (std::size_t c = 0; c < row.size(); ++c) r[table.header[c]] = row[c];
    out.push_back(std::move(r));
  }
  return out;
}

Record ImageValue(const std::string& rel, std::uint32_t crc) {
  return json{{"path", rel}, {"crc32", crc}};
}

std::uint32_t Crc32(std::string_view bytes) {
  return static_cast<std::uint32_t>(::crc32(
      0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

// Regression layout: metadata.jsonl with {file_name, target}.
std::vector<Record> ImageRegressionRecords(
    const std::string& metadata, const std::string& source,
    const std::function<std::optional<std::uint32_t>(const std::string&)>& crc_of) {
  std::vector<Record> out;
  std::istringstream in(metadata);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("file_name") ||
        !j["file_name"].is_string() || !j.contains("target")) {
      throw Error(ErrorCode::kFileCorrupt,
                  source + " metadata.jsonl line " + std::to_string(lineno));
    }
    const std::string name = j["file_name"].get<std::string>();
    const auto crc = crc_of(name);
    if (!crc) {
      throw Error(ErrorCode::kFileCorrupt,
                  source + " metadata.jsonl line " + std::to_string(lineno) +
                      ": missing image " + name);
    }
    out.push_back(json{{"image", ImageValue(name, *crc)}, {"target", j["target"]}});
  }
  return out;
}

std::vector<Record> ReadImageFolder(const fs::path& dir) {
  std::vector<Record> out;
  if (fs::exists(dir / "metadata.jsonl")) {
    return ImageRegressionRecords(
        ReadFile(dir / "metadata.jsonl"), dir.string(),
        [&](const std::string& name) -> std::optional<std::uint32_t> {
          if (!fs::is_regular_file(dir / name)) return std::nullopt;
          return Crc32(ReadFile(dir / name));
        });
  }
  std::vector<fs::path> files;
  for (const auto& sub : fs::directory_iterator(dir)) {
    if (!sub.is_directory()) continue;
    for (const auto& f : fs::directory_iterator(sub.path())) {
      if (f.is_regular_file() && IsImageFile(f.path())) files.push_back(f.path());
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const std::string rel = fs::relative(f, dir).generic_string();
    out.push_back(json{{"image", ImageValue(rel, Crc32(ReadFile(f)))},
                       {"label", f.parent_path().filename().string()}});
  }
  return out;
}

std::vector<Record> ReadImageZip(const fs::path& path) {
  const zip::Archive archive(path);
  for (const auto& e : archive.entries()) {
    if (e.name == "metadata.jsonl") {
      std::map<std::string, std::uint32_t> crcs;
      for (const auto& x : archive.entries()) crcs[x.name] = x.crc32;
      return ImageRegressionRecords(
          archive.read(e), path.filename().string(),
          [&](const std::string& name) -> std::optional<std::uint32_t> {
            auto it = crcs.find(name);
            if (it == crcs.end()) return std::nullopt;
            return it->second;
          });
    }
  }
  std::vector<const zip::Entry*> images;
  for (const auto& e : archive.entries()) {
    if (e.is_directory() || !IsImageFile(e.name)) continue;
    const auto slash = e.name.find('/');
    if (slash == std::string::npos || e.name.find('/', slash + 1) != std::string::npos) {
      continue;  // images must sit exactly one level down, inside a class folder
    }
    images.push_back(&e);
  }
  std::sort(images.begin(), images.end(),
            [](const zip::Entry* a, const zip::Entry* b) { return a->name < b->name; });
  std::vector<Record> out;
  for (const auto* e : images) {
    out.push_back(json{{"image", ImageValue(e->name, e->crc32)},
                       {"label", e->name.substr(0, e->name.find('/'))}});
  }
  return out;
}

std::string ValueKind(const json& v) {
  if (v.is_string()) return "string";
  if (v.is_number()) return "number";
  if (v.is_boolean()) return "bool";
  if (v.is_array()) return "array";
  if (v.is_object()) return "object";
  return "null";
}

std::vector<std::pair<std::string, std::string>> InferSchema(const TaskSpec& spec,
                                                             const ProcessedDataset& d) {
  std::vector<std::pair<std::string, std::string>> schema;
  for (const auto& role : spec.column_roles) {
    std::optional<std::string> kind;
    bool present = false;
    auto visit = [&](const std::vector<Record>& records) {
      for (const auto& r : records) {
        auto it = r.find(role.name);
        if (it == r.end()) continue;
        present = true;
        const std::string k = ValueKind(*it);
        if (!kind) {
          kind = k;
        } else if (*kind != k) {
          kind = "mixed";
        }
      }
    };
    visit(d.train);
    if (d.valid) visit(*d.valid);
    if (present || role.required) schema.emplace_back(role.name, kind.value_or("empty"));
  }
  return schema;
}

std::vector<std::string> SplitList(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::vector<Record> MapSplit(const std::vector<Record>& rows, const DataConfig& data,
                             const TaskSpec& spec) {
  std::vector<Record> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Record& row = rows[i];
    Record mapped = json::object();
    std::set<std::string> used;
    auto fetch = [&](const std::string& column) -> const json& {
      auto it = row.find(column);
      if (it == row.end()) {
        throw Error(ErrorCode::kSourceColumnMissing,
                    "column '" + column + "' missing in record " + std::to_string(i));
      }
      return *it;
    };
    const ColumnRole* multi = nullptr;
    for (const auto& role : spec.column_roles) {
      if (role.multi) {
        multi = &role;
        continue;
      }
      auto m = data.column_mapping.find(role.name);
      if (m == data.column_mapping.end()) continue;
      mapped[role.name] = fetch(m->second);
      used.insert(m->second);
    }
    if (multi != nullptr) {
      json features = json::object();
      auto m = data.column_mapping.find(multi->name);
      if (m != data.column_mapping.end()) {
        for (const auto& column : SplitList(m->second)) features[column] = fetch(column);
      } else {
        for (const auto& [column, value] : row.items()) {
          if (!used.contains(column)) features[column] = value;
        }
      }
      mapped[multi->name] = std::move(features);
    }
    out.push_back(std::move(mapped));
  }
  return out;
}

std::optional<ChatRole> ParseRole(const std::string& s) {
  if (s == "system") return ChatRole::kSystem;
  if (s == "user") return ChatRole::kUser;
  if (s == "assistant") return ChatRole::kAssistant;
  return std::nullopt;
}

std::string_view RoleName(ChatRole r) {
  switch (r) {
    case ChatRole::kSystem: return "system";
    case ChatRole::kUser: return "user";
    case ChatRole::kAssistant: return "assistant";
  }
  return "user";
}

void ApplyChatTemplate(std::vector<Record>& records, ChatTemplateId tpl) {
  for (auto& r : records) {
    for (const char* role : {"text_column", "rejected_text_column", "prompt_text_column"}) {
      auto it = r.find(role);
      if (it == r.end()) continue;
      if (auto messages = parse_messages(*it); messages && !messages->empty()) {
        *it = render_chat_template(tpl, *messages);
      }
    }
  }
}

std::optional<double> AsNumber(const json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_boolean()) return v.get<bool>() ? 1.0 : 0.0;
  if (!v.is_string()) return std::nullopt;
  const std::string s = v.get<std::string>();
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double d = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(d)) return std::nullopt;
  return d;
}

bool IsMissing(const json& v) {
  return v.is_null() || (v.is_string() && v.get<std::string>().empty());
}

std::string CategoryText(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return "";
  return Dump(v);
}

// Numeric columns become doubles (missing -> train mean); any other column
// is one-hot encoded over its train categories as "column=value".
void EncodeTabular(std::vector<Record>& train, std::optional<std::vector<Record>>& valid) {
  const std::string key = "feature_columns";
  std::set<std::string> columns;
  for (const auto& r : train) {
    for (const auto& [c, _] : r.at(key).items()) columns.insert(c);
  }
  struct Column {
    bool numeric = true;
    double mean = 0;
    std::set<std::string> categories;
  };
  std::map<std::string, Column> info;
  for (const auto& c : columns) {
    Column col;
    double sum = 0;
    std::size_t count = 0;
    for (const auto& r : train) {
      const json& v = r.at(key).value(c, json());
      if (IsMissing(v)) continue;
      if (auto d = AsNumber(v)) {
        sum += *d;
        ++count;
      } else {
        col.numeric = false;
      }
    }
    if (col.numeric) {
      col.mean = count ? sum / static_cast<double>(count) : 0.0;
    } else {
      for (const auto& r : train) col.categories.insert(CategoryText(r.at(key).value(c, json())));
    }
    info[c] = std::move(col);
  }
  auto encode = [&](std::vector<Record>& records) {
    for (auto& r : records) {
      const json raw = r.at(key);
      json out = json::object();
      for (const auto& [c, col] : info) {
        const json v = raw.value(c, json());
        if (col.numeric) {
          const auto d = IsMissing(v) ? std::nullopt : AsNumber(v);
          out[c] = d.value_or(col.mean);
        } else {
          const std::string cat = CategoryText(v);
          for (const auto& k : col.categories) out[c + "=" + k] = (k == cat) ? 1.0 : 0.0;
        }
      }
      r[key] = std::move(out);
    }
  };
  encode(train);
  if (valid) encode(*valid);
}

json SerializeProcessed(const ProcessedDataset& d) {
  json schema = json::array();
  for (const auto& [role, kind] : d.schema) schema.push_back(json::array({role, kind}));
  return json{{"fingerprint", d.fingerprint},
              {"task", d.task.canonical()},
              {"schema", schema},
              {"options", d.options},
              {"train", d.train},
              {"valid", d.valid ? json(*d.valid) : json(nullptr)},
              {"image_root", d.image_root}};
}

ProcessedDataset DeserializeProcessed(const json& j) {
  ProcessedDataset d;
  d.fingerprint = j.at("fingerprint").get<std::string>();
  d.task = TaskId::parse(j.at("task").get<std::string>());
  for (const auto& p : j.at("schema")) {
    d.schema.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>());
  }
  d.options = j.at("options");
  d.train = j.at("train").get<std::vector<Record>>();
  if (!j.at("valid").is_null()) d.valid = j.at("valid").get<std::vector<Record>>();
  d.image_root = j.at("image_root").get<std::string>();
  return d;
}

void AddFileDigests(json& out, const fs::path& p) {
  if (fs::is_directory(p)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(p)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      out.push_back(json::array({fs::relative(f, p).generic_string(), sha256_hex(ReadFile(f))}));
    }
  } else {
    out.push_back(json::array({p.filename().string(), sha256_hex(ReadFile(p))}));
  }
}

}  // namespace

std::string_view data_format_name(DataFormat f) {
  switch (f) {
    case DataFormat::kCsv: return "csv";
    case DataFormat::kJsonl: return "jsonl";
    case DataFormat::kImageZip: return "image-zip";
  }
  return "?";
}

DataFormat detect_format(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::kFileMissing, path.string());
  if (fs::is_directory(path)) {
    if (IsImageFolder(path) || fs::exists(path / "metadata.jsonl")) return DataFormat::kImageZip;
    throw Error(ErrorCode::kUnsupportedFormat, "directory " + path.string());
  }
  const std::string ext = Lower(path.extension().string());
  if (ext == ".csv") return DataFormat::kCsv;
  if (ext == ".jsonl") return DataFormat::kJsonl;
  if (ext == ".zip") return DataFormat::kImageZip;
  throw Error(ErrorCode::kUnsupportedFormat, ext.empty() ? "(no extension)" : ext);
}

DatasetLocation locate_dataset(const DataConfig& data, HubClient* hub,
                               const fs::path& hub_cache_dir) {
  std::vector<std::string> splits = {data.train_split};
  if (data.valid_split) splits.push_back(*data.valid_split);

  DatasetLocation loc;
  fs::path root(data.path);
  if (!fs::exists(root)) {
    if (!HubRef::is_valid_repo_id(data.path)) {
      throw Error(ErrorCode::kFileMissing, data.path, "data.path");
    }
    if (hub == nullptr) {
      throw Error(ErrorCode::kHubFetchFailed, "no hub client for " + data.path, "data.path");
    }
    try {
      root = hub->pull(HubRef{data.path, RepoKind::kDataset, std::nullopt}, hub_cache_dir);
    } catch (const Error& e) {
      throw Error(ErrorCode::kHubFetchFailed,
                  data.path + ": " + std::string(e.name()) + " " + e.detail(), "data.path");
    }
    loc.source = DataSource::kHubDatasetId;
  }

  if (fs::is_regular_file(root)) {
    loc.format = detect_format(root);
    loc.split_files[data.train_split] = root;
    if (data.valid_split) {
      throw Error(ErrorCode::kSplitNotFound,
                  "'" + *data.valid_split + "' (a single file holds only the train split)",
                  "data.valid_split");
    }
    return loc;
  }

  std::optional<DataFormat> format;
  for (const auto& split : splits) {
    std::optional<fs::path> found;
    for (const auto& [ext, fmt] : {std::pair{".jsonl", DataFormat::kJsonl},
                                   std::pair{".csv", DataFormat::kCsv},
                                   std::pair{".zip", DataFormat::kImageZip}}) {
      const fs::path candidate = root / (split + ext);
      if (fs::is_regular_file(candidate)) {
        found = candidate;
        format = fmt;
        break;
      }
    }
    if (!found && fs::is_directory(root / split) && IsImageFolder(root / split)) {
      found = root / split;
      format = DataFormat::kImageZip;
    }
    if (!found && split == data.train_split && IsImageFolder(root)) {
      found = root;
      format = DataFormat::kImageZip;
    }
    if (!found) {
      throw Error(ErrorCode::kSplitNotFound, "'" + split + "' under " + root.string(),
                  split == data.train_split ? "data.train_split" : "data.valid_split");
    }
    loc.split_files[split] = *found;
  }
  loc.format = *format;
  return loc;
}

RawDataset read_dataset(const DatasetLocation& location) {
  RawDataset raw;
  raw.source = location.source;
  raw.format = location.format;
  for (const auto& [split, path] : location.split_files) {
    std::vector<Record> rows;
    if (fs::is_directory(path)) {
      rows = ReadImageFolder(path);
      raw.image_root = path.string();
    } else {
      switch (detect_format(path)) {
        case DataFormat::kCsv: rows = ReadCsv(path); break;
        case DataFormat::kJsonl: rows = ReadJsonl(path); break;
        case DataFormat::kImageZip:
          rows = ReadImageZip(path);
          raw.image_root = path.string();
          break;
      }
    }
    raw.splits[split] = std::move(rows);
  }
  return raw;
}

RawDataset load_dataset(const DataConfig& data, HubClient* hub, const fs::path& hub_cache_dir) {
  return read_dataset(locate_dataset(data, hub, hub_cache_dir));
}

ProcessedDataset apply_column_mapping(const RawDataset& raw, const DataConfig& data,
                                      const TaskSpec& spec) {
  ProcessedDataset out;
  out.task = spec.id;
  out.image_root = raw.image_root;
  auto train = raw.splits.find(data.train_split);
  if (train == raw.splits.end()) {
    throw Error(ErrorCode::kSplitNotFound, data.train_split, "data.train_split");
  }
  out.train = MapSplit(train->second, data, spec);
  if (data.valid_split) {
    auto valid = raw.splits.find(*data.valid_split);
    if (valid == raw.splits.end()) {
      throw Error(ErrorCode::kSplitNotFound, *data.valid_split, "data.valid_split");
    }
    out.valid = MapSplit(valid->second, data, spec);
  }
  out.schema = InferSchema(spec, out);
  return out;
}

std::optional<std::vector<ChatMessage>> parse_messages(const Record& value) {
  json list;
  if (value.is_array()) {
    list = value;
  } else if (value.is_string()) {
    const std::string& s = value.get_ref<const std::string&>();
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos || s[first] != '[') return std::nullopt;
    list = json::parse(s, nullptr, false);
    if (list.is_discarded() || !list.is_array()) return std::nullopt;
  } else {
    return std::nullopt;
  }
  std::vector<ChatMessage> out;
  for (const auto& m : list) {
    if (!m.is_object() || !m.contains("role") || !m.contains("content") ||
        !m["role"].is_string() || !m["content"].is_string()) {
      return std::nullopt;
    }
    auto role = ParseRole(m["role"].get<std::string>());
    if (!role) return std::nullopt;
    out.push_back({*role, m["content"].get<std::string>()});
  }
  return out;
}

std::string render_chat_template(ChatTemplateId tpl, std::span<const ChatMessage> messages) {
  if (messages.empty()) throw Error(ErrorCode::kEmptyMessages, "no messages to render");
  std::string out;
  switch (tpl) {
    case ChatTemplateId::kZephyr:
      for (const auto& m : messages) {
        out += "<|";
        out += RoleName(m.role);
        out += "|>\n" + m.content + "</s>\n";
      }
      if (messages.back().role != ChatRole::kAssistant) out += "<|assistant|>\n";
      return out;
    case ChatTemplateId::kChatml:
      for (const auto& m : messages) {
        out += "<|im_start|>";
        out += RoleName(m.role);
        out += "\n" + m.content + "<|im_end|>\n";
      }
      if (messages.back().role != ChatRole::kAssistant) out += "<|im_start|>assistant\n";
      return out;
    case ChatTemplateId::kNone:
      break;
  }
  throw Error(ErrorCode::kInvalidValue, "chat template 'none' cannot render messages",
              "data.chat_template");
}

std::pair<std::vector<Record>, std::vector<Record>> split_dataset(std::vector<Record> records,
                                                                  double fraction,
                                                                  std::uint64_t seed) {
  if (records.size() < 2) {
    throw Error(ErrorCode::kTooFewRecords,
                std::to_string(records.size()) + " record(s); need at least 2");
  }
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw Error(ErrorCode::kOutOfBounds, "fraction must be in (0, 1)",
                "params.auto_valid_fraction");
  }
  const std::size_t n = records.size();
  std::size_t k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
  k = std::clamp<std::size_t>(k, 1, n - 1);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  CounterRng(seed).split("valid-split").shuffle(std::span(order));
  std::vector<Record> train, valid;
  train.reserve(n - k);
  valid.reserve(k);
  for (std::size_t i = 0; i < n; ++i) {
    (i < n - k ? train : valid).push_back(std::move(records[order[i]]));
  }
  return {std::move(train), std::move(valid)};
}

std::string fingerprint(const ProcessedDataset& d) {
  json schema = json::array();
  for (const auto& [role, kind] : d.schema) schema.push_back(json::array({role, kind}));
  const json canonical = {
      {"format", kFingerprintFormat},
      {"task", d.task.canonical()},
      {"schema", schema},
      {"options", d.options},
      {"train", d.train},
      {"valid", d.valid ? json(*d.valid) : json(nullptr)},
  };
  return sha256_hex(Dump(canonical));
}

ProcessedDataset process_dataset(const RawDataset& raw, const ValidatedProject& project) {
  const TaskSpec& spec = *project.spec;
  const DataConfig& data = project.config.data;
  ProcessedDataset out = apply_column_mapping(raw, data, spec);

  json options = json::object();
  const auto tpl = data.chat_template.value_or(ChatTemplateId::kNone);
  options["chat_template"] = std::string(chat_template_name(tpl));
  if (tpl != ChatTemplateId::kNone) {
    ApplyChatTemplate(out.train, tpl);
    if (out.valid) ApplyChatTemplate(*out.valid, tpl);
  }

  if (spec.modality == Modality::kTabular) {
    EncodeTabular(out.train, out.valid);
    options["tabular_encoding"] = "numeric+onehot";
  }

  const double fraction = project.params.contains("auto_valid_fraction")
                              ? project.params.get_float("auto_valid_fraction")
                              : 0.0;
  if (!out.valid && fraction > 0.0) {
    const auto seed = static_cast<std::uint64_t>(project.params.get_int("seed"));
    auto [train, valid] = split_dataset(std::move(out.train), fraction, seed);
    out.train = std::move(train);
    out.valid = std::move(valid);
    options["auto_valid_fraction"] = fraction;
    options["split_seed"] = seed;
  }
  out.options = std::move(options);
  out.schema = InferSchema(spec, out);
  out.fingerprint = fingerprint(out);
  return out;
}

void cache_store(const ProcessedDataset& processed, const fs::path& cache_dir) {
  fs::create_directories(cache_dir);
  const fs::path final_path = cache_dir / (processed.fingerprint + ".dsproc");
  const fs::path tmp = cache_dir / (processed.fingerprint + ".dsproc.tmp." +
                                    std::to_string(::getpid()) + "." +
                                    std::to_string(CounterRng::Mix(
                                        reinterpret_cast<std::uintptr_t>(&processed))));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.put(static_cast<char>(kCacheVersion));
    out << Dump(SerializeProcessed(processed));
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + tmp.string());
  }
  fs::rename(tmp, final_path);
}

std::optional<ProcessedDataset> cache_lookup(const std::string& fp, const fs::path& cache_dir) {
  const fs::path path = cache_dir / (fp + ".dsproc");
  if (!fs::exists(path)) return std::nullopt;
  const std::string bytes = ReadFile(path);
  auto corrupt = [&](const std::string& why) {
    std::error_code ec;
    fs::remove(path, ec);
    return Error(ErrorCode::kCacheCorrupt, fp + ": " + why + " (entry deleted)");
  };
  if (bytes.empty() || static_cast<std::uint8_t>(bytes[0]) != kCacheVersion) {
    throw corrupt("unknown cache format version");
  }
  const json j = json::parse(std::string_view(bytes).substr(1), nullptr, false);
  if (j.is_discarded()) throw corrupt("unparseable content");
  ProcessedDataset d;
  try {
    d = DeserializeProcessed(j);
  } catch (const std::exception& e) {
    throw corrupt(e.what());
  }
  if (fingerprint(d) != fp || d.fingerprint != fp) throw corrupt("fingerprint mismatch");
  return d;
}

PreparedDataset prepare_dataset(const ValidatedProject& project, const fs::path& cache_dir,
                                HubClient* hub) {
  const DataConfig& data = project.config.data;
  const DatasetLocation loc = locate_dataset(data, hub, cache_dir / "hub");

  // The source key identifies (input bytes, processing config) so a second
  // project over the same data skips parsing and processing entirely.
  json files = json::array();
  for (const auto& [split, path] : loc.split_files) {
    json digests = json::array();
    AddFileDigests(digests, path);
    files.push_back(json{{"split", split}, {"files", digests}});
  }
  json mapping = json::object();
  for (const auto& [role, column] : data.column_mapping) mapping[role] = column;
  const json source = {
      {"task", project.config.task.canonical()},
      {"train_split", data.train_split},
      {"valid_split", data.valid_split ? json(*data.valid_split) : json(nullptr)},
      {"chat_template",
       std::string(chat_template_name(data.chat_template.value_or(ChatTemplateId::kNone)))},
      {"column_mapping", mapping},
      {"auto_valid_fraction", project.params.contains("auto_valid_fraction")
                                  ? project.params.get_float("auto_valid_fraction")
                                  : 0.0},
      {"seed", project.params.contains("seed") ? project.params.get_int("seed") : 0},
      {"files", files},
  };
  const fs::path index = cache_dir / "index" / sha256_hex(Dump(source));
  if (fs::exists(index)) {
    const std::string fp = ReadFile(index);
    try {
      if (auto hit = cache_lookup(fp, cache_dir)) {
        hit->image_root = read_dataset(loc).image_root;
        return {std::move(*hit), true};
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kCacheCorrupt) throw;
    }
  }
  ProcessedDataset processed = process_dataset(read_dataset(loc), project);
  cache_store(processed, cache_dir);
  fs::create_directories(index.parent_path());
  {
    const fs::path tmp = index.string() + ".tmp." + std::to_string(::getpid());
    std::ofstream(tmp, std::ios::trunc) << processed.fingerprint;
    fs::rename(tmp, index);
  }
  return {std::move(processed), false};
}

}  // namespace trainforge
