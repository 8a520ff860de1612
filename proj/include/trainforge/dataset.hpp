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
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "trainforge/project_config.hpp"
#include "trainforge/task_registry.hpp"

namespace trainforge {

class HubClient;

// One dataset row. Raw rows are keyed by source column; processed rows by
// column role.
using Record = nlohmann::json;

enum class DataFormat { kCsv, kJsonl, kImageZip };
enum class DataSource { kLocalPath, kHubDatasetId };

std::string_view data_format_name(DataFormat f);

// Where the bytes of each requested split live.
struct DatasetLocation {
  DataSource source = DataSource::kLocalPath;
  DataFormat format = DataFormat::kCsv;
  std::map<std::string, std::filesystem::path> split_files;  // file or image dir
};

struct RawDataset {
  DataSource source = DataSource::kLocalPath;
  DataFormat format = DataFormat::kCsv;
  std::map<std::string, std::vector<Record>> splits;
  // Directory or archive the image paths are relative to (image data only).
  std::string image_root;
};

struct ProcessedDataset {
  TaskId task;
  std::vector<Record> train;
  std::optional<std::vector<Record>> valid;
  std::vector<std::pair<std::string, std::string>> schema;  // role, value kind
  nlohmann::json options = nlohmann::json::object();
  std::string fingerprint;
  std::string image_root;  // not part of the fingerprint

  friend bool operator==(const ProcessedDataset&, const ProcessedDataset&) = default;
};

// .csv / .jsonl / .zip by extension; a directory of class sub-folders of
// images counts as image-zip. Throws UnsupportedFormat, FileMissing.
DataFormat detect_format(const std::filesystem::path& path);

// Resolves data.path to local files, pulling hub datasets into
// hub_cache_dir. Throws SplitNotFound, HubFetchFailed, FileMissing,
// UnsupportedFormat.
DatasetLocation locate_dataset(const DataConfig& data, HubClient* hub,
                               const std::filesystem::path& hub_cache_dir);

// Parses every located split. Throws FileCorrupt with the 1-based line
// (csv/jsonl) or entry name.
RawDataset read_dataset(const DatasetLocation& location);

RawDataset load_dataset(const DataConfig& data, HubClient* hub,
                        const std::filesystem::path& hub_cache_dir);

// Renames source columns to roles and drops everything else. The train and
// valid splits are taken from data.train_split / data.valid_split. Throws
// SourceColumnMissing(column, record index), SplitNotFound.
ProcessedDataset apply_column_mapping(const RawDataset& raw, const DataConfig& data,
                                      const TaskSpec& spec);

enum class ChatRole { kSystem, kUser, kAssistant };

struct ChatMessage {
  ChatRole role = ChatRole::kUser;
  std::string content;
};

// zephyr: "<|role|>\n{content}</s>\n" per message;
// chatml: "<|im_start|>role\n{content}<|im_end|>\n" per message.
// A generation prompt for the assistant is appended unless the last
// message is the assistant's. Throws EmptyMessages.
std::string render_chat_template(ChatTemplateId tpl, std::span<const ChatMessage> messages);

// A JSON list of {role, content} objects, or a string holding one.
std::optional<std::vector<ChatMessage>> parse_messages(const Record& value);

// Seeded shuffle; the last ceil(fraction*n) rows (at most n-1) become the
// validation split. Throws TooFewRecords when n < 2.
std::pair<std::vector<Record>, std::vector<Record>> split_dataset(
    std::vector<Record> records, double fraction, std::uint64_t seed);

// SHA-256 over the canonical serialization of task, schema, options and
// records in order.
std::string fingerprint(const ProcessedDataset& processed);

// Full processing for a validated project: mapping, chat template, tabular
// encoding, optional seeded validation split, fingerprint.
ProcessedDataset process_dataset(const RawDataset& raw, const ValidatedProject& project);

// <cache_dir>/<fingerprint>.dsproc, written atomically.
void cache_store(const ProcessedDataset& processed, const std::filesystem::path& cache_dir);
// Throws CacheCorrupt (after deleting the entry) when the stored content
// does not re-fingerprint to the key.
std::optional<ProcessedDataset> cache_lookup(const std::string& fingerprint,
                                             const std::filesystem::path& cache_dir);

struct PreparedDataset {
  ProcessedDataset data;
  bool cache_hit = false;
};

// locate -> (source-keyed cache hit | read + process + store).
PreparedDataset prepare_dataset(const ValidatedProject& project,
                                const std::filesystem::path& cache_dir, HubClient* hub);

}  // namespace trainforge
