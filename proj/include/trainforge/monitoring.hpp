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
#include <mutex>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

namespace trainforge {

enum class EventSplit { kTrain, kValid, kSystem };

std::string_view event_split_name(EventSplit s);

// One line of events.jsonl.
struct MetricEvent {
  std::int64_t ts = 0;  // unix epoch millis
  std::string run_id;
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  EventSplit split = EventSplit::kTrain;
  std::string name;
  std::variant<double, std::string> value;

  friend bool operator==(const MetricEvent&, const MetricEvent&) = default;
};

std::int64_t now_millis();

// Keys in file order: ts, run_id, step, epoch, split, name, value.
std::string event_to_json_line(const MetricEvent& e);
// Throws std::invalid_argument on malformed input.
MetricEvent event_from_json(const nlohmann::json& j);

// Status values carried by system "status" events.
inline constexpr const char* kStatusEvent = "status";

class MetricSink {
 public:
  virtual ~MetricSink() = default;
  virtual void emit(const MetricEvent& event) = 0;
};

// Append-only JSONL file. Every emit is one write(2) of a whole line on an
// O_APPEND descriptor, so concurrent readers see either nothing or the
// complete line.
class JsonlEventSink : public MetricSink {
 public:
  explicit JsonlEventSink(const std::filesystem::path& path);
  ~JsonlEventSink() override;
  JsonlEventSink(const JsonlEventSink&) = delete;
  JsonlEventSink& operator=(const JsonlEventSink&) = delete;

  void emit(const MetricEvent& event) override;  // throws SinkClosed
  void close();

 private:
  std::mutex mu_;
  int fd_ = -1;
};

class MemorySink : public MetricSink {
 public:
  void emit(const MetricEvent& event) override {
    std::lock_guard lock(mu_);
    events_.push_back(event);
  }
  std::vector<MetricEvent> events() const {
    std::lock_guard lock(mu_);
    return events_;
  }

 private:
  mutable std::mutex mu_;
  std::vector<MetricEvent> events_;
};

// Forwards to several sinks.
class TeeSink : public MetricSink {
 public:
  explicit TeeSink(std::vector<MetricSink*> sinks) : sinks_(std::move(sinks)) {}
  void emit(const MetricEvent& event) override {
    for (auto* s : sinks_) s->emit(event);
  }

 private:
  std::vector<MetricSink*> sinks_;
};

struct TailResult {
  std::vector<MetricEvent> events;
  std::uint64_t cursor = 0;
};

// Reads whole lines appended after byte offset `cursor`. A trailing line
// without its newline is left for the next call. Throws FileMissing.
TailResult tail(const std::filesystem::path& events_path, std::uint64_t cursor);

// Plain-text run log ("run.log").
class TextLog {
 public:
  explicit TextLog(const std::filesystem::path& path);
  void line(const std::string& message);

 private:
  std::mutex mu_;
  std::filesystem::path path_;
};

}  // namespace trainforge
