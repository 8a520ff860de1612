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

#include "trainforge/monitoring.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>

#include "trainforge/error.hpp"

namespace trainforge {

std::string_view event_split_name(EventSplit s) {
  switch (s) {
    case EventSplit::kTrain: return "train";
    case EventSplit::kValid: return "valid";
    case EventSplit::kSystem: return "system";
  }
  return "?";
}

std::int64_t now_millis() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

std::string event_to_json_line(const MetricEvent& e) {
  nlohmann::ordered_json j;
  j["ts"] = e.ts;
  j["run_id"] = e.run_id;
  j["step"] = e.step;
  j["epoch"] = e.epoch;
  j["split"] = event_split_name(e.split);
  j["name"] = e.name;
  std::visit([&](const auto& v) { j["value"] = v; }, e.value);
  return j.dump() + "\n";
}

MetricEvent event_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.size() != 7) {
    throw std::invalid_argument("event must be an object with 7 keys");
  }
  MetricEvent e;
  try {
    e.ts = j.at("ts").get<std::int64_t>();
    e.run_id = j.at("run_id").get<std::string>();
    e.step = j.at("step").get<std::int64_t>();
    e.epoch = j.at("epoch").get<std::int64_t>();
    const auto split = j.at("split").get<std::string>();
    if (split == "train") {
      e.split = EventSplit::kTrain;
    } else if (split == "valid") {
      e.split = EventSplit::kValid;
    } else if (split == "system") {
      e.split = EventSplit::kSystem;
    } else {
      throw std::invalid_argument("bad split " + split);
    }
    e.name = j.at("name").get<std::string>();
    const auto& v = j.at("value");
    if (v.is_string()) {
      e.value = v.get<std::string>();
    } else if (v.is_number()) {
      e.value = v.get<double>();
    } else {
      throw std::invalid_argument("value must be a number or string");
    }
  } catch (const nlohmann::json::exception& ex) {
    throw std::invalid_argument(ex.what());
  }
  return e;
}

JsonlEventSink::JsonlEventSink(const std::filesystem::path& path) {
  fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) {
    throw Error(ErrorCode::kIoError,
                "cannot open " + path.string() + ": " + std::strerror(errno));
  }
}

JsonlEventSink::~JsonlEventSink() { close(); }

void JsonlEventSink::emit(const MetricEvent& event) {
  const std::string line = event_to_json_line(event);
  std::lock_guard lock(mu_);
  if (fd_ < 0) throw Error(ErrorCode::kSinkClosed, "event sink is closed");
  std::size_t written = 0;
  while (written < line.size()) {
    const ssize_t n = ::write(fd_, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::kIoError, std::string("write: ") + std::strerror(errno));
    }
    written += static_cast<std::size_t>(n);
  }
}

void JsonlEventSink::close() {
  std::lock_guard lock(mu_);
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

TailResult tail(const std::filesystem::path& events_path, std::uint64_t cursor) {
  std::ifstream in(events_path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kFileMissing, events_path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::uint64_t>(in.tellg());
  TailResult out;
  out.cursor = cursor;
  if (cursor >= size) return out;

  in.seekg(static_cast<std::streamoff>(cursor));
  std::string chunk(size - cursor, '\0');
  in.read(chunk.data(), static_cast<std::streamsize>(chunk.size()));
  chunk.resize(static_cast<std::size_t>(in.gcount()));

  std::size_t start = 0;
  while (true) {
    const auto nl = chunk.find('\n', start);
    if (nl == std::string::npos) break;
    const std::string_view line(chunk.data() + start, nl - start);
    start = nl + 1;
    if (line.empty()) continue;
    const auto parsed = nlohmann::json::parse(line, nullptr, false);
    if (parsed.is_discarded()) continue;
    try {
      out.events.push_back(event_from_json(parsed));
    } catch (const std::invalid_argument&) {
      // Not an event line; skip it but still consume it.
    }
  }
  out.cursor = cursor + start;
  return out;
}

TextLog::TextLog(const std::filesystem::path& path) : path_(path) {}

void TextLog::line(const std::string& message) {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", &tm);
  std::lock_guard lock(mu_);
  std::ofstream out(path_, std::ios::app);
  out << stamp << " " << message << "\n";
}

}  // namespace trainforge
