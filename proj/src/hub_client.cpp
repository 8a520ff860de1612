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

#include "trainforge/hub_client.hpp"

#include <unistd.h>

#include <fstream>
#include <functional>
#include <regex>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "trainforge/error.hpp"

namespace trainforge {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kRevisionMarker = ".hub-revision";
constexpr const char* kPushState = ".push-state.json";

std::string KindSegment(RepoKind kind) {
  return kind == RepoKind::kModel ? "models" : "datasets";
}

std::string ReadFile(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::kFileMissing, p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFileAtomic(const fs::path& p, std::string_view data) {
  fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".part." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + tmp.string());
  }
  fs::rename(tmp, p);
}

// Relative repo paths only; no "..", no absolute paths.
bool SafeRelativePath(const std::string& p) {
  if (p.empty() || p.front() == '/') return false;
  for (const auto& part : fs::path(p)) {
    if (part == "..") return false;
  }
  return true;
}

std::string EncodePath(const std::string& p) {
  std::string out;
  for (unsigned char c : p) {
    if (std::isalnum(c) || std::string_view("-._~/").find(c) != std::string_view::npos) {
      out.push_back(static_cast<char>(c));
    } else {
      char buf[4];
      std::snprintf(buf, sizeof(buf), "%%%02X", c);
      out += buf;
    }
  }
  return out;
}

class Transport {
 public:
  Transport(const HubOptions& options, HubStats& stats)
      : options_(options), stats_(stats), client_(options.endpoint) {
    client_.set_connection_timeout(options.timeout);
    client_.set_read_timeout(options.timeout);
    client_.set_write_timeout(options.timeout);
    client_.set_follow_location(true);
  }

  httplib::Result Send(const std::function<httplib::Result(httplib::Client&)>& fn,
                       const std::string& what) {
    for (int attempt = 0;; ++attempt) {
      ++stats_.requests;
      auto res = fn(client_);
      const bool retryable =
          !res || (res->status >= 500 && res->status != 507);
      if (!retryable) return res;
      if (attempt >= options_.max_retries) {
        const std::string cause =
            res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
        throw Error(ErrorCode::kNetworkError,
                    what + " failed after " + std::to_string(attempt + 1) +
                        " attempts (" + cause + ")");
      }
      std::this_thread::sleep_for(options_.backoff_base * (1 << attempt));
    }
  }

  static void CheckStatus(const httplib::Result& res, const std::string& what) {
    const int s = res->status;
    if (s >= 200 && s < 300) return;
    if (s == 401 || s == 403) throw Error(ErrorCode::kAuthRequired, what + ": HTTP " + std::to_string(s));
    if (s == 404) throw Error(ErrorCode::kNotFound, what);
    if (s == 413 || s == 507) throw Error(ErrorCode::kQuotaExceeded, what + ": HTTP " + std::to_string(s));
    throw Error(ErrorCode::kNetworkError, what + ": HTTP " + std::to_string(s));
  }

 private:
  const HubOptions& options_;
  HubStats& stats_;
  httplib::Client client_;
};

httplib::Headers AuthHeaders(const std::optional<std::string>& token) {
  httplib::Headers h;
  if (token && !token->empty()) h.emplace("Authorization", "Bearer " + *token);
  return h;
}

}  // namespace

bool HubRef::is_valid_repo_id(std::string_view id) {
  static const std::regex re(R"([\w.-]+/[\w.-]+)");
  return std::regex_match(id.begin(), id.end(), re);
}

HubOptions HubOptions::from_env(const Env& env) {
  HubOptions o;
  if (auto it = env.find("HUB_ENDPOINT"); it != env.end() && !it->second.empty()) {
    o.endpoint = it->second;
  }
  if (auto it = env.find("HF_TOKEN"); it != env.end() && !it->second.empty()) {
    o.read_token = it->second;
  }
  return o;
}

HubClient::HubClient(HubOptions options) : options_(std::move(options)) {
  while (!options_.endpoint.empty() && options_.endpoint.back() == '/') {
    options_.endpoint.pop_back();
  }
}

fs::path HubClient::pull(const HubRef& ref, const fs::path& dest_dir) {
  if (!HubRef::is_valid_repo_id(ref.repo_id)) {
    throw Error(ErrorCode::kInvalidValue, "bad repo id '" + ref.repo_id + "'");
  }
  const fs::path root = dest_dir / ref.repo_id;
  const fs::path marker = root / kRevisionMarker;
  std::optional<std::string> local_rev;
  if (fs::exists(marker)) local_rev = ReadFile(marker);
  if (ref.revision && local_rev && *local_rev == *ref.revision) return root;

  Transport t(options_, stats_);
  const std::string base = "/api/" + KindSegment(ref.kind) + "/" + ref.repo_id;
  std::string tree_path = base + "/tree";
  if (ref.revision) tree_path += "?revision=" + EncodePath(*ref.revision);
  const auto headers = AuthHeaders(options_.read_token);
  auto res = t.Send([&](httplib::Client& c) { return c.Get(tree_path, headers); },
                    "list " + ref.repo_id);
  Transport::CheckStatus(res, ref.repo_id);
  const json tree = json::parse(res->body, nullptr, false);
  if (tree.is_discarded() || !tree.contains("files") || !tree["files"].is_array()) {
    throw Error(ErrorCode::kNetworkError, "malformed tree listing for " + ref.repo_id);
  }
  const std::string revision = tree.value("revision", ref.revision.value_or("main"));

  const bool same_revision = local_rev && *local_rev == revision;
  for (const auto& f : tree["files"]) {
    const std::string path = f.at("path").get<std::string>();
    if (!SafeRelativePath(path)) {
      throw Error(ErrorCode::kNetworkError, "unsafe path in listing: " + path);
    }
    const fs::path local = root / path;
    if (same_revision && fs::exists(local) &&
        (!f.contains("size") || fs::file_size(local) == f["size"].get<std::uintmax_t>())) {
      continue;
    }
    const std::string url = base + "/resolve/" + EncodePath(revision) + "/" + EncodePath(path);
    auto file = t.Send([&](httplib::Client& c) { return c.Get(url, headers); },
                       "download " + path);
    Transport::CheckStatus(file, ref.repo_id + "/" + path);
    ++stats_.downloads;
    WriteFileAtomic(local, file->body);
  }
  WriteFileAtomic(marker, revision);
  return root;
}

std::string render_model_card(const fs::path& metadata_json) {
  const json meta = json::parse(ReadFile(metadata_json), nullptr, false);
  std::ostringstream os;
  const std::string name = meta.is_object() ? meta.value("project_name", "model") : "model";
  os << "---\ntags:\n- trainforge\n";
  if (meta.is_object() && meta.contains("task")) os << "- " << meta["task"].get<std::string>() << "\n";
  os << "---\n\n# " << name << "\n\n";
  if (meta.is_object()) {
    if (meta.contains("task")) os << "- Task: `" << meta["task"].get<std::string>() << "`\n";
    if (meta.contains("base_model")) {
      os << "- Base model: `" << meta["base_model"].get<std::string>() << "`\n";
    }
    if (meta.contains("dataset_fingerprint")) {
      os << "- Dataset fingerprint: `" << meta["dataset_fingerprint"].get<std::string>() << "`\n";
    }
    if (meta.contains("metrics")) {
      os << "\n## Metrics\n\n```json\n" << meta["metrics"].dump(2) << "\n```\n";
    }
  }
  return os.str();
}

std::string HubClient::push_artifact(const fs::path& project_dir, const HubRef& target,
                                     const std::string& token) {
  if (token.empty()) throw Error(ErrorCode::kAuthRequired, "empty hub token");
  if (!HubRef::is_valid_repo_id(target.repo_id)) {
    throw Error(ErrorCode::kInvalidValue, "bad repo id '" + target.repo_id + "'");
  }
  const fs::path artifact = project_dir / "artifact";
  const fs::path card = artifact / "README.md";
  WriteFileAtomic(card, render_model_card(artifact / "metadata.json"));

  const fs::path state_path = project_dir / kPushState;
  json state = {{"repo_id", target.repo_id}, {"uploaded", json::array()}};
  if (fs::exists(state_path)) {
    const json prior = json::parse(ReadFile(state_path), nullptr, false);
    if (!prior.is_discarded() && prior.value("repo_id", "") == target.repo_id) state = prior;
  }

  Transport t(options_, stats_);
  const std::string base = "/api/" + KindSegment(target.kind) + "/" + target.repo_id;
  const auto headers = AuthHeaders(token);
  for (const char* name : {"model.bin", "metadata.json", "README.md"}) {
    const auto& done = state["uploaded"];
    if (std::find(done.begin(), done.end(), name) != done.end()) continue;
    const std::string body = ReadFile(artifact / name);
    const std::string url = base + "/upload/" + name;
    auto res = t.Send(
        [&](httplib::Client& c) {
          return c.Put(url, headers, body, "application/octet-stream");
        },
        std::string("upload ") + name);
    Transport::CheckStatus(res, target.repo_id + "/" + name);
    ++stats_.uploads;
    state["uploaded"].push_back(name);
    WriteFileAtomic(state_path, state.dump());
  }
  fs::remove(state_path);
  return options_.endpoint + "/" + target.repo_id;
}

}  // namespace trainforge
