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

#include "test_support.hpp"

#include <stdlib.h>

#include <fstream>
#include <regex>
#include <sstream>
#include <stdexcept>

#include "trainforge/rng.hpp"

namespace fs = std::filesystem;

namespace trainforge::testing {

TempDir::TempDir() {
  std::string tmpl = (fs::temp_directory_path() / "trainforge-test-XXXXXX").string();
  if (::mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << content;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string separable_csv(std::size_t n, std::uint64_t seed) {
  static const char* kFiller[] = {"the", "a",    "cat",   "dog",  "runs",
                                  "fast", "slow", "blue", "green", "house"};
  CounterRng rng(seed);
  std::string out = "text,label\n";
  for (std::size_t i = 0; i < n; ++i) {
    const bool a = i % 2 == 0;
    std::vector<std::string> words;
    for (int k = 0; k < 4; ++k) words.push_back(kFiller[rng.below(10)]);
    words.insert(words.begin() + static_cast<long>(rng.below(5)), a ? "aardvark" : "zebra");
    std::string line;
    for (const auto& w : words) line += (line.empty() ? "" : " ") + w;
    out += line + "," + (a ? "A" : "B") + "\n";
  }
  return out;
}

std::string tiny_text_config(const std::string& project_name, int epochs,
                             const std::string& extra_params) {
  return "task: text-classification\n"
         "base_model: none\n"
         "project_name: " + project_name + "\n"
         "log: tensorboard\n"
         "backend: local\n"
         "data:\n"
         "  path: train.csv\n"
         "  train_split: train\n"
         "  valid_split: null\n"
         "  column_mapping:\n"
         "    text_column: text\n"
         "    target_column: label\n"
         "params:\n"
         "  epochs: " + std::to_string(epochs) + "\n"
         "  batch_size: 8\n"
         "  lr: 0.05\n"
         "  hash_dim: 1024\n" + extra_params;
}

ValidatedProject make_project(const std::string& task, const ParamSet& params) {
  const TaskSpec& spec = resolve_task(task);
  ProjectConfig c;
  c.task = spec.id;
  c.base_model = "none";
  c.project_name = "test-project";
  c.data.path = "data";
  c.data.train_split = "train";
  for (const auto& role : spec.column_roles) {
    if (role.required) c.data.column_mapping[role.name] = role.name;
  }
  c.params = params;
  return validate_config(c);
}

ProcessedDataset make_processed(const ValidatedProject& project, std::vector<Record> train,
                                std::optional<std::vector<Record>> valid) {
  ProcessedDataset p;
  p.task = project.spec->id;
  p.train = std::move(train);
  p.valid = std::move(valid);
  for (const auto& role : project.spec->column_roles) p.schema.emplace_back(role.name, "any");
  p.fingerprint = fingerprint(p);
  return p;
}

std::vector<Record> separable_records(std::size_t n, std::uint64_t seed) {
  std::vector<Record> out;
  std::istringstream in(separable_csv(n, seed));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto comma = line.rfind(',');
    out.push_back({{"text_column", line.substr(0, comma)}, {"target_column", line.substr(comma + 1)}});
  }
  return out;
}

const char* const kOrpoListing = R"(task: llm:orpo
base_model: meta-llama/Meta-Llama-3.1-8B
project_name: autotrain-llama
log: tensorboard
backend: local

data:
  path: HuggingFaceH4/no_robots
  train_split: train
  valid_split: null
  chat_template: zephyr
  column_mapping:
    text_column: chosen
    rejected_text_column: rejected
    prompt_text_column: prompt

params:
  block_size: 1024
  model_max_length: 8192
  max_prompt_length: 512
  epochs: 3
  batch_size: 2
  lr: 3e-5
  peft: true
  quantization: int4
  target_modules: all-linear
  padding: right
  optimizer: adamw_torch
  scheduler: linear
  gradient_accumulation: 4
  mixed_precision: fp16

hub:
  username: ${HF_USERNAME}
  token: ${HF_TOKEN}
  push_to_hub: true
)";

MockHub::MockHub() {
  auto guard = [this](httplib::Response& res) {
    std::lock_guard lock(mu_);
    if (fail_next_ > 0) {
      --fail_next_;
      res.status = 503;
      return true;
    }
    return false;
  };
  auto note_token = [this](const httplib::Request& req) {
    const auto auth = req.get_header_value("Authorization");
    std::lock_guard lock(mu_);
    if (!auth.empty()) tokens_.push_back(auth);
    return auth;
  };
  server_.Get(R"(/api/(models|datasets)/([^/]+/[^/]+)/tree)",
              [=, this](const httplib::Request& req, httplib::Response& res) {
                if (guard(res)) return;
                note_token(req);
                std::lock_guard lock(mu_);
                auto it = repos_.find(req.matches[1].str() + "/" + req.matches[2].str());
                if (it == repos_.end()) {
                  res.status = 404;
                  return;
                }
                nlohmann::json files = nlohmann::json::array();
                for (const auto& [p, c] : it->second) files.push_back({{"path", p}, {"size", c.size()}});
                res.set_content(nlohmann::json{{"revision", revision_}, {"files", files}}.dump(),
                                "application/json");
              });
  server_.Get(R"(/api/(models|datasets)/([^/]+/[^/]+)/resolve/([^/]+)/(.+))",
              [=, this](const httplib::Request& req, httplib::Response& res) {
                if (guard(res)) return;
                note_token(req);
                std::lock_guard lock(mu_);
                auto it = repos_.find(req.matches[1].str() + "/" + req.matches[2].str());
                if (it == repos_.end() || !it->second.contains(req.matches[4].str())) {
                  res.status = 404;
                  return;
                }
                ++downloads_;
                res.set_content(it->second.at(req.matches[4].str()), "application/octet-stream");
              });
  server_.Put(R"(/api/(models|datasets)/([^/]+/[^/]+)/upload/(.+))",
              [=, this](const httplib::Request& req, httplib::Response& res) {
                if (guard(res)) return;
                const auto auth = note_token(req);
                std::lock_guard lock(mu_);
                if (required_token_ && auth != "Bearer " + *required_token_) {
                  res.status = 401;
                  return;
                }
                ++uploads_;
                repos_[req.matches[1].str() + "/" + req.matches[2].str()][req.matches[3].str()] =
                    req.body;
                res.status = 200;
              });
  port_ = server_.bind_to_any_port("127.0.0.1");
  thread_ = std::thread([this] { server_.listen_after_bind(); });
  server_.wait_until_ready();
}

MockHub::~MockHub() {
  server_.stop();
  if (thread_.joinable()) thread_.join();
}

std::string MockHub::endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }

void MockHub::add_file(const std::string& kind, const std::string& repo, const std::string& path,
                       const std::string& content) {
  std::lock_guard lock(mu_);
  repos_[kind + "/" + repo][path] = content;
}

std::map<std::string, std::string> MockHub::repo_files(const std::string& kind,
                                                       const std::string& repo) const {
  std::lock_guard lock(mu_);
  auto it = repos_.find(kind + "/" + repo);
  return it == repos_.end() ? std::map<std::string, std::string>{} : it->second;
}

int MockHub::downloads() const {
  std::lock_guard lock(mu_);
  return downloads_;
}

int MockHub::uploads() const {
  std::lock_guard lock(mu_);
  return uploads_;
}

std::vector<std::string> MockHub::seen_tokens() const {
  std::lock_guard lock(mu_);
  return tokens_;
}

ApiClient::ApiClient(int port, std::optional<std::string> token)
    : client_("127.0.0.1", port) {
  client_.set_read_timeout(std::chrono::seconds(60));
  if (token) headers_.emplace("Authorization", "Bearer " + *token);
}

HttpReply ApiClient::wrap(const httplib::Result& res) {
  HttpReply r;
  if (!res) return r;
  r.status = res->status;
  r.raw = res->body;
  r.body = nlohmann::json::parse(res->body, nullptr, false);
  return r;
}

HttpReply ApiClient::get(const std::string& path) { return wrap(client_.Get(path, headers_)); }

HttpReply ApiClient::post(const std::string& path, const nlohmann::json& body) {
  return wrap(client_.Post(path, headers_, body.dump(), "application/json"));
}

HttpReply ApiClient::post_raw(const std::string& path, const std::string& body,
                              const std::string& content_type) {
  return wrap(client_.Post(path, headers_, body, content_type));
}

HttpReply ApiClient::upload(const std::string& path, const std::string& filename,
                            const std::string& content) {
  httplib::MultipartFormDataItems items = {
      {"file", content, filename, "application/octet-stream"}};
  return wrap(client_.Post(path, headers_, items));
}

std::vector<fs::path> files_containing(const fs::path& root, const std::string& needle) {
  std::vector<fs::path> hits;
  if (!fs::exists(root)) return hits;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    if (read_file(entry.path()).find(needle) != std::string::npos) hits.push_back(entry.path());
  }
  return hits;
}

}  // namespace trainforge::testing
