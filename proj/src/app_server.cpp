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

#include "trainforge/app_server.hpp"

#include <sys/socket.h>

#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "trainforge/dataset.hpp"
#include "trainforge/error.hpp"
#include "trainforge/hub_client.hpp"
#include "trainforge/monitoring.hpp"
#include "trainforge/pipeline.hpp"

namespace trainforge {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kIndexPage =
    "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>trainforge</title></head>\n"
    "<body><h1>trainforge</h1><p>The JSON API is served under <code>/api/</code>. "
    "See <code>/api/tasks</code>.</p></body></html>\n";

struct HttpError {
  int status;
  json body;
};

HttpError Fail(int status, const std::string& error, const std::string& detail) {
  return {status, json{{"error", error}, {"detail", detail}}};
}

int StatusFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnsupportedFormat: return 415;
    case ErrorCode::kTrainerUnbound: return 424;
    case ErrorCode::kBackendUnavailable:
    case ErrorCode::kAlreadyTerminal: return 409;
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kAuthRequired: return 401;
    case ErrorCode::kSpawnFailed:
    case ErrorCode::kIoError: return 503;
    default: return 422;
  }
}

HttpError FromError(const Error& e) {
  HttpError out = Fail(StatusFor(e.code()), std::string(e.name()), e.detail());
  out.body["message"] = e.what();
  if (!e.key_path().empty()) out.body["error_key_path"] = e.key_path();
  return out;
}

void Send(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

std::string NewUuid() {
  static std::mutex mu;
  static std::mt19937_64 gen{std::random_device{}()};
  std::lock_guard lock(mu);
  std::uint64_t hi = gen();
  std::uint64_t lo = gen();
  hi = (hi & 0xffffffffffff0fffULL) | 0x0000000000004000ULL;  // version 4
  lo = (lo & 0x3fffffffffffffffULL) | 0x8000000000000000ULL;  // RFC 4122 variant
  char buf[37];
  std::snprintf(buf, sizeof(buf), "%08x-%04x-%04x-%04x-%012llx",
                static_cast<unsigned>(hi >> 32), static_cast<unsigned>((hi >> 16) & 0xffff),
                static_cast<unsigned>(hi & 0xffff), static_cast<unsigned>(lo >> 48),
                static_cast<unsigned long long>(lo & 0xffffffffffffULL));
  return buf;
}

json ParamDefJson(const ParamDef& d) {
  json j = {{"name", d.name},
            {"kind", std::string(param_kind_name(d.kind))},
            {"default", std::visit([](const auto& v) { return json(v); }, d.default_value)},
            {"help", d.help}};
  j["min"] = d.min ? json(*d.min) : json(nullptr);
  j["max"] = d.max ? json(*d.max) : json(nullptr);
  if (!d.allowed.empty()) j["allowed"] = d.allowed;
  if (d.power_of_two) j["power_of_two"] = true;
  return j;
}

json TaskJson(const TaskSpec& spec) {
  json roles = json::array();
  for (const auto& r : spec.column_roles) {
    roles.push_back({{"name", r.name}, {"required", r.required}, {"multi", r.multi}});
  }
  return {{"id", spec.id.canonical()},
          {"modality", std::string(modality_name(spec.modality))},
          {"artifact_kind", std::string(artifact_kind_name(spec.artifact_kind))},
          {"trainer_binding", std::string(trainer_binding_name(spec.trainer_binding))},
          {"column_roles", roles}};
}

bool IsHubPath(const std::string& path) {
  return !fs::exists(path) && HubRef::is_valid_repo_id(path);
}

}  // namespace

std::string_view project_state_name(ProjectState s) {
  switch (s) {
    case ProjectState::kCreated: return "created";
    case ProjectState::kDataReady: return "data_ready";
    case ProjectState::kRunning: return "running";
    case ProjectState::kSucceeded: return "succeeded";
    case ProjectState::kFailed: return "failed";
    case ProjectState::kStopped: return "stopped";
  }
  return "?";
}

std::optional<ProjectState> parse_project_state(std::string_view s) {
  for (auto st : {ProjectState::kCreated, ProjectState::kDataReady, ProjectState::kRunning,
                  ProjectState::kSucceeded, ProjectState::kFailed, ProjectState::kStopped}) {
    if (project_state_name(st) == s) return st;
  }
  return std::nullopt;
}

bool is_legal_transition(ProjectState from, ProjectState to) {
  using S = ProjectState;
  switch (from) {
    case S::kCreated: return to == S::kDataReady || to == S::kRunning;
    case S::kDataReady: return to == S::kDataReady || to == S::kRunning;
    case S::kRunning: return to == S::kSucceeded || to == S::kFailed || to == S::kStopped;
    case S::kFailed:
    case S::kStopped: return to == S::kRunning;
    case S::kSucceeded: return false;
  }
  return false;
}

struct AppServer::Impl {
  struct Project {
    std::string id;
    std::string name;
    ProjectConfig config;
    ProjectState state = ProjectState::kCreated;
    std::int64_t created_at = 0;
    std::optional<std::string> fingerprint;
    std::int64_t rows = 0;
    std::string run_id;
    RunHandle handle;
    bool busy = false;  // dataset upload in progress
    fs::path dir;
  };

  AppOptions options;
  httplib::Server server;
  std::thread thread;
  int port = -1;
  std::string host;

  std::mutex mu;
  std::map<std::string, Project> projects;
  std::mutex journal_mu;

  explicit Impl(AppOptions o) : options(std::move(o)) {
    if (options.cache_dir.empty()) options.cache_dir = default_cache_dir(options.env);
    fs::create_directories(options.workdir);
    replay();
    routes();
  }

  fs::path journal_path() const { return options.workdir / "projects.jsonl"; }

  void journal(const json& entry) {
    std::lock_guard lock(journal_mu);
    std::ofstream out(journal_path(), std::ios::app);
    out << entry.dump() << "\n";
  }

  void replay() {
    std::ifstream in(journal_path());
    std::string line;
    std::vector<std::string> order;
    while (std::getline(in, line)) {
      const json j = json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object()) continue;
      const std::string op = j.value("op", "");
      const std::string id = j.value("id", "");
      try {
        if (op == "create") {
          Project p;
          p.id = id;
          p.config = parse_config(j.at("config").get<std::string>(), options.env);
          p.name = p.config.project_name;
          p.created_at = j.value("created_at", std::int64_t{0});
          p.dir = options.workdir / p.name;
          projects[id] = std::move(p);
          order.push_back(id);
          continue;
        }
        auto it = projects.find(id);
        if (it == projects.end()) continue;
        Project& p = it->second;
        if (op == "dataset") {
          p.fingerprint = j.at("fingerprint").get<std::string>();
          p.rows = j.at("rows").get<std::int64_t>();
          p.config.data.path = j.at("data_path").get<std::string>();
        } else if (op == "state") {
          if (auto st = parse_project_state(j.at("state").get<std::string>())) p.state = *st;
          p.run_id = j.value("run_id", p.run_id);
        }
      } catch (const std::exception& e) {
        std::fprintf(stderr, "skipping journal entry for %s: %s\n", id.c_str(), e.what());
      }
    }
    for (auto& [id, p] : projects) {
      if (p.state == ProjectState::kRunning) {
        p.state = ProjectState::kFailed;
        journal({{"op", "state"}, {"id", id}, {"state", "failed"}, {"run_id", p.run_id},
                 {"reason", "server restarted during the run"}});
      }
    }
  }

  // Caller holds mu.
  void set_state(Project& p, ProjectState to) {
    if (!is_legal_transition(p.state, to)) {
      throw std::logic_error("illegal transition " + std::string(project_state_name(p.state)) +
                             " -> " + std::string(project_state_name(to)));
    }
    p.state = to;
    journal({{"op", "state"}, {"id", p.id}, {"state", project_state_name(to)},
             {"run_id", p.run_id}});
  }

  void on_run_finished(const std::string& id, const std::string& run_id, RunStatus status) {
    std::lock_guard lock(mu);
    auto it = projects.find(id);
    if (it == projects.end()) return;
    Project& p = it->second;
    if (p.run_id != run_id || p.state != ProjectState::kRunning) return;
    set_state(p, status == RunStatus::kSucceeded ? ProjectState::kSucceeded
                 : status == RunStatus::kStopped ? ProjectState::kStopped
                                                 : ProjectState::kFailed);
  }

  json project_json(const Project& p) const {
    json j = {{"id", p.id},
              {"name", p.name},
              {"task", p.config.task.canonical()},
              {"backend", std::string(backend_name(p.config.backend))},
              {"state", project_state_name(p.state)},
              {"created_at", p.created_at},
              {"rows", p.rows},
              {"config", canonicalize(p.config)}};
    j["fingerprint"] = p.fingerprint ? json(*p.fingerprint) : json(nullptr);
    j["run_id"] = p.run_id.empty() ? json(nullptr) : json(p.run_id);
    return j;
  }

  Project& find(const std::string& id) {
    auto it = projects.find(id);
    if (it == projects.end()) throw Fail(404, "NotFound", "no project " + id);
    return it->second;
  }

  // ---- handlers -------------------------------------------------------

  json create_project(const httplib::Request& req) {
    const json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object() || !body.contains("config")) {
      throw Fail(400, "InvalidValue", "body must be a JSON object with a 'config' field");
    }
    const json& cfg = body["config"];
    std::string text;
    if (cfg.is_string()) {
      text = cfg.get<std::string>();
    } else if (cfg.is_object()) {
      text = cfg.dump();
    } else {
      throw Fail(400, "InvalidValue", "'config' must be YAML text or a JSON object");
    }
    ProjectConfig config = parse_config(text, options.env);
    validate_config(config);

    std::lock_guard lock(mu);
    for (const auto& [_, p] : projects) {
      if (p.name == config.project_name) {
        throw Fail(409, "Conflict", "project_name '" + config.project_name + "' exists");
      }
    }
    Project p;
    p.id = NewUuid();
    p.name = config.project_name;
    p.config = std::move(config);
    p.created_at = now_millis();
    p.dir = options.workdir / p.name;
    fs::create_directories(p.dir);
    journal({{"op", "create"}, {"id", p.id}, {"config", canonicalize(p.config)},
             {"created_at", p.created_at}});
    const std::string id = p.id;
    projects[id] = std::move(p);
    return {{"id", id}, {"state", "created"}};
  }

  json upload_dataset(const httplib::Request& req, const std::string& id) {
    if (!req.has_file("file")) {
      throw Fail(400, "InvalidValue", "multipart field 'file' is required");
    }
    const auto file = req.get_file_value("file");
    std::string ext = fs::path(file.filename).extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (ext != ".csv" && ext != ".jsonl" && ext != ".zip") {
      throw FromError(Error(ErrorCode::kUnsupportedFormat,
                            ext.empty() ? "file has no extension" : ext));
    }

    ProjectConfig config;
    fs::path data_dir;
    {
      std::lock_guard lock(mu);
      Project& p = find(id);
      if ((p.state != ProjectState::kCreated && p.state != ProjectState::kDataReady) || p.busy) {
        throw Fail(409, "Conflict", "cannot upload while " +
                                        std::string(project_state_name(p.state)));
      }
      p.busy = true;
      config = p.config;
      data_dir = fs::absolute(p.dir / "data");
    }
    auto release = [&] {
      std::lock_guard lock(mu);
      find(id).busy = false;
    };
    try {
      fs::create_directories(data_dir);
      const std::string split = config.data.train_split;
      for (const char* e : {".csv", ".jsonl", ".zip"}) fs::remove(data_dir / (split + e));
      {
        std::ofstream out(data_dir / (split + ext), std::ios::binary | std::ios::trunc);
        out.write(file.content.data(), static_cast<std::streamsize>(file.content.size()));
        if (!out) throw Error(ErrorCode::kIoError, "cannot store upload");
      }
      config.data.path = data_dir.string();
      const ValidatedProject project = validate_config(config);
      HubClient hub(HubOptions::from_env(options.env));
      const PreparedDataset prepared = prepare_dataset(project, options.cache_dir, &hub);
      const auto rows = static_cast<std::int64_t>(
          prepared.data.train.size() + (prepared.data.valid ? prepared.data.valid->size() : 0));

      std::lock_guard lock(mu);
      Project& p = find(id);
      p.busy = false;
      p.config.data.path = config.data.path;
      p.fingerprint = prepared.data.fingerprint;
      p.rows = rows;
      journal({{"op", "dataset"}, {"id", id}, {"fingerprint", *p.fingerprint}, {"rows", rows},
               {"data_path", config.data.path}});
      set_state(p, ProjectState::kDataReady);
      return {{"fingerprint", *p.fingerprint}, {"rows", rows}, {"cache_hit", prepared.cache_hit}};
    } catch (...) {
      release();
      throw;
    }
  }

  json start_run(const std::string& id) {
    std::lock_guard lock(mu);
    Project& p = find(id);
    const bool startable =
        p.state == ProjectState::kDataReady || p.state == ProjectState::kFailed ||
        p.state == ProjectState::kStopped ||
        (p.state == ProjectState::kCreated && IsHubPath(p.config.data.path));
    if (!startable || p.busy) {
      throw Fail(409, "Conflict",
                 "cannot start from state " + std::string(project_state_name(p.state)));
    }
    const ValidatedProject project = validate_config(p.config);

    DispatchOptions d;
    d.project_dir = p.dir;
    d.cache_dir = options.cache_dir;
    d.local_mode = options.local_mode;
    d.executable = options.executable;
    d.env = options.env;
    d.bindings = options.bindings;
    d.docker_image = options.docker_image;
    d.stop_grace = options.stop_grace;
    d.run_id = new_run_id();
    if (p.state != ProjectState::kCreated) d.expected_fingerprint = p.fingerprint;
    const fs::path checkpoints = p.dir / "checkpoints";
    if (p.state == ProjectState::kStopped && fs::exists(checkpoints) &&
        !fs::is_empty(checkpoints)) {
      d.resume_from = checkpoints;
    } else {
      std::error_code ec;
      fs::remove_all(checkpoints, ec);
    }
    const std::string run_id = d.run_id;
    d.on_finish = [this, id, run_id](RunStatus status) { on_run_finished(id, run_id, status); };

    RunHandle handle = dispatch(project, d);
    p.run_id = run_id;
    p.handle = handle;
    set_state(p, ProjectState::kRunning);
    json out = {{"run_id", run_id}, {"status", run_status_name(handle.status())}};
    if (handle.dry_run()) out["command"] = handle.command();
    if (handle.status() == RunStatus::kFailed) {
      out["error"] = handle.error();
      set_state(p, ProjectState::kFailed);
    }
    return out;
  }

  json stop_run(const std::string& id) {
    RunHandle handle;
    std::string run_id;
    {
      std::lock_guard lock(mu);
      Project& p = find(id);
      if (p.state != ProjectState::kRunning || !p.handle) {
        throw Fail(409, "Conflict",
                   "cannot stop from state " + std::string(project_state_name(p.state)));
      }
      handle = p.handle;
      run_id = p.run_id;
    }
    try {
      trainforge::stop(handle);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kAlreadyTerminal) throw;
    }
    handle.wait();
    std::lock_guard lock(mu);
    Project& p = find(id);
    if (p.run_id == run_id && p.state == ProjectState::kRunning) {
      const RunStatus st = handle.status();
      set_state(p, st == RunStatus::kSucceeded ? ProjectState::kSucceeded
                   : st == RunStatus::kFailed  ? ProjectState::kFailed
                                               : ProjectState::kStopped);
    }
    return {{"state", project_state_name(p.state)}, {"run_id", run_id}};
  }

  json logs(const httplib::Request& req, const std::string& id) {
    std::uint64_t cursor = 0;
    if (req.has_param("cursor")) {
      const std::string c = req.get_param_value("cursor");
      try {
        std::size_t used = 0;
        cursor = std::stoull(c, &used);
        if (used != c.size()) throw std::invalid_argument(c);
      } catch (const std::exception&) {
        throw Fail(400, "InvalidValue", "cursor must be a byte offset");
      }
    }
    fs::path events;
    {
      std::lock_guard lock(mu);
      events = find(id).dir / "events.jsonl";
    }
    const auto deadline = std::chrono::steady_clock::now() + options.long_poll;
    while (true) {
      TailResult r;
      r.cursor = cursor;
      if (fs::exists(events)) r = tail(events, cursor);
      ProjectState state;
      {
        std::lock_guard lock(mu);
        state = find(id).state;
      }
      if (!r.events.empty() || state != ProjectState::kRunning ||
          std::chrono::steady_clock::now() >= deadline) {
        json list = json::array();
        for (const auto& e : r.events) list.push_back(json::parse(event_to_json_line(e)));
        return {{"events", list}, {"cursor", r.cursor}, {"state", project_state_name(state)}};
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
  }

  // ---- routing --------------------------------------------------------

  template <typename F>
  httplib::Server::Handler wrap(F f, int ok_status = 200) {
    return [f, ok_status](const httplib::Request& req, httplib::Response& res) {
      try {
        Send(res, ok_status, f(req));
      } catch (const HttpError& e) {
        Send(res, e.status, e.body);
      } catch (const Error& e) {
        const HttpError h = FromError(e);
        Send(res, h.status, h.body);
      }
    };
  }

  void routes() {
    server.set_socket_options([](socket_t sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    server.set_exception_handler(
        [](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
          Send(res, 500, json{{"error", "Internal"}, {"detail", "internal error"}});
        });
    server.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      if (!options.api_token || req.path.rfind("/api/", 0) != 0 || req.path == "/api/health") {
        return httplib::Server::HandlerResponse::Unhandled;
      }
      if (req.get_header_value("Authorization") == "Bearer " + *options.api_token) {
        return httplib::Server::HandlerResponse::Unhandled;
      }
      Send(res, 401, json{{"error", "AuthRequired"}, {"detail", "missing or wrong bearer token"}});
      return httplib::Server::HandlerResponse::Handled;
    });

    server.Get("/", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(kIndexPage, "text/html; charset=utf-8");
    });
    server.Get("/api/health", wrap([](const httplib::Request&) {
                 return json{{"status", "ok"}};
               }));
    server.Get("/api/tasks", wrap([](const httplib::Request&) {
                 json list = json::array();
                 for (const auto& spec : list_tasks()) list.push_back(TaskJson(spec));
                 return list;
               }));
    server.Get(R"(/api/tasks/([^/]+)/params)", wrap([](const httplib::Request& req) {
                 const TaskSpec* spec = nullptr;
                 try {
                   spec = &resolve_task(req.matches[1].str());
                 } catch (const Error& e) {
                   throw Fail(404, std::string(e.name()), e.detail());
                 }
                 json params = json::array();
                 for (const auto& d : spec->param_schema) params.push_back(ParamDefJson(d));
                 json out = TaskJson(*spec);
                 out["task"] = spec->id.canonical();
                 out["params"] = params;
                 return out;
               }));
    server.Post("/api/projects",
                wrap([this](const httplib::Request& req) { return create_project(req); }, 201));
    server.Get("/api/projects", wrap([this](const httplib::Request&) {
                 std::lock_guard lock(mu);
                 json list = json::array();
                 for (const auto& [_, p] : projects) list.push_back(project_json(p));
                 return list;
               }));
    server.Get(R"(/api/projects/([^/]+))", wrap([this](const httplib::Request& req) {
                 std::lock_guard lock(mu);
                 return project_json(find(req.matches[1].str()));
               }));
    server.Post(R"(/api/projects/([^/]+)/dataset)", wrap([this](const httplib::Request& req) {
                  return upload_dataset(req, req.matches[1].str());
                }));
    server.Post(R"(/api/projects/([^/]+)/start)",
                wrap([this](const httplib::Request& req) { return start_run(req.matches[1].str()); },
                     202));
    server.Post(R"(/api/projects/([^/]+)/stop)", wrap([this](const httplib::Request& req) {
                  return stop_run(req.matches[1].str());
                }));
    server.Get(R"(/api/projects/([^/]+)/logs)", wrap([this](const httplib::Request& req) {
                 return logs(req, req.matches[1].str());
               }));
  }
};

AppServer::AppServer(AppOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

AppServer::~AppServer() {
  stop();
  // Runs call back into the project table; end them before it goes away.
  std::vector<RunHandle> active;
  {
    std::lock_guard lock(impl_->mu);
    for (const auto& [_, p] : impl_->projects) {
      if (p.handle && !is_terminal(p.handle.status())) active.push_back(p.handle);
    }
  }
  for (const auto& h : active) {
    try {
      trainforge::stop(h);
    } catch (const Error&) {
    }
    h.wait();
  }
}

int AppServer::bind(const std::string& host, int port) {
  impl_->host = host;
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port(host);
  } else {
    impl_->port = impl_->server.bind_to_port(host, port) ? port : -1;
  }
  if (impl_->port < 0) {
    throw Error(ErrorCode::kBackendUnavailable,
                "cannot bind " + host + ":" + std::to_string(port) + " (address in use?)");
  }
  return impl_->port;
}

void AppServer::listen() { impl_->server.listen_after_bind(); }

void AppServer::start() {
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void AppServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace trainforge
