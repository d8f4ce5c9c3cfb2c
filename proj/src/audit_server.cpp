// Copyright 2026 The l2ieval Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Eigen must precede httplib: <resolv.h> defines a `_res` macro.
#include "l2i/audit.hpp"

#include <httplib.h>

#include "jsonl.hpp"

namespace l2i {

using detail::json;

struct AuditServer::Impl {
  httplib::Server server;
};

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& what) {
  reply(res, status, json{{"error", what}});
}

bool parse_verdict_value(const json& v, bool& out) {
  if (v.is_boolean()) {
    out = v.get<bool>();
    return true;
  }
  if (!v.is_string()) return false;
  const auto s = v.get<std::string>();
  if (s == "yes" || s == "Yes") {
    out = true;
    return true;
  }
  if (s == "no" || s == "No") {
    out = false;
    return true;
  }
  return false;
}

VerdictInput verdict_input(const std::string& id, const json& obj) {
  VerdictInput in;
  in.record_id = id;
  if (!obj.is_object() || !obj.contains("check") || !obj["check"].is_string()) {
    throw AuditError(400, "verdict needs a string 'check'");
  }
  in.check = obj["check"].get<std::string>();
  if (!obj.contains("verdict") || !parse_verdict_value(obj["verdict"], in.verdict)) {
    throw AuditError(400, "verdict must be yes or no");
  }
  in.auditor = obj.value("auditor", "");
  in.idempotency_key = obj.value("idempotency_key", "");
  return in;
}

json event_obj(const VerdictOutcome& o) {
  return {{"event", json::parse(serialize_event(o.event))},
          {"status", std::string(to_string(o.status))},
          {"duplicate", o.duplicate}};
}

}  // namespace

AuditServer::AuditServer(AuditStore& store, AuditServerOptions opts)
    : impl_(std::make_unique<Impl>()), store_(store), opts_(std::move(opts)) {
  auto& srv = impl_->server;
  // httplib defaults to SO_REUSEPORT, which lets a second server share the
  // port silently. Plain SO_REUSEADDR still allows quick restarts.
  srv.set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });

  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const AuditError& e) {
      reply_error(res, e.status(), e.what());
    } catch (const json::exception& e) {
      reply_error(res, 400, std::string("malformed body: ") + e.what());
    } catch (const std::exception& e) {
      reply_error(res, 500, e.what());
    }
  });

  srv.Get("/tasks", [this](const httplib::Request& req, httplib::Response& res) {
    TaskFilter filter;
    if (req.has_param("status") && !req.get_param_value("status").empty()) {
      filter.status = parse_status(req.get_param_value("status"));
      if (!filter.status) throw AuditError(400, "unknown status filter");
    }
    if (req.has_param("bucket") && !req.get_param_value("bucket").empty()) {
      filter.bucket = parse_split(req.get_param_value("bucket"));
      if (!filter.bucket) throw AuditError(400, "unknown bucket filter");
    }
    std::optional<std::string> cursor;
    if (req.has_param("cursor") && !req.get_param_value("cursor").empty()) cursor = req.get_param_value("cursor");
    std::size_t limit = opts_.default_page_size;
    if (req.has_param("limit")) {
      try {
        limit = std::stoul(req.get_param_value("limit"));
      } catch (const std::exception&) {
        throw AuditError(400, "limit must be a positive integer");
      }
    }
    const auto page = store_.list_tasks(filter, cursor, limit);
    json items = json::array();
    for (const auto& t : page.items) items.push_back(json::parse(task_summary_json(t)));
    reply(res, 200, json{{"tasks", items}, {"next_cursor", page.next_cursor ? json(*page.next_cursor) : json()}});
  });

  srv.Get(R"(/tasks/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    res.status = 200;
    res.set_content(task_json(store_.get_task(req.matches[1])), "application/json");
  });

  srv.Post(R"(/tasks/([^/]+)/verdicts)", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    const json body = json::parse(req.body);
    if (body.is_object() && body.contains("verdicts")) {
      // Validate every entry before storing any of them.
      std::vector<VerdictInput> inputs;
      for (const auto& v : body.at("verdicts")) inputs.push_back(verdict_input(id, v));
      const auto checks = store_.checks();
      store_.get_task(id);
      for (const auto& in : inputs) {
        if (std::find(checks.begin(), checks.end(), in.check) == checks.end()) {
          throw AuditError(400, "unknown check '" + in.check + "'");
        }
      }
      json out = json::array();
      TaskStatus status = TaskStatus::Pending;
      for (const auto& in : inputs) {
        const auto o = store_.post_verdict(in);
        status = o.status;
        out.push_back(event_obj(o));
      }
      reply(res, 200, json{{"results", out}, {"status", std::string(to_string(status))}});
      return;
    }
    reply(res, 200, event_obj(store_.post_verdict(verdict_input(id, body))));
  });

  srv.Post("/export", [this](const httplib::Request& req, httplib::Response& res) {
    std::string dest = opts_.default_export_path;
    if (!req.body.empty()) {
      const json body = json::parse(req.body);
      dest = body.value("destination", dest);
    }
    const auto counts = store_.export_approved(dest);
    reply(res, 200,
          json{{"destination", dest},
               {"total", counts.total()},
               {"counts", {{"simple", counts.simple}, {"regular", counts.regular}, {"complex", counts.complex}}}});
  });

  if (!opts_.static_dir.empty()) {
    if (!srv.set_mount_point("/", opts_.static_dir)) {
      throw AuditError(500, "static directory not found: " + opts_.static_dir);
    }
  }
}

AuditServer::~AuditServer() { stop(); }

int AuditServer::bind() {
  auto& srv = impl_->server;
  if (opts_.port == 0) {
    port_ = srv.bind_to_any_port(opts_.bind);
    if (port_ < 0) throw AuditError(500, "cannot bind " + opts_.bind);
  } else {
    if (!srv.bind_to_port(opts_.bind, opts_.port)) {
      throw AuditError(500, "cannot bind " + opts_.bind + ":" + std::to_string(opts_.port) + " (port in use?)");
    }
    port_ = opts_.port;
  }
  return port_;
}

void AuditServer::listen() { impl_->server.listen_after_bind(); }

void AuditServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace l2i
