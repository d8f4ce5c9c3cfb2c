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

#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "l2i/annotations.hpp"
#include "l2i/overlayscore.hpp"

namespace l2i {

/// Error carrying an HTTP-style status class (400, 404, 500).
class AuditError : public std::runtime_error {
 public:
  AuditError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

enum class TaskStatus { Pending, Approved, Rejected };
std::string_view to_string(TaskStatus s);
std::optional<TaskStatus> parse_status(std::string_view s);

inline const std::vector<std::string>& default_checks() {
  static const std::vector<std::string> kChecks{"bbox_accuracy", "caption_alignment", "relationship_validity"};
  return kChecks;
}

struct AuditTask {
  LayoutRecord record;
  double score;
  Split bucket;
  std::string image;
  TaskStatus status = TaskStatus::Pending;
  /// Latest verdict per check; absent checks are missing from the map.
  std::map<std::string, bool> verdicts;
};

struct VerdictEvent {
  std::uint64_t seq = 0;
  std::string record_id;
  std::string check;
  bool verdict = false;
  std::string auditor;
  std::string idempotency_key;
  std::int64_t timestamp_ms = 0;
};

std::string serialize_event(const VerdictEvent& e);
VerdictEvent parse_event(const std::string& line);

struct VerdictInput {
  std::string record_id;
  std::string check;
  bool verdict = false;
  std::string auditor;
  std::string idempotency_key;  // empty disables deduplication
};

struct VerdictOutcome {
  VerdictEvent event;
  TaskStatus status;
  bool duplicate;
};

struct TaskFilter {
  std::optional<TaskStatus> status;
  std::optional<Split> bucket;
};

struct TaskSnapshotPage {
  std::vector<AuditTask> items;
  std::optional<std::string> next_cursor;
};

struct ExportCounts {
  std::size_t simple = 0;
  std::size_t regular = 0;
  std::size_t complex = 0;
  std::size_t total() const { return simple + regular + complex; }
};

/// Status implied by the latest per-check verdicts.
TaskStatus derive_status(const std::map<std::string, bool>& verdicts, const std::vector<std::string>& checks);

/// Task table backed by an append-only verdict log. Every accepted verdict is
/// written and flushed to the log before post_verdict() returns; opening a
/// store replays the existing log.
class AuditStore {
 public:
  struct Options {
    std::string log_path;
    std::vector<std::string> checks = default_checks();
    std::function<std::int64_t()> clock;  // defaults to system time in ms
  };

  AuditStore(std::vector<AuditTask> tasks, Options opts);
  ~AuditStore();
  AuditStore(const AuditStore&) = delete;
  AuditStore& operator=(const AuditStore&) = delete;

  /// Ordered by (bucket, id). The cursor is opaque; a malformed one raises
  /// AuditError(400).
  TaskSnapshotPage list_tasks(const TaskFilter& filter, const std::optional<std::string>& cursor,
                              std::size_t page_size) const;

  AuditTask get_task(const std::string& id) const;

  VerdictOutcome post_verdict(const VerdictInput& in);

  ExportCounts export_approved(const std::string& destination) const;

  std::vector<std::string> checks() const { return opts_.checks; }
  std::size_t size() const;
  std::vector<VerdictEvent> events() const;
  std::map<std::string, TaskStatus> statuses() const;

  /// Statuses obtained by replaying `events` over fresh tasks.
  static std::map<std::string, TaskStatus> replay(const std::vector<AuditTask>& tasks,
                                                  const std::vector<VerdictEvent>& events,
                                                  const std::vector<std::string>& checks);
  static std::vector<VerdictEvent> read_log(const std::string& path);

 private:
  using DedupKey = std::tuple<std::string, std::string, std::string, std::string>;

  void apply(const VerdictEvent& e);
  void append_durably(const VerdictEvent& e);

  Options opts_;
  mutable std::shared_mutex mu_;
  std::mutex log_mu_;
  std::map<std::string, AuditTask> tasks_;
  std::map<std::pair<int, std::string>, std::string> order_;  // (bucket, id) -> id
  std::vector<VerdictEvent> events_;
  std::map<DedupKey, std::size_t> dedup_;
  std::uint64_t next_seq_ = 1;
  std::FILE* log_ = nullptr;
};

/// Builds tasks from annotation records joined with their scored entries.
/// Records without a score are skipped and reported in `missing`.
/// `image_template` may contain "{id}", replaced by the record id; a record's
/// own image reference wins.
std::vector<AuditTask> build_tasks(const std::vector<LayoutRecord>& records, const std::vector<ScoredEntry>& scored,
                                   const std::string& image_template, std::vector<std::string>* missing = nullptr);

std::string task_summary_json(const AuditTask& t);
std::string task_json(const AuditTask& t);

struct AuditServerOptions {
  std::string bind = "127.0.0.1";
  int port = 8765;  // 0 picks a free port
  std::string static_dir;
  std::string default_export_path = "approved.jsonl";
  std::size_t default_page_size = 50;
};

/// HTTP front end for an AuditStore.
class AuditServer {
 public:
  AuditServer(AuditStore& store, AuditServerOptions opts);
  ~AuditServer();

  /// Binds the socket; throws AuditError when the port is unavailable.
  int bind();
  /// Serves until stop(). bind() must have succeeded.
  void listen();
  void stop();
  int port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  AuditStore& store_;
  AuditServerOptions opts_;
  int port_ = 0;
};

}  // namespace l2i
