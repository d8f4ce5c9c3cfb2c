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

#include "l2i/audit.hpp"

#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "jsonl.hpp"

namespace l2i {

using detail::json;

std::string_view to_string(TaskStatus s) {
  switch (s) {
    case TaskStatus::Pending: return "pending";
    case TaskStatus::Approved: return "approved";
    case TaskStatus::Rejected: return "rejected";
  }
  return "?";
}

std::optional<TaskStatus> parse_status(std::string_view s) {
  if (s == "pending") return TaskStatus::Pending;
  if (s == "approved") return TaskStatus::Approved;
  if (s == "rejected") return TaskStatus::Rejected;
  return std::nullopt;
}

TaskStatus derive_status(const std::map<std::string, bool>& verdicts, const std::vector<std::string>& checks) {
  bool all_yes = true;
  for (const auto& c : checks) {
    auto it = verdicts.find(c);
    if (it == verdicts.end()) {
      all_yes = false;
    } else if (!it->second) {
      return TaskStatus::Rejected;
    }
  }
  return all_yes ? TaskStatus::Approved : TaskStatus::Pending;
}

std::string serialize_event(const VerdictEvent& e) {
  return json{{"seq", e.seq},
              {"record_id", e.record_id},
              {"check", e.check},
              {"verdict", e.verdict ? "yes" : "no"},
              {"auditor", e.auditor},
              {"idempotency_key", e.idempotency_key},
              {"timestamp_ms", e.timestamp_ms}}
      .dump();
}

VerdictEvent parse_event(const std::string& line) {
  const json obj = json::parse(line);
  VerdictEvent e;
  e.seq = obj.at("seq").get<std::uint64_t>();
  e.record_id = obj.at("record_id").get<std::string>();
  e.check = obj.at("check").get<std::string>();
  const auto v = obj.at("verdict").get<std::string>();
  if (v != "yes" && v != "no") throw std::invalid_argument("verdict must be yes or no");
  e.verdict = v == "yes";
  e.auditor = obj.value("auditor", "");
  e.idempotency_key = obj.value("idempotency_key", "");
  e.timestamp_ms = obj.value("timestamp_ms", std::int64_t{0});
  return e;
}

std::vector<VerdictEvent> AuditStore::read_log(const std::string& path) {
  std::vector<VerdictEvent> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(parse_event(line));
    } catch (const std::exception& e) {
      if (in.peek() == std::char_traits<char>::eof()) break;  // torn final write
      throw AuditError(500, "verdict log line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

AuditStore::AuditStore(std::vector<AuditTask> tasks, Options opts) : opts_(std::move(opts)) {
  if (opts_.checks.empty()) throw AuditError(500, "audit store needs at least one check");
  if (!opts_.clock) {
    opts_.clock = [] {
      return std::chrono::duration_cast<std::chrono::milliseconds>(
                 std::chrono::system_clock::now().time_since_epoch())
          .count();
    };
  }
  for (auto& t : tasks) {
    t.verdicts.clear();
    t.status = derive_status(t.verdicts, opts_.checks);
    const std::string id = t.record.id;
    order_[{static_cast<int>(t.bucket), id}] = id;
    if (!tasks_.emplace(id, std::move(t)).second) throw AuditError(500, "duplicate task id '" + id + "'");
  }
  if (!opts_.log_path.empty()) {
    for (const auto& e : read_log(opts_.log_path)) {
      if (!tasks_.count(e.record_id)) {
        throw AuditError(500, "verdict log references unknown record '" + e.record_id + "'");
      }
      apply(e);
    }
    log_ = std::fopen(opts_.log_path.c_str(), "a");
    if (!log_) throw AuditError(500, "cannot open verdict log " + opts_.log_path + ": " + std::strerror(errno));
  }
}

AuditStore::~AuditStore() {
  if (log_) std::fclose(log_);
}

void AuditStore::apply(const VerdictEvent& e) {
  auto& t = tasks_.at(e.record_id);
  t.verdicts[e.check] = e.verdict;
  t.status = derive_status(t.verdicts, opts_.checks);
  if (!e.idempotency_key.empty()) {
    dedup_[{e.record_id, e.check, e.auditor, e.idempotency_key}] = events_.size();
  }
  events_.push_back(e);
  next_seq_ = std::max(next_seq_, e.seq + 1);
}

void AuditStore::append_durably(const VerdictEvent& e) {
  if (!log_) return;
  const std::string line = serialize_event(e) + "\n";
  if (std::fwrite(line.data(), 1, line.size(), log_) != line.size() || std::fflush(log_) != 0 ||
      ::fsync(::fileno(log_)) != 0) {
    throw AuditError(500, std::string("verdict log append failed: ") + std::strerror(errno));
  }
}

VerdictOutcome AuditStore::post_verdict(const VerdictInput& in) {
  std::scoped_lock writer(log_mu_);
  {
    std::shared_lock lock(mu_);
    if (!tasks_.count(in.record_id)) throw AuditError(404, "unknown record '" + in.record_id + "'");
    if (std::find(opts_.checks.begin(), opts_.checks.end(), in.check) == opts_.checks.end()) {
      throw AuditError(400, "unknown check '" + in.check + "'");
    }
    if (!in.idempotency_key.empty()) {
      auto it = dedup_.find({in.record_id, in.check, in.auditor, in.idempotency_key});
      if (it != dedup_.end()) return {events_[it->second], tasks_.at(in.record_id).status, true};
    }
  }
  VerdictEvent e{next_seq_, in.record_id, in.check, in.verdict, in.auditor, in.idempotency_key, opts_.clock()};
  append_durably(e);
  std::unique_lock lock(mu_);
  apply(e);
  return {e, tasks_.at(in.record_id).status, false};
}

namespace {

std::string encode_cursor(int bucket, const std::string& id) { return std::to_string(bucket) + ":" + id; }

std::pair<int, std::string> decode_cursor(const std::string& c) {
  const auto colon = c.find(':');
  if (colon != 1 || c[0] < '0' || c[0] > '2') throw AuditError(400, "malformed cursor");
  return {c[0] - '0', c.substr(2)};
}

}  // namespace

TaskSnapshotPage AuditStore::list_tasks(const TaskFilter& filter, const std::optional<std::string>& cursor,
                                        std::size_t page_size) const {
  if (page_size == 0) throw AuditError(400, "page size must be positive");
  std::shared_lock lock(mu_);
  auto it = order_.begin();
  if (cursor) it = order_.upper_bound(decode_cursor(*cursor));
  TaskSnapshotPage page;
  for (; it != order_.end(); ++it) {
    const AuditTask& t = tasks_.at(it->second);
    if (filter.status && t.status != *filter.status) continue;
    if (filter.bucket && t.bucket != *filter.bucket) continue;
    if (page.items.size() == page_size) {
      const auto& last = page.items.back();
      page.next_cursor = encode_cursor(static_cast<int>(last.bucket), last.record.id);
      break;
    }
    page.items.push_back(t);
  }
  return page;
}

AuditTask AuditStore::get_task(const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = tasks_.find(id);
  if (it == tasks_.end()) throw AuditError(404, "unknown record '" + id + "'");
  return it->second;
}

ExportCounts AuditStore::export_approved(const std::string& destination) const {
  std::vector<LayoutRecord> approved;
  ExportCounts counts;
  {
    std::shared_lock lock(mu_);
    for (const auto& [_, id] : order_) {
      const auto& t = tasks_.at(id);
      if (t.status != TaskStatus::Approved) continue;
      approved.push_back(t.record);
      switch (t.bucket) {
        case Split::Simple: ++counts.simple; break;
        case Split::Regular: ++counts.regular; break;
        case Split::Complex: ++counts.complex; break;
      }
    }
  }
  const std::string tmp = destination + ".partial";
  try {
    {
      std::ofstream out(tmp, std::ios::trunc);
      if (!out) throw IoError("cannot open " + tmp);
      write_dataset(out, approved);
      out.flush();
      if (!out) throw IoError("write failed for " + tmp);
    }
    std::filesystem::rename(tmp, destination);
  } catch (const std::exception& e) {
    std::error_code ec;
    std::filesystem::remove(tmp, ec);
    throw AuditError(500, std::string("export failed: ") + e.what());
  }
  return counts;
}

std::size_t AuditStore::size() const {
  std::shared_lock lock(mu_);
  return tasks_.size();
}

std::vector<VerdictEvent> AuditStore::events() const {
  std::shared_lock lock(mu_);
  return events_;
}

std::map<std::string, TaskStatus> AuditStore::statuses() const {
  std::shared_lock lock(mu_);
  std::map<std::string, TaskStatus> out;
  for (const auto& [id, t] : tasks_) out[id] = t.status;
  return out;
}

std::map<std::string, TaskStatus> AuditStore::replay(const std::vector<AuditTask>& tasks,
                                                     const std::vector<VerdictEvent>& events,
                                                     const std::vector<std::string>& checks) {
  std::map<std::string, std::map<std::string, bool>> latest;
  for (const auto& t : tasks) latest[t.record.id];
  for (const auto& e : events) latest.at(e.record_id)[e.check] = e.verdict;
  std::map<std::string, TaskStatus> out;
  for (const auto& [id, v] : latest) out[id] = derive_status(v, checks);
  return out;
}

std::vector<AuditTask> build_tasks(const std::vector<LayoutRecord>& records, const std::vector<ScoredEntry>& scored,
                                   const std::string& image_template, std::vector<std::string>* missing) {
  std::map<std::string, const ScoredEntry*> by_id;
  for (const auto& s : scored) by_id[s.layout.id] = &s;
  std::vector<AuditTask> out;
  for (const auto& r : records) {
    auto it = by_id.find(r.id);
    if (it == by_id.end()) {
      if (missing) missing->push_back(r.id);
      continue;
    }
    AuditTask t{r, it->second->layout.score, it->second->bucket, {}, TaskStatus::Pending, {}};
    t.record.split = t.bucket;
    if (r.image) {
      t.image = *r.image;
    } else {
      t.image = image_template;
      for (auto pos = t.image.find("{id}"); pos != std::string::npos; pos = t.image.find("{id}", pos + r.id.size())) {
        t.image.replace(pos, 4, r.id);
      }
    }
    out.push_back(std::move(t));
  }
  return out;
}

namespace {

json summary_obj(const AuditTask& t) {
  json v = json::object();
  for (const auto& [check, yes] : t.verdicts) v[check] = yes ? "yes" : "no";
  return {{"id", t.record.id},
          {"score", t.score},
          {"bucket", std::string(to_string(t.bucket))},
          {"status", std::string(to_string(t.status))},
          {"caption", t.record.global_caption},
          {"instance_count", t.record.instances.size()},
          {"verdicts", v}};
}

}  // namespace

std::string task_summary_json(const AuditTask& t) { return summary_obj(t).dump(); }

std::string task_json(const AuditTask& t) {
  json obj = summary_obj(t);
  obj["image"] = t.image;
  obj["record"] = json::parse(serialize_record(t.record));
  return obj.dump();
}

}  // namespace l2i
