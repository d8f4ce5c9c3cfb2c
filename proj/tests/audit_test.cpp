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
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

// Eigen (via l2i headers) before httplib; <resolv.h> defines `_res`.
#include "l2i/audit.hpp"

#include <httplib.h>
#include <json.hpp>

#include <random>
#include <sstream>
#include <thread>

#include "test_util.hpp"

using l2i::AuditStore;
using l2i::TaskStatus;
using nlohmann::json;

namespace {

std::vector<l2i::AuditTask> make_tasks(std::size_t n) {
  std::vector<l2i::AuditTask> out;
  std::vector<l2i::LayoutRecord> records;
  std::vector<l2i::ScoredEntry> scored;
  for (std::size_t k = 0; k < n; ++k) {
    char id[16];
    std::snprintf(id, sizeof id, "rec%03zu", k);
    records.push_back(testutil::make_record(id, {{0.1, 0.1, 0.5, 0.5}, {0.3, 0.3, 0.7, 0.7}}));
    const double score = 0.05 + 0.1 * static_cast<double>(k % 8);
    scored.push_back({{id, score, {}}, l2i::bucket(score, {})});
  }
  return l2i::build_tasks(records, scored, "images/{id}.png");
}

AuditStore::Options opts(const std::string& log) {
  AuditStore::Options o;
  o.log_path = log;
  o.clock = [] { return std::int64_t{1700000000000}; };
  return o;
}

void approve(AuditStore& s, const std::string& id) {
  for (const auto& c : l2i::default_checks()) s.post_verdict({id, c, true, "ann", ""});
}

int status_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const l2i::AuditError& e) {
    return e.status();
  }
  return 0;
}

/// Live server on an ephemeral port.
struct LiveServer {
  LiveServer(AuditStore& store, l2i::AuditServerOptions o) : server(store, [&] {
    o.port = 0;
    return o;
  }()) {
    port = server.bind();
    thread = std::thread([this] { server.listen(); });
    httplib::Client probe("127.0.0.1", port);
    for (int k = 0; k < 100 && !probe.Get("/tasks?limit=1"); ++k) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  ~LiveServer() {
    server.stop();
    thread.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port); }

  l2i::AuditServer server;
  int port = 0;
  std::thread thread;
};

}  // namespace

TEST_CASE("status derivation") {
  const auto& checks = l2i::default_checks();
  CHECK(l2i::derive_status({}, checks) == TaskStatus::Pending);
  CHECK(l2i::derive_status({{"bbox_accuracy", true}}, checks) == TaskStatus::Pending);
  CHECK(l2i::derive_status({{"bbox_accuracy", true}, {"caption_alignment", false}}, checks) == TaskStatus::Rejected);
  CHECK(l2i::derive_status(
            {{"bbox_accuracy", true}, {"caption_alignment", true}, {"relationship_validity", true}}, checks) ==
        TaskStatus::Approved);
}

TEST_CASE("build tasks") {
  std::vector<std::string> missing;
  auto r1 = testutil::make_record("a", {{0, 0, 0.5, 0.5}, {0.2, 0.2, 0.8, 0.8}});
  auto r2 = testutil::make_record("b", {{0, 0, 0.5, 0.5}, {0.2, 0.2, 0.8, 0.8}});
  r2.image = "custom.png";
  auto r3 = testutil::make_record("c", {{0, 0, 0.5, 0.5}, {0.2, 0.2, 0.8, 0.8}});
  const std::vector<l2i::ScoredEntry> scored{{{"a", 0.2, {}}, l2i::Split::Regular}, {{"b", 0.9, {}}, l2i::Split::Complex}};
  const auto tasks = l2i::build_tasks({r1, r2, r3}, scored, "img/{id}/{id}.jpg", &missing);
  REQUIRE(tasks.size() == 2);
  CHECK(tasks[0].image == "img/a/a.jpg");
  CHECK(tasks[1].image == "custom.png");
  CHECK(tasks[0].record.split == l2i::Split::Regular);
  CHECK(missing == std::vector<std::string>{"c"});
}

TEST_CASE("verdicts, duplicates and errors") {
  testutil::TempDir dir("audit");
  AuditStore s(make_tasks(5), opts(dir.file("log.jsonl")));
  const auto first = s.post_verdict({"rec000", "bbox_accuracy", true, "ann", "k1"});
  CHECK_FALSE(first.duplicate);
  CHECK(first.status == TaskStatus::Pending);
  const auto again = s.post_verdict({"rec000", "bbox_accuracy", false, "ann", "k1"});
  CHECK(again.duplicate);
  CHECK(again.event.seq == first.event.seq);
  CHECK(again.event.verdict == true);
  CHECK(s.events().size() == 1);

  // Same key from another auditor is a distinct event.
  CHECK_FALSE(s.post_verdict({"rec000", "bbox_accuracy", true, "other", "k1"}).duplicate);

  CHECK(status_of([&] { s.post_verdict({"nope", "bbox_accuracy", true, "", ""}); }) == 404);
  CHECK(status_of([&] { s.post_verdict({"rec000", "made_up", true, "", ""}); }) == 400);
  CHECK(status_of([&] { s.get_task("nope"); }) == 404);

  approve(s, "rec001");
  CHECK(s.get_task("rec001").status == TaskStatus::Approved);
  s.post_verdict({"rec001", "caption_alignment", false, "ann", ""});
  CHECK(s.get_task("rec001").status == TaskStatus::Rejected);
}

TEST_CASE("log replay restores state") {
  testutil::TempDir dir("replay");
  const auto log = dir.file("log.jsonl");
  std::map<std::string, TaskStatus> before;
  {
    AuditStore s(make_tasks(10), opts(log));
    approve(s, "rec002");
    s.post_verdict({"rec003", "bbox_accuracy", false, "ann", "x"});
    s.post_verdict({"rec004", "bbox_accuracy", true, "ann", "y"});
    before = s.statuses();
  }
  AuditStore reopened(make_tasks(10), opts(log));
  CHECK(reopened.statuses() == before);
  // Dedup survives a restart.
  CHECK(reopened.post_verdict({"rec003", "bbox_accuracy", true, "ann", "x"}).duplicate);
  CHECK(reopened.events().size() == 5);
  CHECK(reopened.post_verdict({"rec005", "bbox_accuracy", true, "ann", ""}).event.seq == 6);
}

TEST_CASE("torn final line is tolerated") {
  testutil::TempDir dir("torn");
  const auto log = dir.file("log.jsonl");
  {
    AuditStore s(make_tasks(3), opts(log));
    approve(s, "rec000");
  }
  {
    std::ofstream out(log, std::ios::app);
    out << R"({"seq":4,"record_id":"rec0)";
  }
  AuditStore s(make_tasks(3), opts(log));
  CHECK(s.events().size() == 3);
  CHECK(s.get_task("rec000").status == TaskStatus::Approved);
}

TEST_CASE("corrupt middle line is an error") {
  testutil::TempDir dir("corrupt");
  const auto log = dir.file("log.jsonl");
  testutil::write_text(log, "garbage\n" + l2i::serialize_event({1, "rec000", "bbox_accuracy", true, "", "", 0}) + "\n");
  CHECK(status_of([&] { AuditStore s(make_tasks(3), opts(log)); }) == 500);
}

TEST_CASE("keyset pagination") {
  AuditStore s(make_tasks(23), opts(""));
  std::vector<std::string> seen;
  std::optional<std::string> cursor;
  do {
    const auto page = s.list_tasks({}, cursor, 5);
    CHECK(page.items.size() <= 5);
    for (const auto& t : page.items) seen.push_back(t.record.id);
    cursor = page.next_cursor;
  } while (cursor);
  CHECK(seen.size() == 23);
  CHECK(std::set<std::string>(seen.begin(), seen.end()).size() == 23);
  // Ordered by bucket, then id.
  for (std::size_t k = 1; k < seen.size(); ++k) {
    const auto a = s.get_task(seen[k - 1]), b = s.get_task(seen[k]);
    CHECK(std::make_pair(static_cast<int>(a.bucket), a.record.id) < std::make_pair(static_cast<int>(b.bucket), b.record.id));
  }

  // Writes between pages do not disturb the walk.
  const auto p1 = s.list_tasks({TaskStatus::Pending, std::nullopt}, std::nullopt, 4);
  approve(s, p1.items.front().record.id);
  const auto p2 = s.list_tasks({TaskStatus::Pending, std::nullopt}, p1.next_cursor, 100);
  for (const auto& t : p2.items) {
    for (const auto& u : p1.items) CHECK(t.record.id != u.record.id);
  }
  CHECK(p1.items.size() + p2.items.size() == 23);

  const auto simple = s.list_tasks({std::nullopt, l2i::Split::Simple}, std::nullopt, 100);
  for (const auto& t : simple.items) CHECK(t.bucket == l2i::Split::Simple);
  CHECK(status_of([&] { s.list_tasks({}, std::string("garbage"), 5); }) == 400);
  CHECK(status_of([&] { s.list_tasks({}, std::nullopt, 0); }) == 400);
}

TEST_CASE("export writes approved records atomically") {
  testutil::TempDir dir("export");
  AuditStore s(make_tasks(12), opts(""));
  approve(s, "rec000");
  approve(s, "rec005");
  approve(s, "rec007");
  s.post_verdict({"rec001", "bbox_accuracy", false, "", ""});
  const auto dest = dir.file("approved.jsonl");
  const auto counts = s.export_approved(dest);
  CHECK(counts.total() == 3);
  CHECK_FALSE(std::filesystem::exists(dest + ".partial"));
  const auto parsed = l2i::parse_dataset_file(dest);
  CHECK(parsed.diagnostics.empty());
  REQUIRE(parsed.records.size() == 3);
  for (const auto& r : parsed.records) {
    CHECK(r == s.get_task(r.id).record);
    REQUIRE(r.split);
  }
  CHECK(status_of([&] { s.export_approved(dir.file("missing_dir/out.jsonl")); }) == 500);
  CHECK_FALSE(std::filesystem::exists(dir.file("missing_dir/out.jsonl.partial")));
}

TEST_CASE("event serialization round trip") {
  const l2i::VerdictEvent e{42, "rec1", "caption_alignment", false, "alice", "key-7", 123456789};
  const auto back = l2i::parse_event(l2i::serialize_event(e));
  CHECK(back.seq == 42);
  CHECK(back.record_id == "rec1");
  CHECK(back.check == "caption_alignment");
  CHECK(back.verdict == false);
  CHECK(back.auditor == "alice");
  CHECK(back.idempotency_key == "key-7");
  CHECK(back.timestamp_ms == 123456789);
}

TEST_CASE("http endpoints") {
  testutil::TempDir dir("http");
  AuditStore store(make_tasks(8), opts(dir.file("log.jsonl")));
  l2i::AuditServerOptions o;
  o.default_export_path = dir.file("default.jsonl");
  o.default_page_size = 3;
  LiveServer live(store, o);
  auto cli = live.client();

  auto res = cli.Get("/tasks");
  REQUIRE(res);
  CHECK(res->status == 200);
  auto body = json::parse(res->body);
  CHECK(body["tasks"].size() == 3);
  REQUIRE(body["next_cursor"].is_string());
  res = cli.Get(("/tasks?limit=100&cursor=" + body["next_cursor"].get<std::string>()).c_str());
  CHECK(json::parse(res->body)["tasks"].size() == 5);

  res = cli.Get("/tasks/rec000");
  REQUIRE(res);
  CHECK(res->status == 200);
  body = json::parse(res->body);
  CHECK(body["image"] == "images/rec000.png");
  CHECK(body["record"]["instances"].size() == 2);
  CHECK(body["status"] == "pending");

  CHECK(cli.Get("/tasks/zzz")->status == 404);
  CHECK(cli.Get("/tasks?status=weird")->status == 400);
  CHECK(cli.Get("/tasks?cursor=bad")->status == 400);
  CHECK(cli.Get("/tasks?limit=0")->status == 400);

  json single{{"check", "bbox_accuracy"}, {"verdict", "yes"}, {"auditor", "a"}, {"idempotency_key", "k"}};
  res = cli.Post("/tasks/rec000/verdicts", single.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["duplicate"] == false);
  res = cli.Post("/tasks/rec000/verdicts", single.dump(), "application/json");
  CHECK(json::parse(res->body)["duplicate"] == true);

  json batch{{"verdicts",
              {{{"check", "caption_alignment"}, {"verdict", "yes"}}, {{"check", "relationship_validity"}, {"verdict", true}}}}};
  res = cli.Post("/tasks/rec000/verdicts", batch.dump(), "application/json");
  CHECK(json::parse(res->body)["status"] == "approved");

  // A batch with one bad entry stores nothing.
  const auto events_before = store.events().size();
  json bad_batch{{"verdicts", {{{"check", "bbox_accuracy"}, {"verdict", "no"}}, {{"check", "nope"}, {"verdict", "no"}}}}};
  CHECK(cli.Post("/tasks/rec001/verdicts", bad_batch.dump(), "application/json")->status == 400);
  CHECK(store.events().size() == events_before);

  CHECK(cli.Post("/tasks/zzz/verdicts", single.dump(), "application/json")->status == 404);
  CHECK(cli.Post("/tasks/rec001/verdicts", "{not json", "application/json")->status == 400);
  CHECK(cli.Post("/tasks/rec001/verdicts", R"({"check":"bbox_accuracy","verdict":"maybe"})", "application/json")->status ==
        400);

  res = cli.Get("/tasks?status=approved");
  body = json::parse(res->body);
  REQUIRE(body["tasks"].size() == 1);
  CHECK(body["tasks"][0]["id"] == "rec000");

  const auto dest = dir.file("exported.jsonl");
  res = cli.Post("/export", json{{"destination", dest}}.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["total"] == 1);
  CHECK(l2i::parse_dataset_file(dest).records.size() == 1);
  res = cli.Post("/export", "", "application/json");
  CHECK(res->status == 200);
  CHECK(std::filesystem::exists(o.default_export_path));
}

TEST_CASE("concurrent http verdicts are all logged once") {
  testutil::TempDir dir("conc");
  const auto log = dir.file("log.jsonl");
  AuditStore store(make_tasks(10), opts(log));
  LiveServer live(store, {});
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&live, t] {
      auto cli = live.client();
      for (int k = 0; k < 25; ++k) {
        // Every thread posts the same 25 keyed verdicts; only one copy of each should land.
        char id[16];
        std::snprintf(id, sizeof id, "rec%03d", k % 10);
        json v{{"check", l2i::default_checks()[static_cast<std::size_t>(k % 3)]},
               {"verdict", "yes"},
               {"auditor", "a"},
               {"idempotency_key", "key" + std::to_string(k)}};
        cli.Post((std::string("/tasks/") + id + "/verdicts").c_str(), v.dump(), "application/json");
        (void)t;
      }
    });
  }
  for (auto& th : threads) th.join();
  CHECK(store.events().size() == 25);
  CHECK(AuditStore::read_log(log).size() == 25);
}

TEST_CASE("bind failure is reported") {
  AuditStore store(make_tasks(1), opts(""));
  LiveServer first(store, {});
  l2i::AuditServerOptions o;
  o.port = first.port;
  l2i::AuditServer second(store, o);
  CHECK(status_of([&] { second.bind(); }) == 500);
}
