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

// Eigen first; httplib pulls in <resolv.h>.
#include "l2i/embedding.hpp"

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <random>
#include <sstream>
#include <thread>

#include "oracles.hpp"

using l2i::EmbeddingVector;

namespace {

EmbeddingVector vec(std::initializer_list<float> xs) {
  Eigen::VectorXf v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (float x : xs) v[i++] = x;
  return EmbeddingVector::from_raw(v);
}

/// Serves POST /embed with deterministic vectors derived from text length.
class StubService {
 public:
  explicit StubService(int fail_first = 0, int status = 503) : fail_left_(fail_first), status_(status) {
    server_.Post("/embed", [this](const httplib::Request& req, httplib::Response& res) {
      ++calls_;
      if (fail_left_ > 0) {
        --fail_left_;
        res.status = status_;
        return;
      }
      const auto body = nlohmann::json::parse(req.body);
      nlohmann::json embs = nlohmann::json::array();
      for (const auto& t : body["texts"]) {
        const auto n = static_cast<float>(t.get<std::string>().size());
        embs.push_back({n, 1.0f, 2.0f, 0.0f});
      }
      res.set_content(nlohmann::json{{"embeddings", embs}, {"dim", 4}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubService() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int calls() const { return calls_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> calls_{0};
  std::atomic<int> fail_left_;
  int status_;
};

}  // namespace

TEST_CASE("from_raw normalizes and rejects zero") {
  const auto v = vec({3, 4});
  CHECK(v.values.norm() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(v.norm == doctest::Approx(5.0));
  CHECK_THROWS_AS(vec({0, 0}), l2i::EmbeddingError);
}

TEST_CASE("cosine examples") {
  CHECK(l2i::cosine(vec({1, 0}), vec({1, 0})) == doctest::Approx(1.0));
  CHECK(l2i::cosine(vec({1, 0}), vec({0, 1})) == doctest::Approx(0.0));
  CHECK(l2i::cosine(vec({1, 0}), vec({-1, 0})) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(l2i::cosine(vec({1, 0}), vec({1, 0, 0})), l2i::EmbeddingError);
}

TEST_CASE("cosine matches an independent oracle") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 200; ++t) {
    const auto a = oracle::random_unit(rng, 64), b = oracle::random_unit(rng, 64);
    Eigen::VectorXf fa(64), fb(64);
    std::vector<double> da(64), db(64);
    for (int k = 0; k < 64; ++k) {
      fa[k] = static_cast<float>(a[k]);
      fb[k] = static_cast<float>(b[k]);
      da[k] = fa[k];
      db[k] = fb[k];
    }
    const double c = l2i::cosine(EmbeddingVector::from_raw(fa), EmbeddingVector::from_raw(fb));
    CHECK(std::abs(c - oracle::dot_cos(da, db)) < 1e-9);
    CHECK(c == doctest::Approx(l2i::cosine(EmbeddingVector::from_raw(fb), EmbeddingVector::from_raw(fa))));
  }
}

TEST_CASE("clip score") {
  CHECK(l2i::clip_score(vec({1, 0}), vec({1, 0})) == doctest::Approx(100.0));
  CHECK(l2i::clip_score(vec({1, 0}), vec({-1, 0})) == 0.0);
  CHECK(l2i::clip_score(vec({1, 0}), vec({-1, 0}), {100.0, false}) == doctest::Approx(-100.0));
  CHECK(l2i::clip_score(vec({1, 0}), vec({1, 1}), {2.5, true}) == doctest::Approx(2.5 / std::sqrt(2.0)));
}

TEST_CASE("hex encoding round trip") {
  Eigen::VectorXf v(3);
  v << 1.0f, -0.5f, 3.25e-7f;
  CHECK(l2i::encode_hex_f32(v).size() == 24);
  CHECK(l2i::decode_hex_f32(l2i::encode_hex_f32(v)) == v);
  CHECK(l2i::encode_hex_f32(Eigen::VectorXf::Constant(1, 1.0f)) == "0000803f");
  CHECK_THROWS_AS(l2i::decode_hex_f32("zz00803f"), l2i::EmbeddingError);
  CHECK_THROWS_AS(l2i::decode_hex_f32("0000803"), l2i::EmbeddingError);
}

TEST_CASE("store round trip and key normalization") {
  l2i::EmbeddingStore store("test-model", 4);
  std::mt19937_64 rng(9);
  for (int k = 0; k < 20; ++k) {
    const auto u = oracle::random_unit(rng, 4);
    Eigen::VectorXf f(4);
    for (int i = 0; i < 4; ++i) f[i] = static_cast<float>(u[i]);
    store.insert("caption " + std::to_string(k), EmbeddingVector::from_raw(f));
  }
  // Precomposed and decomposed e-acute share one entry.
  store.insert("caf\xC3\xA9", vec({1, 0, 0, 0}));
  CHECK(store.contains("cafe\xCC\x81"));

  std::stringstream buf;
  l2i::save_store(buf, store);
  const auto back = l2i::load_store(buf);
  CHECK(back.model() == "test-model");
  CHECK(back.dim() == 4);
  REQUIRE(back.keys() == store.keys());
  for (const auto& key : store.keys()) CHECK(back.at(key).values == store.at(key).values);

  CHECK_THROWS_AS(store.insert("bad", vec({1, 0})), l2i::EmbeddingError);
  CHECK_THROWS_AS(store.at("missing"), l2i::EmbeddingError);
}

TEST_CASE("store loader reports dimension mismatch with the key") {
  std::istringstream in(R"({"model":"m","dim":2})"
                        "\n"
                        R"({"key":"a cat","hex":"0000803f0000803f0000803f"})"
                        "\n");
  try {
    l2i::load_store(in);
    FAIL("expected rejection");
  } catch (const l2i::EmbeddingError& e) {
    CHECK(std::string(e.what()).find("'a cat'") != std::string::npos);
  }
}

TEST_CASE("missing key without a service") {
  l2i::EmbeddingStore store("m", 4);
  try {
    l2i::get_embedding(store, "a dog");
    FAIL("expected rejection");
  } catch (const l2i::EmbeddingError& e) {
    CHECK(std::string(e.what()) == "embedding unavailable: a dog");
  }
}

TEST_CASE("fallback service fills and caches the store") {
  StubService svc;
  l2i::HttpEmbeddingClient client({svc.url(), std::chrono::milliseconds(2000), 0});
  l2i::EmbeddingStore store("m", 4);
  const auto v = l2i::get_embedding(store, "abc", &client);
  CHECK(v.dim() == 4);
  CHECK(store.contains("abc"));
  l2i::get_embedding(store, "abc", &client);
  CHECK(svc.calls() == 1);
  // (3, 1, 2, 0) normalized
  CHECK(v.values[0] == doctest::Approx(3.0 / std::sqrt(14.0)).epsilon(1e-6));
}

TEST_CASE("client retries server errors") {
  StubService svc(2, 503);
  l2i::HttpEmbeddingClient client({svc.url(), std::chrono::milliseconds(2000), 2});
  const std::vector<std::string> texts{"x", "yy"};
  const auto out = client.embed(texts);
  CHECK(out.size() == 2);
  CHECK(svc.calls() == 3);
}

TEST_CASE("client reports non-success status") {
  StubService svc(100, 404);
  l2i::HttpEmbeddingClient client({svc.url(), std::chrono::milliseconds(2000), 3});
  const std::vector<std::string> texts{"x"};
  try {
    client.embed(texts);
    FAIL("expected failure");
  } catch (const l2i::EmbeddingError& e) {
    CHECK(std::string(e.what()).find("404") != std::string::npos);
  }
  CHECK(svc.calls() == 1);  // client errors are not retried
}

TEST_CASE("client reports an unreachable service") {
  // Grab a free port, then release it.
  int port = 0;
  {
    httplib::Server s;
    port = s.bind_to_any_port("127.0.0.1");
  }
  l2i::HttpEmbeddingClient client({"http://127.0.0.1:" + std::to_string(port), std::chrono::milliseconds(300), 0});
  const std::vector<std::string> texts{"x"};
  CHECK_THROWS_AS(client.embed(texts), l2i::EmbeddingError);
}

TEST_CASE("concurrent readers and writers") {
  l2i::EmbeddingStore store("m", 4);
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&store, t] {
      for (int k = 0; k < 200; ++k) {
        store.insert("k" + std::to_string(t) + "_" + std::to_string(k), vec({1, 2, 3, 4}));
        EmbeddingVector out;
        store.try_get("k0_0", out);
      }
    });
  }
  for (auto& th : threads) th.join();
  CHECK(store.size() == 800);
}
