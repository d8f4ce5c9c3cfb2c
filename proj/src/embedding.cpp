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

#include "l2i/embedding.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <mutex>

#include <httplib.h>
#include <unicode/normalizer2.h>
#include <unicode/unistr.h>

#include "jsonl.hpp"

namespace l2i {

using detail::json;

EmbeddingVector EmbeddingVector::from_raw(Eigen::VectorXf raw) {
  if (raw.size() == 0) throw EmbeddingError("empty embedding");
  if (!raw.allFinite()) throw EmbeddingError("non-finite embedding component");
  const double n = raw.cast<double>().norm();
  if (n == 0.0) throw EmbeddingError("zero-norm embedding");
  EmbeddingVector v;
  v.norm = n;
  if (std::abs(n - 1.0) <= 1e-6) {
    v.values = std::move(raw);
  } else {
    v.values = (raw.cast<double>() / n).cast<float>();
  }
  return v;
}

std::string canonical_key(std::string_view key) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) return std::string(key);
  icu::UnicodeString src = icu::UnicodeString::fromUTF8(icu::StringPiece(key.data(), static_cast<int32_t>(key.size())));
  if (src.isBogus()) return std::string(key);
  if (nfc->isNormalized(src, status) && U_SUCCESS(status)) return std::string(key);
  status = U_ZERO_ERROR;
  icu::UnicodeString dst = nfc->normalize(src, status);
  if (U_FAILURE(status)) return std::string(key);
  std::string out;
  dst.toUTF8String(out);
  return out;
}

EmbeddingStore::EmbeddingStore(std::string model, Eigen::Index dim) : model_(std::move(model)), dim_(dim) {
  if (dim < 1) throw EmbeddingError("embedding dimension must be positive");
}

EmbeddingStore::EmbeddingStore(const EmbeddingStore& other) {
  std::shared_lock lock(other.mu_);
  model_ = other.model_;
  dim_ = other.dim_;
  table_ = other.table_;
}

EmbeddingStore& EmbeddingStore::operator=(const EmbeddingStore& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mu_);
  std::shared_lock other_lock(other.mu_);
  model_ = other.model_;
  dim_ = other.dim_;
  table_ = other.table_;
  return *this;
}

std::size_t EmbeddingStore::size() const {
  std::shared_lock lock(mu_);
  return table_.size();
}

bool EmbeddingStore::contains(std::string_view key) const {
  const std::string k = canonical_key(key);
  std::shared_lock lock(mu_);
  return table_.find(k) != table_.end();
}

bool EmbeddingStore::try_get(std::string_view key, EmbeddingVector& out) const {
  const std::string k = canonical_key(key);
  std::shared_lock lock(mu_);
  auto it = table_.find(k);
  if (it == table_.end()) return false;
  out = it->second;
  return true;
}

EmbeddingVector EmbeddingStore::at(std::string_view key) const {
  EmbeddingVector v;
  if (!try_get(key, v)) throw EmbeddingError("embedding unavailable: " + std::string(key));
  return v;
}

void EmbeddingStore::insert(std::string_view key, EmbeddingVector v) {
  if (key.empty()) throw EmbeddingError("empty embedding key");
  if (v.dim() != dim_) {
    throw EmbeddingError("dimension mismatch for key '" + std::string(key) + "': got " + std::to_string(v.dim()) +
                         ", store has " + std::to_string(dim_));
  }
  std::string k = canonical_key(key);
  std::scoped_lock lock(mu_);
  table_.insert_or_assign(std::move(k), std::move(v));
}

std::vector<std::string> EmbeddingStore::keys() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> out;
  out.reserve(table_.size());
  for (const auto& [k, _] : table_) out.push_back(k);
  return out;
}

std::string encode_hex_f32(const Eigen::VectorXf& v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(static_cast<std::size_t>(v.size()) * 8);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(v[i]);
    for (int byte = 0; byte < 4; ++byte) {
      const auto b = static_cast<unsigned>((bits >> (8 * byte)) & 0xffu);
      out.push_back(kDigits[b >> 4]);
      out.push_back(kDigits[b & 0xf]);
    }
  }
  return out;
}

Eigen::VectorXf decode_hex_f32(std::string_view hex) {
  if (hex.size() % 8 != 0) throw EmbeddingError("hex payload length is not a multiple of 8");
  auto nibble = [](char c) -> unsigned {
    if (c >= '0' && c <= '9') return static_cast<unsigned>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<unsigned>(c - 'a' + 10);
    if (c >= 'A' && c <= 'F') return static_cast<unsigned>(c - 'A' + 10);
    throw EmbeddingError(std::string("invalid hex digit '") + c + "'");
  };
  Eigen::VectorXf v(static_cast<Eigen::Index>(hex.size() / 8));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    std::uint32_t bits = 0;
    for (int byte = 0; byte < 4; ++byte) {
      const std::size_t pos = static_cast<std::size_t>(i) * 8 + static_cast<std::size_t>(byte) * 2;
      const unsigned b = (nibble(hex[pos]) << 4) | nibble(hex[pos + 1]);
      bits |= static_cast<std::uint32_t>(b) << (8 * byte);
    }
    v[i] = std::bit_cast<float>(bits);
  }
  return v;
}

EmbeddingStore load_store(std::istream& in) {
  std::optional<EmbeddingStore> store;
  detail::for_each_record(
      in,
      [&](std::size_t line, const json& obj) {
        const std::string where = "embedding store line " + std::to_string(line);
        if (!store) {
          if (!obj.contains("model") || !obj.contains("dim") || !obj["dim"].is_number_integer()) {
            throw EmbeddingError(where + ": expected header {\"model\", \"dim\"}");
          }
          store.emplace(obj["model"].get<std::string>(), obj["dim"].get<Eigen::Index>());
          return;
        }
        if (!obj.contains("key") || !obj["key"].is_string() || !obj.contains("hex") || !obj["hex"].is_string()) {
          throw EmbeddingError(where + ": expected {\"key\", \"hex\"}");
        }
        const std::string key = obj["key"].get<std::string>();
        if (store->contains(key)) throw EmbeddingError("duplicate embedding key: " + key);
        Eigen::VectorXf raw = decode_hex_f32(obj["hex"].get<std::string>());
        if (raw.size() != store->dim()) {
          throw EmbeddingError("dimension mismatch for key '" + key + "': got " + std::to_string(raw.size()) +
                               ", header says " + std::to_string(store->dim()));
        }
        try {
          store->insert(key, EmbeddingVector::from_raw(std::move(raw)));
        } catch (const EmbeddingError& e) {
          throw EmbeddingError(std::string(e.what()) + " (key '" + key + "')");
        }
      },
      [](std::size_t line, const std::string& what) {
        throw EmbeddingError("embedding store line " + std::to_string(line) + ": " + what);
      });
  if (!store) throw EmbeddingError("embedding store has no header");
  return std::move(*store);
}

EmbeddingStore load_store_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw EmbeddingError("cannot open embedding store: " + path);
  return load_store(in);
}

void save_store(std::ostream& out, const EmbeddingStore& store) {
  out << json{{"model", store.model()}, {"dim", store.dim()}}.dump() << '\n';
  for (const auto& key : store.keys()) {
    out << json{{"key", key}, {"hex", encode_hex_f32(store.at(key).values)}}.dump() << '\n';
  }
}

HttpEmbeddingClient::HttpEmbeddingClient(HttpServiceOptions opts) : opts_(std::move(opts)) {
  if (opts_.retries < 0) throw EmbeddingError("retry count must be non-negative");
}

std::vector<EmbeddingVector> HttpEmbeddingClient::embed(std::span<const std::string> texts) {
  // Split "scheme://host:port/prefix" into the client origin and a path prefix.
  std::string origin = opts_.url;
  std::string prefix;
  if (auto scheme = origin.find("://"); scheme != std::string::npos) {
    if (auto slash = origin.find('/', scheme + 3); slash != std::string::npos) {
      prefix = origin.substr(slash);
      origin.resize(slash);
    }
  }
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

  httplib::Client client(origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(opts_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(opts_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  const std::string body = json{{"texts", std::vector<std::string>(texts.begin(), texts.end())}}.dump();
  std::string last_error;
  for (int attempt = 0; attempt <= opts_.retries; ++attempt) {
    auto res = client.Post(prefix + "/embed", body, "application/json");
    if (!res) {
      last_error = "embedding service request failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      last_error = "embedding service returned status " + std::to_string(res->status);
      if (res->status < 500) break;
      continue;
    }
    json reply = json::parse(res->body, nullptr, false);
    if (reply.is_discarded() || !reply.contains("embeddings") || !reply["embeddings"].is_array()) {
      throw EmbeddingError("embedding service reply is malformed");
    }
    const auto& embs = reply["embeddings"];
    if (embs.size() != texts.size()) {
      throw EmbeddingError("embedding service returned " + std::to_string(embs.size()) + " vectors for " +
                           std::to_string(texts.size()) + " texts");
    }
    const long dim = reply.value("dim", -1L);
    std::vector<EmbeddingVector> out;
    out.reserve(embs.size());
    for (std::size_t i = 0; i < embs.size(); ++i) {
      const auto values = embs[i].get<std::vector<float>>();
      if (dim >= 0 && static_cast<long>(values.size()) != dim) {
        throw EmbeddingError("embedding service vector for '" + texts[i] + "' has wrong dimension");
      }
      Eigen::VectorXf raw = Eigen::Map<const Eigen::VectorXf>(values.data(), static_cast<Eigen::Index>(values.size()));
      out.push_back(EmbeddingVector::from_raw(std::move(raw)));
    }
    return out;
  }
  throw EmbeddingError(last_error);
}

EmbeddingVector get_embedding(EmbeddingStore& store, std::string_view key, EmbeddingService* fallback) {
  if (key.empty()) throw EmbeddingError("empty embedding key");
  EmbeddingVector v;
  if (store.try_get(key, v)) return v;
  if (!fallback) throw EmbeddingError("embedding unavailable: " + std::string(key));
  std::vector<EmbeddingVector> fetched;
  const std::string k(key);
  try {
    fetched = fallback->embed(std::span<const std::string>(&k, 1));
  } catch (const std::exception& e) {
    throw EmbeddingError(std::string(e.what()) + " (key '" + k + "')");
  }
  if (fetched.size() != 1) throw EmbeddingError("embedding service returned no vector for: " + k);
  store.insert(key, fetched.front());
  return store.at(key);
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw EmbeddingError("cosine of mismatched dimensions " + std::to_string(a.dim()) + " and " +
                         std::to_string(b.dim()));
  }
  // Renormalize in double so float32 storage rounding does not leak into the result.
  const Eigen::VectorXd da = a.values.cast<double>();
  const Eigen::VectorXd db = b.values.cast<double>();
  return std::clamp(da.dot(db) / (da.norm() * db.norm()), -1.0, 1.0);
}

double clip_score(const EmbeddingVector& image, const EmbeddingVector& text, const ClipScoreOptions& opts) {
  const double c = cosine(image, text);
  return opts.scale * (opts.clamp_negative ? std::max(c, 0.0) : c);
}

}  // namespace l2i
