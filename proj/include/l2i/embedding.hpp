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

#include <chrono>
#include <iosfwd>
#include <map>
#include <shared_mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace l2i {

class EmbeddingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unit-norm float32 embedding. `norm` keeps the Euclidean norm of the raw
/// vector as it was loaded, before normalization.
struct EmbeddingVector {
  Eigen::VectorXf values;
  double norm = 1.0;

  /// Normalizes `raw`. Vectors already unit-norm to within 1e-6 are kept
  /// bit-for-bit so that stores round-trip exactly.
  static EmbeddingVector from_raw(Eigen::VectorXf raw);

  Eigen::Index dim() const { return values.size(); }
};

/// Canonical (NFC) form of a text key. Invalid UTF-8 is returned unchanged.
std::string canonical_key(std::string_view key);

/// Content-keyed embedding table. Reads are concurrent; inserts take an
/// exclusive lock per call.
class EmbeddingStore {
 public:
  EmbeddingStore(std::string model = "ViT-B/32", Eigen::Index dim = 512);

  EmbeddingStore(const EmbeddingStore& other);
  EmbeddingStore& operator=(const EmbeddingStore& other);

  const std::string& model() const { return model_; }
  Eigen::Index dim() const { return dim_; }
  std::size_t size() const;
  bool contains(std::string_view key) const;

  /// Returns a copy, or throws EmbeddingError when absent.
  EmbeddingVector at(std::string_view key) const;
  bool try_get(std::string_view key, EmbeddingVector& out) const;

  /// Rejects dimension mismatches. Existing keys are overwritten.
  void insert(std::string_view key, EmbeddingVector v);

  std::vector<std::string> keys() const;

 private:
  std::string model_;
  Eigen::Index dim_;
  mutable std::shared_mutex mu_;
  std::map<std::string, EmbeddingVector, std::less<>> table_;
};

/// Store file: a header object {"model", "dim"} on the first record line,
/// then {"key", "hex"} lines where hex is the little-endian float32 payload.
EmbeddingStore load_store(std::istream& in);
EmbeddingStore load_store_file(const std::string& path);
void save_store(std::ostream& out, const EmbeddingStore& store);

std::string encode_hex_f32(const Eigen::VectorXf& v);
Eigen::VectorXf decode_hex_f32(std::string_view hex);

/// Source of embeddings for keys missing from a store.
class EmbeddingService {
 public:
  virtual ~EmbeddingService() = default;
  virtual std::vector<EmbeddingVector> embed(std::span<const std::string> texts) = 0;
};

struct HttpServiceOptions {
  std::string url = "http://127.0.0.1:8080";
  std::chrono::milliseconds timeout{5000};
  int retries = 2;
};

/// Client for `POST /embed` with body {"texts": [...]}.
class HttpEmbeddingClient : public EmbeddingService {
 public:
  explicit HttpEmbeddingClient(HttpServiceOptions opts);
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override;

 private:
  HttpServiceOptions opts_;
};

/// Store lookup with optional fallback: a miss queries `fallback` and caches
/// the result in `store` before returning it.
EmbeddingVector get_embedding(EmbeddingStore& store, std::string_view key, EmbeddingService* fallback = nullptr);

double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

struct ClipScoreOptions {
  double scale = 100.0;
  bool clamp_negative = true;
};

double clip_score(const EmbeddingVector& image, const EmbeddingVector& text, const ClipScoreOptions& opts = {});

}  // namespace l2i
