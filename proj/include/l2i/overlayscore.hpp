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

#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "l2i/annotations.hpp"
#include "l2i/embedding.hpp"

namespace l2i {

struct PairTerm {
  std::string i;
  std::string j;
  double iou;
  double cos;
  double product;
};

struct ScoredLayout {
  std::string id;
  double score = 0.0;
  std::vector<PairTerm> pair_terms;
};

/// Resolves an instance caption to its embedding.
using CaptionEmbedder = std::function<EmbeddingVector(const std::string& caption)>;

/// Embedder backed by a store with an optional service fallback.
CaptionEmbedder store_embedder(EmbeddingStore& store, EmbeddingService* fallback = nullptr);

struct ScoreOptions {
  /// Clamp negative cosines at 0; off by default since the layout score
  /// itself carries no clamp.
  bool clamp_negative_cosine = false;
};

/// Layout difficulty: sum over unordered instance pairs with IoU > 0 of
/// IoU(B_i, B_j) * cos(p_i, p_j). Pair terms follow instance order.
ScoredLayout overlay_score(const LayoutRecord& r, const CaptionEmbedder& embed, const ScoreOptions& opts = {});

struct DifficultyThresholds {
  double simple_regular = 0.1;
  double regular_complex = 0.5;

  void validate() const;
};

/// Closed above on the lower bucket: score <= t_sr is Simple,
/// t_sr < score <= t_rc is Regular, anything larger is Complex.
Split bucket(double score, const DifficultyThresholds& t);

struct ScoreSummary {
  double mean;
  double median;
  double max;
};

struct ScoreDistribution {
  /// Bin lower edge -> count. Bin k covers [k*w, (k+1)*w).
  std::map<double, std::size_t> histogram;
  std::optional<ScoreSummary> summary;
};

ScoreDistribution score_distribution(const std::vector<ScoredLayout>& scored, double bin_width);

/// Scored output: one {"id","score","bucket","pair_terms"} object per line.
std::string serialize_scored(const ScoredLayout& s, Split b);
struct ScoredEntry {
  ScoredLayout layout;
  Split bucket;
};
std::vector<ScoredEntry> parse_scored(std::istream& in);

}  // namespace l2i
