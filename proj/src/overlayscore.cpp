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

#include "l2i/overlayscore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "jsonl.hpp"

namespace l2i {

using detail::json;

CaptionEmbedder store_embedder(EmbeddingStore& store, EmbeddingService* fallback) {
  return [&store, fallback](const std::string& caption) { return get_embedding(store, caption, fallback); };
}

ScoredLayout overlay_score(const LayoutRecord& r, const CaptionEmbedder& embed, const ScoreOptions& opts) {
  ScoredLayout out{r.id, 0.0, {}};
  const auto& inst = r.instances;

  // Only instances taking part in an overlap need an embedding.
  std::vector<std::optional<EmbeddingVector>> cache(inst.size());
  auto emb = [&](std::size_t k) -> const EmbeddingVector& {
    if (!cache[k]) {
      try {
        cache[k] = embed(inst[k].caption);
      } catch (const EmbeddingError& e) {
        throw EmbeddingError("record '" + r.id + "', instance '" + inst[k].name + "': " + e.what());
      }
    }
    return *cache[k];
  };

  for (std::size_t a = 0; a < inst.size(); ++a) {
    for (std::size_t b = a + 1; b < inst.size(); ++b) {
      const double v = iou(inst[a].bbox, inst[b].bbox);
      if (!(v > 0.0)) continue;
      const EmbeddingVector& ea = emb(a);  // fetch in instance order
      double c = cosine(ea, emb(b));
      if (opts.clamp_negative_cosine) c = std::max(c, 0.0);
      out.pair_terms.push_back({inst[a].name, inst[b].name, v, c, v * c});
      out.score += v * c;
    }
  }
  return out;
}

void DifficultyThresholds::validate() const {
  if (!(std::isfinite(simple_regular) && std::isfinite(regular_complex) && 0.0 < simple_regular &&
        simple_regular < regular_complex)) {
    throw std::invalid_argument("difficulty thresholds must satisfy 0 < simple/regular < regular/complex");
  }
}

Split bucket(double score, const DifficultyThresholds& t) {
  if (score <= t.simple_regular) return Split::Simple;
  if (score <= t.regular_complex) return Split::Regular;
  return Split::Complex;
}

ScoreDistribution score_distribution(const std::vector<ScoredLayout>& scored, double bin_width) {
  if (!(bin_width > 0.0) || !std::isfinite(bin_width)) throw std::invalid_argument("bin width must be positive");
  ScoreDistribution d;
  if (scored.empty()) return d;
  std::vector<double> scores;
  scores.reserve(scored.size());
  for (const auto& s : scored) {
    scores.push_back(s.score);
    const auto k = static_cast<long long>(std::floor(s.score / bin_width));
    ++d.histogram[static_cast<double>(k) * bin_width];
  }
  std::sort(scores.begin(), scores.end());
  const std::size_t n = scores.size();
  const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(n);
  const double median = n % 2 ? scores[n / 2] : 0.5 * (scores[n / 2 - 1] + scores[n / 2]);
  d.summary = ScoreSummary{mean, median, scores.back()};
  return d;
}

std::string serialize_scored(const ScoredLayout& s, Split b) {
  json terms = json::array();
  for (const auto& t : s.pair_terms) {
    terms.push_back({{"i", t.i}, {"j", t.j}, {"iou", t.iou}, {"cos", t.cos}, {"product", t.product}});
  }
  return json{{"id", s.id}, {"score", s.score}, {"bucket", std::string(to_string(b))}, {"pair_terms", terms}}
      .dump();
}

std::vector<ScoredEntry> parse_scored(std::istream& in) {
  std::vector<ScoredEntry> out;
  detail::for_each_record(
      in,
      [&](std::size_t line, const json& obj) {
        try {
          ScoredEntry e{{obj.at("id").get<std::string>(), obj.at("score").get<double>(), {}}, Split::Simple};
          auto b = parse_split(obj.at("bucket").get<std::string>());
          if (!b) throw IoError("unknown bucket");
          e.bucket = *b;
          for (const auto& t : obj.value("pair_terms", json::array())) {
            e.layout.pair_terms.push_back({t.at("i").get<std::string>(), t.at("j").get<std::string>(),
                                           t.at("iou").get<double>(), t.at("cos").get<double>(),
                                           t.at("product").get<double>()});
          }
          out.push_back(std::move(e));
        } catch (const std::exception& e) {
          throw IoError("scored file line " + std::to_string(line) + ": " + e.what());
        }
      },
      [](std::size_t line, const std::string& what) {
        throw IoError("scored file line " + std::to_string(line) + ": " + what);
      });
  return out;
}

}  // namespace l2i
