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

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "l2i/annotations.hpp"
#include "l2i/geometry.hpp"

namespace l2i {

struct DetectionSet {
  std::string record_id;
  std::string seed;
  std::map<std::string, std::vector<BBox>> categories;
};

struct MatchedPair {
  std::string gt;
  std::size_t pred;
  double iou;
};

struct Matching {
  std::vector<MatchedPair> pairs;
  std::vector<std::string> unmatched_gt;

  /// Sum of matched IoUs accumulated in ground-truth order.
  double total_iou() const;
  const MatchedPair* find(std::string_view gt) const;
};

struct MatchOptions {
  /// Assignments with IoU <= min_iou are treated as unmatched. The default
  /// only drops assignments with no overlap at all.
  double min_iou = 0.0;
};

using NamedBox = std::pair<std::string, BBox>;

/// Maximum-total-IoU one-to-one assignment of ground-truth boxes to
/// predictions (cost 1 - IoU, padded with zero-IoU dummies).
Matching hungarian_match(const std::vector<NamedBox>& gt, const std::vector<BBox>& pred,
                         const MatchOptions& opts = {});

enum class MatchScope { PerCategory, Global };

/// Category key of a ground-truth instance against a detection set: the
/// instance name when the detections carry it verbatim, otherwise the name
/// with a trailing "_N", "-N" or " N" index removed.
std::string category_of(const std::string& instance_name, const DetectionSet& d);

/// Matching of every instance in `r`, keyed by instance name. Predicted
/// indices refer to the flattened prediction list in category order
/// (see flatten_predictions).
struct RecordMatching {
  Matching matching;
  std::vector<BBox> predictions;
};

RecordMatching match_record(const LayoutRecord& r, const DetectionSet& d, MatchScope scope = MatchScope::PerCategory,
                            const MatchOptions& opts = {});

std::vector<BBox> flatten_predictions(const DetectionSet& d);

struct MiouResult {
  double value;      // mean over gt instances of matched IoU
  double iou_sum;    // for micro pooling
  std::size_t count;
};

MiouResult miou(const LayoutRecord& r, const DetectionSet& d, MatchScope scope = MatchScope::PerCategory,
                const MatchOptions& opts = {});

using InstancePair = std::pair<std::string, std::string>;

std::vector<InstancePair> relationship_pairs(const LayoutRecord& r);
std::vector<InstancePair> overlap_pairs(const LayoutRecord& r, const PairThresholds& t = {});

struct PairRegionScore {
  InstancePair pair;
  double iou;
};

struct OMiouResult {
  /// Mean over scored pairs; absent when no pair could be scored.
  std::optional<double> value;
  std::vector<PairRegionScore> per_pair;
  std::vector<std::string> diagnostics;
};

/// IoU between ground-truth pair intersections and the intersections of the
/// matched predictions, averaged over `pairs`.
OMiouResult o_miou(const LayoutRecord& r, const DetectionSet& d, const std::vector<InstancePair>& pairs,
                   MatchScope scope = MatchScope::PerCategory, const MatchOptions& opts = {});

struct JudgmentFile {
  std::string record_id;
  std::string seed;
  std::map<std::string, bool> entities;
  std::map<InstancePair, bool> relationships;
};

/// Problems with `j` against its record: unknown instance names or
/// relationship pairs not present in the annotation.
std::vector<std::string> validate_judgment(const JudgmentFile& j, const LayoutRecord& r);

enum class VerdictKind { Entity, Relationship };

struct RecordRate {
  std::string record_id;
  std::size_t yes;
  std::size_t total;
  std::optional<double> rate;
};

struct SuccessRate {
  std::optional<double> pooled;
  std::size_t yes = 0;
  std::size_t total = 0;
  std::vector<RecordRate> per_record;
};

SuccessRate success_rate(const std::vector<JudgmentFile>& judgments, VerdictKind kind);

/// Record-per-line readers. Malformed lines become diagnostics.
struct DetectionParse {
  std::vector<DetectionSet> sets;
  std::vector<Diagnostic> diagnostics;
};
DetectionParse parse_detections(std::istream& in);
std::string serialize_detection(const DetectionSet& d);

struct JudgmentParse {
  std::vector<JudgmentFile> files;
  std::vector<Diagnostic> diagnostics;
};
JudgmentParse parse_judgments(std::istream& in);
std::string serialize_judgment(const JudgmentFile& j);

}  // namespace l2i
