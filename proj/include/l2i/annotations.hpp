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
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "l2i/geometry.hpp"

namespace l2i {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Split { Simple = 0, Regular = 1, Complex = 2 };

std::string_view to_string(Split s);
std::optional<Split> parse_split(std::string_view s);

struct InstanceAnnotation {
  std::string name;
  std::string caption;
  BBox bbox;

  bool operator==(const InstanceAnnotation&) const = default;
};

struct RelationshipAnnotation {
  std::string subject;
  std::string object;
  std::string phrase;

  bool operator==(const RelationshipAnnotation&) const = default;
};

/// One benchmark sample. Records returned by parse_dataset() always satisfy
/// the referential and count invariants.
struct LayoutRecord {
  std::string id;
  std::string global_caption;
  ImageDims dims;
  std::vector<InstanceAnnotation> instances;
  std::vector<RelationshipAnnotation> relationships;
  std::optional<Split> split;
  /// Opaque image reference (path or URL); never dereferenced by the toolkit.
  std::optional<std::string> image;

  const InstanceAnnotation* find(std::string_view name) const;
  bool operator==(const LayoutRecord&) const = default;
};

struct ValidPair {
  std::string i;
  std::string j;
  double iou;
  double inter_area;
};

struct Diagnostic {
  std::size_t line = 0;
  std::string record_id;  // empty when the id itself could not be read
  std::string reason;
};

struct ParseOptions {
  std::size_t min_instances = 2;
  std::size_t max_instances = 10;
};

struct ParseResult {
  std::vector<LayoutRecord> records;
  std::vector<Diagnostic> diagnostics;
};

/// Reads a record-per-line annotation file. Blank lines and lines starting
/// with '#' are skipped. Throws IoError if the stream cannot be read.
ParseResult parse_dataset(std::istream& in, const ParseOptions& opts = {});
ParseResult parse_dataset_file(const std::string& path, const ParseOptions& opts = {});

std::string serialize_record(const LayoutRecord& r);
void write_dataset(std::ostream& out, const std::vector<LayoutRecord>& records);

struct PairThresholds {
  double iou_min = 0.05;
  double area_min = 0.01;
};

/// Unordered instance pairs whose IoU and intersection area strictly exceed
/// the thresholds, sorted by descending IoU then by names.
std::vector<ValidPair> valid_overlap_pairs(const LayoutRecord& r, const PairThresholds& t = {});

struct EligibilityRule {
  PairThresholds thresholds;
  std::size_t min_pairs = 1;
  std::size_t max_pairs = 10;
};

struct EligibilitySplit {
  std::vector<LayoutRecord> kept;
  std::vector<LayoutRecord> rejected;
};

EligibilitySplit filter_benchmark_eligible(std::vector<LayoutRecord> records,
                                           const EligibilityRule& rule = {});

}  // namespace l2i
