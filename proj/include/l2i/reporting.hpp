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

#include <array>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace l2i {

/// Registered metric keys, in table column order.
inline constexpr std::array<std::string_view, 6> kMetricKeys = {"miou",  "o_miou",      "sr_e",
                                                                "sr_r",  "clip_global", "clip_local"};

bool is_registered_metric(std::string_view key);
std::string_view metric_label(std::string_view key);

/// Ratio metrics are shown as percentages; CLIP scores already carry their
/// scale.
double percent_factor(std::string_view key);

struct RunResult {
  std::string seed;
  std::string split;
  /// metric -> record id -> value
  std::map<std::string, std::map<std::string, double>> metrics;

  void add(const std::string& metric, const std::string& record_id, double value);
};

struct AggregateCell {
  std::string metric;
  double mean;
  double std;
  std::size_t n_seeds;
};

enum class StdKind { Population, Sample };
enum class Pooling { Macro, Micro };

struct AggregateOptions {
  StdKind std_kind = StdKind::Population;
  Pooling pooling = Pooling::Macro;
};

/// split -> metric -> cell. Absent entries mean no data, never zero.
using ReportTable = std::map<std::string, std::map<std::string, AggregateCell>>;

/// Per split and metric: each seed's scalar is the mean over its records;
/// the cell holds mean and std of those scalars across seeds. Micro pooling
/// replaces the cell mean by the mean over all (seed, record) values.
ReportTable aggregate(const std::vector<RunResult>& runs, const AggregateOptions& opts = {});

/// Half away from zero at 2 decimals.
double round2(double v);
std::string format_cell(double mean, double std);

enum class RenderFormat { Text, Csv };

struct RenderOptions {
  RenderFormat format = RenderFormat::Text;
  bool percent = true;
  bool fid_column = false;
};

/// Rows in split order simple, regular, complex, then other labels sorted.
std::vector<std::string> split_order(const ReportTable& t);

std::string render(const ReportTable& t, const RenderOptions& opts = {});

/// Reads the csv produced by render(); values are unscaled back to raw units.
ReportTable parse_csv(std::istream& in);

/// Per-record metrics file: {"seed","split","id","metrics":{name:value}} per
/// line. Lines are grouped into one RunResult per (seed, split).
std::vector<RunResult> parse_run_results(std::istream& in);
std::string serialize_record_metrics(const std::string& seed, const std::string& split, const std::string& id,
                                     const std::map<std::string, double>& metrics);

}  // namespace l2i
