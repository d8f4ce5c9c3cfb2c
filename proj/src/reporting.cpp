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

#include "l2i/reporting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "jsonl.hpp"

namespace l2i {

using detail::json;

bool is_registered_metric(std::string_view key) {
  return std::find(kMetricKeys.begin(), kMetricKeys.end(), key) != kMetricKeys.end();
}

std::string_view metric_label(std::string_view key) {
  if (key == "miou") return "mIoU";
  if (key == "o_miou") return "O-mIoU";
  if (key == "sr_e") return "SR_E";
  if (key == "sr_r") return "SR_R";
  if (key == "clip_global") return "CLIP_Global";
  if (key == "clip_local") return "CLIP_Local";
  return key;
}

double percent_factor(std::string_view key) {
  return key == "clip_global" || key == "clip_local" ? 1.0 : 100.0;
}

void RunResult::add(const std::string& metric, const std::string& record_id, double value) {
  if (!is_registered_metric(metric)) throw std::invalid_argument("unregistered metric '" + metric + "'");
  auto [it, inserted] = metrics[metric].emplace(record_id, value);
  if (!inserted) {
    throw std::invalid_argument("duplicate record '" + record_id + "' for metric '" + metric + "' in seed " + seed);
  }
}

ReportTable aggregate(const std::vector<RunResult>& runs, const AggregateOptions& opts) {
  if (runs.empty()) throw std::invalid_argument("aggregate needs at least one run");
  // split -> metric -> seed -> record values. Keying by seed makes the result
  // independent of run order.
  std::map<std::string, std::map<std::string, std::map<std::string, std::vector<double>>>> values;
  for (const auto& run : runs) {
    for (const auto& [metric, per_record] : run.metrics) {
      if (!is_registered_metric(metric)) throw std::invalid_argument("unregistered metric '" + metric + "'");
      if (per_record.empty()) continue;
      auto& bucket = values[run.split][metric][run.seed];
      if (!bucket.empty()) {
        throw std::invalid_argument("seed " + run.seed + " appears twice for split '" + run.split + "'");
      }
      for (const auto& [_, v] : per_record) bucket.push_back(v);
    }
  }

  ReportTable table;
  for (const auto& [split, metrics] : values) {
    for (const auto& [metric, seeds] : metrics) {
      std::vector<double> seed_means;
      double pooled_sum = 0.0;
      std::size_t pooled_n = 0;
      for (const auto& [_, vals] : seeds) {
        double s = 0.0;
        for (double v : vals) s += v;
        seed_means.push_back(s / static_cast<double>(vals.size()));
        pooled_sum += s;
        pooled_n += vals.size();
      }
      const auto n = static_cast<double>(seed_means.size());
      double mean = 0.0;
      for (double m : seed_means) mean += m;
      mean /= n;
      double ss = 0.0;
      for (double m : seed_means) ss += (m - mean) * (m - mean);
      double sd = 0.0;
      if (seed_means.size() > 1) sd = std::sqrt(ss / (opts.std_kind == StdKind::Population ? n : n - 1.0));
      if (opts.pooling == Pooling::Micro) mean = pooled_sum / static_cast<double>(pooled_n);
      table[split][metric] = {metric, mean, sd, seed_means.size()};
    }
  }
  return table;
}

double round2(double v) {
  // The nudge absorbs binary representation error such as 60.545 -> 60.54499...
  const double scaled = std::abs(v) * 100.0;
  const double r = std::floor(scaled + 0.5 + 1e-9) / 100.0;
  return std::copysign(r, v);
}

std::string format_cell(double mean, double sd) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f±%.2f", round2(mean) + 0.0, round2(sd) + 0.0);
  return buf;
}

std::vector<std::string> split_order(const ReportTable& t) {
  std::vector<std::string> out;
  for (const char* s : {"simple", "regular", "complex"}) {
    if (t.count(s)) out.emplace_back(s);
  }
  for (const auto& [split, _] : t) {
    if (std::find(out.begin(), out.end(), split) == out.end()) out.push_back(split);
  }
  return out;
}

std::string render(const ReportTable& t, const RenderOptions& opts) {
  std::ostringstream os;
  auto scale = [&](std::string_view m) { return opts.percent ? percent_factor(m) : 1.0; };

  if (opts.format == RenderFormat::Csv) {
    os << "split,metric,mean,std,n_seeds,scale\n";
    char buf[128];
    for (const auto& split : split_order(t)) {
      for (auto key : kMetricKeys) {
        auto it = t.at(split).find(std::string(key));
        if (it == t.at(split).end()) continue;
        const auto& c = it->second;
        const double k = scale(key);
        std::snprintf(buf, sizeof buf, "%.2f,%.2f,%zu,%g", round2(c.mean * k) + 0.0, round2(c.std * k) + 0.0,
                      c.n_seeds, k);
        os << split << ',' << key << ',' << buf << '\n';
      }
    }
    return os.str();
  }

  std::vector<std::string> header{"Split"};
  for (auto key : kMetricKeys) header.emplace_back(metric_label(key));
  if (opts.fid_column) header.emplace_back("FID");
  std::vector<std::vector<std::string>> rows{header};
  for (const auto& split : split_order(t)) {
    std::vector<std::string> row{split};
    for (auto key : kMetricKeys) {
      auto it = t.at(split).find(std::string(key));
      if (it == t.at(split).end()) {
        row.emplace_back("-");
      } else {
        const double k = scale(key);
        row.push_back(format_cell(it->second.mean * k, it->second.std * k));
      }
    }
    if (opts.fid_column) row.emplace_back("n/a");
    rows.push_back(std::move(row));
  }

  // Column widths count code points so "±" does not skew alignment.
  auto width = [](const std::string& s) {
    std::size_t w = 0;
    for (unsigned char c : s) w += (c & 0xC0) != 0x80;
    return w;
  };
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], width(row[c]));
  }
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) os << " | ";
      os << row[c];
      if (c + 1 < row.size()) os << std::string(widths[c] - width(row[c]), ' ');
    }
    os << '\n';
  }
  return os.str();
}

ReportTable parse_csv(std::istream& in) {
  ReportTable t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);
    if (cols.size() != 6) throw std::invalid_argument("csv line " + std::to_string(line_no) + ": expected 6 columns");
    const double k = std::stod(cols[5]);
    t[cols[0]][cols[1]] = {cols[1], std::stod(cols[2]) / k, std::stod(cols[3]) / k,
                           static_cast<std::size_t>(std::stoul(cols[4]))};
  }
  return t;
}

std::vector<RunResult> parse_run_results(std::istream& in) {
  std::map<std::pair<std::string, std::string>, RunResult> runs;
  detail::for_each_record(
      in,
      [&](std::size_t line, const json& obj) {
        try {
          const auto seed = obj.at("seed").is_string() ? obj.at("seed").get<std::string>() : obj.at("seed").dump();
          const auto split = obj.at("split").get<std::string>();
          const auto id = obj.at("id").get<std::string>();
          auto& run = runs[{seed, split}];
          run.seed = seed;
          run.split = split;
          for (const auto& [metric, v] : obj.at("metrics").items()) {
            if (v.is_null()) continue;
            run.add(metric, id, v.get<double>());
          }
        } catch (const std::exception& e) {
          throw std::invalid_argument("metrics file line " + std::to_string(line) + ": " + e.what());
        }
      },
      [](std::size_t line, const std::string& what) {
        throw std::invalid_argument("metrics file line " + std::to_string(line) + ": " + what);
      });
  std::vector<RunResult> out;
  for (auto& [_, r] : runs) out.push_back(std::move(r));
  return out;
}

std::string serialize_record_metrics(const std::string& seed, const std::string& split, const std::string& id,
                                     const std::map<std::string, double>& metrics) {
  json m = json::object();
  for (const auto& [k, v] : metrics) m[k] = v;
  return json{{"seed", seed}, {"split", split}, {"id", id}, {"metrics", m}}.dump();
}

}  // namespace l2i
