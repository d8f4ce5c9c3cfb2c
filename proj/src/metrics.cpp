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

#include "l2i/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include <Eigen/Core>

#include "jsonl.hpp"
#include "l2i/assignment.hpp"

namespace l2i {

using detail::json;

double Matching::total_iou() const {
  double s = 0.0;
  for (const auto& p : pairs) s += p.iou;
  return s;
}

const MatchedPair* Matching::find(std::string_view gt) const {
  for (const auto& p : pairs) {
    if (p.gt == gt) return &p;
  }
  return nullptr;
}

Matching hungarian_match(const std::vector<NamedBox>& gt, const std::vector<BBox>& pred, const MatchOptions& opts) {
  Matching m;
  const auto n = static_cast<Eigen::Index>(gt.size());
  const auto p = static_cast<Eigen::Index>(pred.size());
  if (n == 0) return m;

  // Square problem; dummy rows/columns carry zero IoU (cost 1).
  const Eigen::Index size = std::max(n, p);
  Eigen::MatrixXd ious = Eigen::MatrixXd::Zero(n, p);
  Eigen::MatrixXd cost = Eigen::MatrixXd::Ones(size, size);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      const double v = iou(gt[static_cast<std::size_t>(i)].second, pred[static_cast<std::size_t>(j)]);
      ious(i, j) = v;
      if (v > opts.min_iou) cost(i, j) = 1.0 - v;
    }
  }

  const auto col_of = solve_assignment(cost);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index j = col_of[static_cast<std::size_t>(i)];
    const auto& name = gt[static_cast<std::size_t>(i)].first;
    if (j < p && ious(i, j) > opts.min_iou) {
      m.pairs.push_back({name, static_cast<std::size_t>(j), ious(i, j)});
    } else {
      m.unmatched_gt.push_back(name);
    }
  }
  return m;
}

std::string category_of(const std::string& name, const DetectionSet& d) {
  if (d.categories.count(name)) return name;
  std::size_t end = name.size();
  while (end > 0 && std::isdigit(static_cast<unsigned char>(name[end - 1]))) --end;
  if (end == name.size() || end < 2) return name;
  const char sep = name[end - 1];
  if (sep != '_' && sep != '-' && sep != ' ') return name;
  return name.substr(0, end - 1);
}

std::vector<BBox> flatten_predictions(const DetectionSet& d) {
  std::vector<BBox> out;
  for (const auto& [_, boxes] : d.categories) out.insert(out.end(), boxes.begin(), boxes.end());
  return out;
}

RecordMatching match_record(const LayoutRecord& r, const DetectionSet& d, MatchScope scope, const MatchOptions& opts) {
  RecordMatching out{{}, flatten_predictions(d)};
  if (scope == MatchScope::Global) {
    std::vector<NamedBox> gt;
    for (const auto& inst : r.instances) gt.emplace_back(inst.name, inst.bbox);
    out.matching = hungarian_match(gt, out.predictions, opts);
    return out;
  }

  std::map<std::string, std::size_t> offset;
  std::size_t running = 0;
  for (const auto& [cat, boxes] : d.categories) {
    offset[cat] = running;
    running += boxes.size();
  }

  // Group instances by category, keeping record order within each group.
  std::vector<std::string> order;
  std::map<std::string, std::vector<NamedBox>> groups;
  for (const auto& inst : r.instances) {
    const std::string cat = category_of(inst.name, d);
    if (!groups.count(cat)) order.push_back(cat);
    groups[cat].emplace_back(inst.name, inst.bbox);
  }

  std::map<std::string, MatchedPair> matched;
  for (const auto& cat : order) {
    auto it = d.categories.find(cat);
    static const std::vector<BBox> kNone;
    const auto& preds = it == d.categories.end() ? kNone : it->second;
    const Matching m = hungarian_match(groups[cat], preds, opts);
    for (const auto& p : m.pairs) matched[p.gt] = {p.gt, offset[cat] + p.pred, p.iou};
  }
  for (const auto& inst : r.instances) {
    if (auto it = matched.find(inst.name); it != matched.end()) {
      out.matching.pairs.push_back(it->second);
    } else {
      out.matching.unmatched_gt.push_back(inst.name);
    }
  }
  return out;
}

namespace {

void check_ids(const LayoutRecord& r, const DetectionSet& d) {
  if (r.id != d.record_id) {
    throw std::invalid_argument("detection set '" + d.record_id + "' does not belong to record '" + r.id + "'");
  }
}

}  // namespace

MiouResult miou(const LayoutRecord& r, const DetectionSet& d, MatchScope scope, const MatchOptions& opts) {
  check_ids(r, d);
  const RecordMatching rm = match_record(r, d, scope, opts);
  const double sum = rm.matching.total_iou();
  const std::size_t n = r.instances.size();
  return {n ? sum / static_cast<double>(n) : 0.0, sum, n};
}

std::vector<InstancePair> relationship_pairs(const LayoutRecord& r) {
  std::vector<InstancePair> out;
  std::set<InstancePair> seen;
  for (const auto& rel : r.relationships) {
    InstancePair key = std::minmax(rel.subject, rel.object);
    if (seen.insert(key).second) out.emplace_back(rel.subject, rel.object);
  }
  return out;
}

std::vector<InstancePair> overlap_pairs(const LayoutRecord& r, const PairThresholds& t) {
  std::vector<InstancePair> out;
  for (const auto& p : valid_overlap_pairs(r, t)) out.emplace_back(p.i, p.j);
  return out;
}

OMiouResult o_miou(const LayoutRecord& r, const DetectionSet& d, const std::vector<InstancePair>& pairs,
                   MatchScope scope, const MatchOptions& opts) {
  check_ids(r, d);
  OMiouResult out;
  const RecordMatching rm = match_record(r, d, scope, opts);
  double sum = 0.0;
  for (const auto& pr : pairs) {
    const auto* a = r.find(pr.first);
    const auto* b = r.find(pr.second);
    if (!a || !b) {
      out.diagnostics.push_back("record '" + r.id + "': pair (" + pr.first + ", " + pr.second +
                                ") names an unknown instance");
      continue;
    }
    const auto gt_region = intersect(a->bbox, b->bbox);
    if (!gt_region) {
      out.diagnostics.push_back("record '" + r.id + "': pair (" + pr.first + ", " + pr.second +
                                ") has no ground-truth overlap; excluded");
      continue;
    }
    double value = 0.0;
    const auto* ma = rm.matching.find(pr.first);
    const auto* mb = rm.matching.find(pr.second);
    if (ma && mb) {
      if (auto pred_region = intersect(rm.predictions[ma->pred], rm.predictions[mb->pred])) {
        value = iou(*gt_region, *pred_region);
      }
    }
    out.per_pair.push_back({pr, value});
    sum += value;
  }
  if (!out.per_pair.empty()) out.value = sum / static_cast<double>(out.per_pair.size());
  return out;
}

std::vector<std::string> validate_judgment(const JudgmentFile& j, const LayoutRecord& r) {
  std::vector<std::string> out;
  if (j.record_id != r.id) out.push_back("judgment for '" + j.record_id + "' checked against record '" + r.id + "'");
  for (const auto& [name, _] : j.entities) {
    if (!r.find(name)) out.push_back("record '" + r.id + "': verdict for unknown instance '" + name + "'");
  }
  std::set<InstancePair> known;
  for (const auto& rel : r.relationships) known.insert({rel.subject, rel.object});
  for (const auto& [pr, _] : j.relationships) {
    if (!known.count(pr) && !known.count({pr.second, pr.first})) {
      out.push_back("record '" + r.id + "': verdict for unknown relationship (" + pr.first + ", " + pr.second + ")");
    }
  }
  return out;
}

SuccessRate success_rate(const std::vector<JudgmentFile>& judgments, VerdictKind kind) {
  SuccessRate out;
  for (const auto& j : judgments) {
    RecordRate rr{j.record_id, 0, 0, std::nullopt};
    auto tally = [&rr](bool yes) {
      ++rr.total;
      if (yes) ++rr.yes;
    };
    if (kind == VerdictKind::Entity) {
      for (const auto& [_, yes] : j.entities) tally(yes);
    } else {
      for (const auto& [_, yes] : j.relationships) tally(yes);
    }
    if (rr.total) rr.rate = static_cast<double>(rr.yes) / static_cast<double>(rr.total);
    out.yes += rr.yes;
    out.total += rr.total;
    out.per_record.push_back(std::move(rr));
  }
  if (out.total) out.pooled = static_cast<double>(out.yes) / static_cast<double>(out.total);
  return out;
}

namespace {

std::optional<bool> parse_verdict(const json& v) {
  if (v.is_boolean()) return v.get<bool>();
  if (!v.is_string()) return std::nullopt;
  std::string s = v.get<std::string>();
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "yes") return true;
  if (s == "no") return false;
  return std::nullopt;
}

std::string record_id_of(const json& obj) {
  if (auto it = obj.find("id"); it != obj.end() && it->is_string()) return it->get<std::string>();
  return {};
}

std::string seed_of(const json& obj) {
  auto it = obj.find("seed");
  if (it == obj.end() || it->is_null()) return {};
  return it->is_string() ? it->get<std::string>() : it->dump();
}

}  // namespace

DetectionParse parse_detections(std::istream& in) {
  DetectionParse out;
  detail::for_each_record(
      in,
      [&](std::size_t line, const json& obj) {
        DetectionSet d{record_id_of(obj), seed_of(obj), {}};
        if (d.record_id.empty()) {
          out.diagnostics.push_back({line, "", "missing field 'id'"});
          return;
        }
        auto cats = obj.find("categories");
        if (cats == obj.end() || !cats->is_object()) {
          out.diagnostics.push_back({line, d.record_id, "field 'categories' must be an object"});
          return;
        }
        for (const auto& [cat, boxes] : cats->items()) {
          auto& list = d.categories[cat];
          if (cat.empty() || !boxes.is_array()) {
            out.diagnostics.push_back({line, d.record_id, "category '" + cat + "' is not a list of boxes"});
            continue;
          }
          for (const auto& b : boxes) {
            try {
              list.push_back(BBox::from_array(b.get<std::array<double, 4>>()));
            } catch (const std::exception& e) {
              out.diagnostics.push_back({line, d.record_id, "dropped box in '" + cat + "': " + e.what()});
            }
          }
        }
        out.sets.push_back(std::move(d));
      },
      [&](std::size_t line, const std::string& what) { out.diagnostics.push_back({line, "", what}); });
  return out;
}

std::string serialize_detection(const DetectionSet& d) {
  json cats = json::object();
  for (const auto& [cat, boxes] : d.categories) {
    json list = json::array();
    for (const auto& b : boxes) list.push_back(b.coords());
    cats[cat] = std::move(list);
  }
  return json{{"id", d.record_id}, {"seed", d.seed}, {"categories", cats}}.dump();
}

JudgmentParse parse_judgments(std::istream& in) {
  JudgmentParse out;
  detail::for_each_record(
      in,
      [&](std::size_t line, const json& obj) {
        JudgmentFile j{record_id_of(obj), seed_of(obj), {}, {}};
        if (j.record_id.empty()) {
          out.diagnostics.push_back({line, "", "missing field 'id'"});
          return;
        }
        bool ok = true;
        if (auto it = obj.find("entities"); it != obj.end() && it->is_object()) {
          for (const auto& [name, v] : it->items()) {
            if (auto yes = parse_verdict(v)) {
              j.entities[name] = *yes;
            } else {
              out.diagnostics.push_back({line, j.record_id, "entity '" + name + "' verdict must be Yes or No"});
              ok = false;
            }
          }
        }
        if (auto it = obj.find("relationships"); it != obj.end() && it->is_array()) {
          for (const auto& rel : *it) {
            const auto yes = rel.contains("verdict") ? parse_verdict(rel["verdict"]) : std::nullopt;
            if (!rel.contains("subject") || !rel.contains("object") || !rel["subject"].is_string() ||
                !rel["object"].is_string() || !yes) {
              out.diagnostics.push_back({line, j.record_id, "relationship verdict must carry subject, object and Yes/No"});
              ok = false;
              continue;
            }
            j.relationships[{rel["subject"].get<std::string>(), rel["object"].get<std::string>()}] = *yes;
          }
        }
        if (ok) out.files.push_back(std::move(j));
      },
      [&](std::size_t line, const std::string& what) { out.diagnostics.push_back({line, "", what}); });
  return out;
}

std::string serialize_judgment(const JudgmentFile& j) {
  json ents = json::object();
  for (const auto& [name, yes] : j.entities) ents[name] = yes ? "Yes" : "No";
  json rels = json::array();
  for (const auto& [pr, yes] : j.relationships) {
    rels.push_back({{"subject", pr.first}, {"object", pr.second}, {"verdict", yes ? "Yes" : "No"}});
  }
  return json{{"id", j.record_id}, {"seed", j.seed}, {"entities", ents}, {"relationships", rels}}.dump();
}

}  // namespace l2i
