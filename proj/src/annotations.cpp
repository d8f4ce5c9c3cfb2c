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

#include "l2i/annotations.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <unordered_set>

#include "jsonl.hpp"

namespace l2i {

using detail::json;

namespace {

/// Per-record violation; caught inside parse_dataset and turned into a Diagnostic.
struct RecordError {
  std::string reason;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

bool is_none_phrase(std::string_view s) {
  std::string t = trim(s);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  return t == "none";
}

const json& field(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw RecordError{std::string("missing field '") + key + "'"};
  return *it;
}

std::string string_field(const json& obj, const char* key) {
  const json& v = field(obj, key);
  if (!v.is_string()) throw RecordError{std::string("field '") + key + "' must be a string"};
  return v.get<std::string>();
}

int int_field(const json& obj, const char* key) {
  const json& v = field(obj, key);
  if (!v.is_number_integer()) throw RecordError{std::string("field '") + key + "' must be an integer"};
  return v.get<int>();
}

BBox bbox_field(const json& obj, const std::string& owner) {
  const json& v = field(obj, "bbox");
  if (!v.is_array() || v.size() != 4) throw RecordError{"bbox of '" + owner + "' must be [x1,y1,x2,y2]"};
  std::array<double, 4> c{};
  for (std::size_t k = 0; k < 4; ++k) {
    if (!v[k].is_number()) throw RecordError{"bbox of '" + owner + "' has a non-numeric coordinate"};
    c[k] = v[k].get<double>();
  }
  try {
    return BBox::from_array(c);
  } catch (const GeometryError& e) {
    throw RecordError{"invalid bbox for '" + owner + "': " + e.what()};
  }
}

LayoutRecord record_from_json(const json& obj, const ParseOptions& opts) {
  ImageDims dims = [&] {
    try {
      return ImageDims(int_field(obj, "width"), int_field(obj, "height"));
    } catch (const GeometryError& e) {
      throw RecordError{e.what()};
    }
  }();
  LayoutRecord r{string_field(obj, "id"), string_field(obj, "caption"), dims, {}, {}, {}, {}};
  if (r.id.empty()) throw RecordError{"empty id"};

  const json& insts = field(obj, "instances");
  if (!insts.is_array()) throw RecordError{"field 'instances' must be a list"};
  std::unordered_set<std::string> names;
  for (const json& inst : insts) {
    if (!inst.is_object()) throw RecordError{"instance entry must be an object"};
    std::string name = string_field(inst, "name");
    if (name.empty()) throw RecordError{"instance with empty name"};
    std::string caption = string_field(inst, "caption");
    if (caption.empty()) throw RecordError{"instance '" + name + "' has an empty caption"};
    if (!names.insert(name).second) throw RecordError{"duplicate instance name '" + name + "'"};
    BBox box = bbox_field(inst, name);
    r.instances.push_back({std::move(name), std::move(caption), box});
  }
  if (r.instances.size() < opts.min_instances || r.instances.size() > opts.max_instances) {
    throw RecordError{"instance count out of range: " + std::to_string(r.instances.size()) + " not in [" +
                      std::to_string(opts.min_instances) + ", " + std::to_string(opts.max_instances) + "]"};
  }

  if (auto it = obj.find("relationships"); it != obj.end()) {
    if (!it->is_array()) throw RecordError{"field 'relationships' must be a list"};
    for (const json& rel : *it) {
      if (!rel.is_object()) throw RecordError{"relationship entry must be an object"};
      RelationshipAnnotation ra{string_field(rel, "subject"), string_field(rel, "object"),
                                string_field(rel, "phrase")};
      if (is_none_phrase(ra.phrase)) continue;
      if (trim(ra.phrase).empty()) {
        throw RecordError{"relationship " + ra.subject + " -> " + ra.object + " has an empty phrase"};
      }
      if (!names.count(ra.subject)) throw RecordError{"unknown endpoint '" + ra.subject + "'"};
      if (!names.count(ra.object)) throw RecordError{"unknown endpoint '" + ra.object + "'"};
      if (ra.subject == ra.object) throw RecordError{"self relationship on '" + ra.subject + "'"};
      r.relationships.push_back(std::move(ra));
    }
  }

  if (auto it = obj.find("split"); it != obj.end() && !it->is_null()) {
    if (!it->is_string()) throw RecordError{"field 'split' must be a string"};
    r.split = parse_split(it->get<std::string>());
    if (!r.split) throw RecordError{"unknown split '" + it->get<std::string>() + "'"};
  }
  if (auto it = obj.find("image"); it != obj.end() && !it->is_null()) {
    if (!it->is_string()) throw RecordError{"field 'image' must be a string"};
    r.image = it->get<std::string>();
  }
  return r;
}

}  // namespace

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Simple: return "simple";
    case Split::Regular: return "regular";
    case Split::Complex: return "complex";
  }
  return "?";
}

std::optional<Split> parse_split(std::string_view s) {
  if (s == "simple") return Split::Simple;
  if (s == "regular") return Split::Regular;
  if (s == "complex") return Split::Complex;
  return std::nullopt;
}

const InstanceAnnotation* LayoutRecord::find(std::string_view name) const {
  for (const auto& inst : instances) {
    if (inst.name == name) return &inst;
  }
  return nullptr;
}

ParseResult parse_dataset(std::istream& in, const ParseOptions& opts) {
  ParseResult out;
  std::set<std::string> seen_ids;
  detail::for_each_record(
      in,
      [&](std::size_t line, const json& obj) {
        std::string id;
        if (auto it = obj.find("id"); it != obj.end() && it->is_string()) id = it->get<std::string>();
        try {
          LayoutRecord r = record_from_json(obj, opts);
          if (!seen_ids.insert(r.id).second) throw RecordError{"duplicate record id"};
          out.records.push_back(std::move(r));
        } catch (const RecordError& e) {
          out.diagnostics.push_back({line, id, e.reason});
        } catch (const json::exception& e) {
          out.diagnostics.push_back({line, id, e.what()});
        }
      },
      [&](std::size_t line, const std::string& what) { out.diagnostics.push_back({line, "", what}); });
  return out;
}

ParseResult parse_dataset_file(const std::string& path, const ParseOptions& opts) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open annotation file: " + path);
  return parse_dataset(in, opts);
}

std::string serialize_record(const LayoutRecord& r) {
  json obj;
  obj["id"] = r.id;
  obj["caption"] = r.global_caption;
  obj["width"] = r.dims.width_px;
  obj["height"] = r.dims.height_px;
  obj["instances"] = json::array();
  for (const auto& inst : r.instances) {
    obj["instances"].push_back({{"name", inst.name}, {"caption", inst.caption}, {"bbox", inst.bbox.coords()}});
  }
  obj["relationships"] = json::array();
  for (const auto& rel : r.relationships) {
    obj["relationships"].push_back({{"subject", rel.subject}, {"object", rel.object}, {"phrase", rel.phrase}});
  }
  if (r.split) obj["split"] = std::string(to_string(*r.split));
  if (r.image) obj["image"] = *r.image;
  return obj.dump();
}

void write_dataset(std::ostream& out, const std::vector<LayoutRecord>& records) {
  for (const auto& r : records) out << serialize_record(r) << '\n';
  if (!out) throw IoError("failed writing annotation records");
}

std::vector<ValidPair> valid_overlap_pairs(const LayoutRecord& r, const PairThresholds& t) {
  std::vector<ValidPair> pairs;
  const auto& inst = r.instances;
  for (std::size_t a = 0; a < inst.size(); ++a) {
    for (std::size_t b = a + 1; b < inst.size(); ++b) {
      const double inter = intersection_area(inst[a].bbox, inst[b].bbox);
      if (!(inter > t.area_min)) continue;
      const double v = iou(inst[a].bbox, inst[b].bbox);
      if (!(v > t.iou_min)) continue;
      pairs.push_back({inst[a].name, inst[b].name, v, inter});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const ValidPair& p, const ValidPair& q) {
    if (p.iou != q.iou) return p.iou > q.iou;
    if (p.i != q.i) return p.i < q.i;
    return p.j < q.j;
  });
  return pairs;
}

EligibilitySplit filter_benchmark_eligible(std::vector<LayoutRecord> records, const EligibilityRule& rule) {
  EligibilitySplit out;
  for (auto& r : records) {
    const std::size_t n = valid_overlap_pairs(r, rule.thresholds).size();
    if (n >= rule.min_pairs && n <= rule.max_pairs) {
      out.kept.push_back(std::move(r));
    } else {
      out.rejected.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace l2i
