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

#include "l2i/cli.hpp"

#include <openssl/evp.h>

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "jsonl.hpp"
#include "l2i/annotations.hpp"
#include "l2i/audit.hpp"
#include "l2i/embedding.hpp"
#include "l2i/losses.hpp"
#include "l2i/metrics.hpp"
#include "l2i/overlayscore.hpp"
#include "l2i/reporting.hpp"

namespace l2i {

using detail::json;

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

std::string file_sha256(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

namespace {

/// Configuration error; reported with exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Config {
  std::string config_file;
  bool print_config = false;

  std::string annotations;
  std::string embeddings;
  std::vector<std::string> detections;
  std::vector<std::string> judgments;
  std::string scored;
  std::vector<std::string> metrics;
  std::vector<std::string> fixtures;
  std::string out;
  std::string table_out;

  double iou_min = 0.05;
  double area_min = 0.01;
  double t_simple_regular = 0.1;
  double t_regular_complex = 0.5;
  double bin_width = 0.1;
  bool clamp_negative_cosine = false;
  bool eligibility = false;

  std::string embed_url;
  int embed_timeout_ms = 5000;
  int embed_retries = 2;

  double clip_scale = 100.0;
  std::vector<std::string> seeds{"20251202", "20251203", "20251204"};
  std::string scope = "per-category";
  std::string omiou_pairs = "relationships";
  double min_match_iou = 0.0;

  std::string format = "text";
  std::string std_kind = "population";
  std::string pooling = "macro";
  bool fid = false;

  int trials = 100;
  std::uint64_t rng_seed = 20251202;
  int min_size = 4;
  int max_size = 16;
  double fd_step = 1e-4;
  double tolerance = 1e-4;

  std::string bind = "127.0.0.1";
  int port = 8765;
  std::string log = "verdicts.log";
  std::string static_dir;
  std::string export_path = "approved.jsonl";
  std::string image_template = "images/{id}.jpg";
};

/// Option bound to a Config field that can also come from the JSON config
/// file. Explicit flags win over the file.
struct Binding {
  std::string key;
  CLI::Option* opt;
  std::function<void(const json&)> load;
  std::function<json()> dump;
};

class Binder {
 public:
  explicit Binder(CLI::App* app) : app_(app) {}

  template <typename T>
  Binder& option(const std::string& flag, T& target, const std::string& desc) {
    CLI::Option* o = app_->add_option(flag, target, desc)->capture_default_str();
    add(flag, o, target);
    return *this;
  }

  Binder& flag(const std::string& flag, bool& target, const std::string& desc) {
    CLI::Option* o = app_->add_flag(flag, target, desc);
    add(flag, o, target);
    return *this;
  }

  void resolve(const json& file) {
    for (auto& b : bindings_) {
      if (b.opt->count() > 0 || !file.contains(b.key)) continue;
      try {
        b.load(file.at(b.key));
      } catch (const json::exception& e) {
        throw ConfigError("config key '" + b.key + "': " + e.what());
      }
    }
  }

  json dump() const {
    json j = json::object();
    for (const auto& b : bindings_) j[b.key] = b.dump();
    return j;
  }

 private:
  template <typename T>
  void add(const std::string& flag, CLI::Option* o, T& target) {
    std::string key = flag.substr(flag.find_first_not_of('-'));
    std::replace(key.begin(), key.end(), '-', '_');
    bindings_.push_back({key, o, [&target](const json& j) { target = j.get<T>(); }, [&target] { return json(target); }});
  }

  CLI::App* app_;
  std::vector<Binding> bindings_;
};

std::string provenance(const std::string& command, const json& resolved, const std::vector<std::string>& inputs) {
  std::ostringstream os;
  os << "# l2ieval " << kVersion << " command=" << command << " config_sha256=" << sha256_hex(resolved.dump())
     << '\n';
  for (const auto& path : inputs) {
    if (path.empty()) continue;
    os << "# input " << std::filesystem::path(path).filename().string() << " sha256=" << file_sha256(path) << '\n';
  }
  return os.str();
}

std::ifstream open_input(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError("missing required path: " + what);
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + what + ": " + path);
  return in;
}

void write_file(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".partial";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << content;
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("cannot write " + path);
    }
  }
  std::filesystem::rename(tmp, path);
}

ParseResult load_annotations(const Config& c) {
  auto in = open_input(c.annotations, "annotations");
  return parse_dataset(in);
}

void print_diagnostics(std::ostream& err, const std::vector<Diagnostic>& diags, const std::string& file) {
  for (const auto& d : diags) {
    err << file << ":" << d.line << ": " << (d.record_id.empty() ? "" : "[" + d.record_id + "] ") << d.reason
        << '\n';
  }
}

std::unique_ptr<EmbeddingService> make_service(const Config& c) {
  std::string url = c.embed_url;
  if (const char* env = std::getenv(kEmbedUrlEnv); env && *env) url = env;
  if (url.empty()) return nullptr;
  return std::make_unique<HttpEmbeddingClient>(
      HttpServiceOptions{url, std::chrono::milliseconds(c.embed_timeout_ms), c.embed_retries});
}

DifficultyThresholds thresholds_of(const Config& c) {
  DifficultyThresholds t{c.t_simple_regular, c.t_regular_complex};
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return t;
}

// ---------------------------------------------------------------- validate

int cmd_validate(const Config& c, std::ostream& out, std::ostream& err) {
  ParseResult parsed = load_annotations(c);
  print_diagnostics(err, parsed.diagnostics, c.annotations);
  std::size_t rejected = parsed.diagnostics.size();
  std::size_t kept = parsed.records.size();
  if (c.eligibility) {
    EligibilityRule rule{{c.iou_min, c.area_min}, 1, 10};
    for (const auto& r : parsed.records) {
      const auto n = valid_overlap_pairs(r, rule.thresholds).size();
      if (n < rule.min_pairs || n > rule.max_pairs) {
        err << c.annotations << ": [" << r.id << "] " << n << " valid overlap pairs, outside [" << rule.min_pairs
            << ", " << rule.max_pairs << "]\n";
        ++rejected;
        --kept;
      }
    }
  }
  out << "records: " << kept << " kept, " << rejected << " rejected\n";
  return rejected == 0 ? kExitOk : kExitFailure;
}

// ------------------------------------------------------------------- score

int cmd_score(const Config& c, const json& resolved, std::ostream& out, std::ostream& err) {
  const auto thresholds = thresholds_of(c);
  if (!(c.bin_width > 0)) throw ConfigError("bin width must be positive");
  ParseResult parsed = load_annotations(c);
  print_diagnostics(err, parsed.diagnostics, c.annotations);
  if (c.embeddings.empty()) throw ConfigError("missing required path: embeddings");
  EmbeddingStore store = [&] {
    try {
      return load_store_file(c.embeddings);
    } catch (const EmbeddingError& e) {
      throw IoError(e.what());
    }
  }();
  auto service = make_service(c);
  const CaptionEmbedder embed = store_embedder(store, service.get());

  std::vector<ScoredLayout> scored;
  std::vector<std::string> missing;
  for (const auto& r : parsed.records) {
    try {
      scored.push_back(overlay_score(r, embed, {c.clamp_negative_cosine}));
    } catch (const EmbeddingError& e) {
      missing.push_back(e.what());
    }
  }
  if (!missing.empty()) {
    err << "missing embeddings; no scored output written:\n";
    for (const auto& m : missing) err << "  " << m << '\n';
    return kExitFailure;
  }

  std::ostringstream body;
  body << provenance("score", resolved, {c.annotations, c.embeddings});
  body << "# thresholds simple_regular=" << thresholds.simple_regular
       << " regular_complex=" << thresholds.regular_complex << '\n';
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& s : scored) {
    const Split b = bucket(s.score, thresholds);
    ++counts[static_cast<int>(b)];
    body << serialize_scored(s, b) << '\n';
  }
  if (!c.out.empty()) {
    write_file(c.out, body.str());
  } else {
    out << body.str();
  }

  const auto dist = score_distribution(scored, c.bin_width);
  std::ostream& report = c.out.empty() ? err : out;
  report << "thresholds: simple<=" << thresholds.simple_regular << " < regular <=" << thresholds.regular_complex
         << " < complex\n";
  report << "buckets: simple=" << counts[0] << " regular=" << counts[1] << " complex=" << counts[2] << '\n';
  if (dist.summary) {
    report << std::setprecision(6) << "summary: n=" << scored.size() << " mean=" << dist.summary->mean
           << " median=" << dist.summary->median << " max=" << dist.summary->max << '\n';
  }
  for (const auto& [edge, n] : dist.histogram) {
    report << "  [" << std::setw(8) << edge << ", " << std::setw(8) << edge + c.bin_width << ") " << n << '\n';
  }
  return kExitOk;
}

// -------------------------------------------------------------------- eval

struct SeedData {
  std::map<std::string, DetectionSet> detections;
  std::map<std::string, JudgmentFile> judgments;
};

int cmd_eval(const Config& c, const json& resolved, std::ostream& out, std::ostream& err) {
  ParseResult parsed = load_annotations(c);
  print_diagnostics(err, parsed.diagnostics, c.annotations);
  bool failed = !parsed.diagnostics.empty();
  if (c.detections.empty()) throw ConfigError("missing required path: detections");

  const MatchScope scope = c.scope == "global" ? MatchScope::Global : MatchScope::PerCategory;
  if (c.scope != "global" && c.scope != "per-category") throw ConfigError("scope must be per-category or global");
  if (c.omiou_pairs != "relationships" && c.omiou_pairs != "overlap") {
    throw ConfigError("o-miou-pairs must be relationships or overlap");
  }
  const MatchOptions match_opts{c.min_match_iou};

  std::map<std::string, SeedData> seeds;
  for (const auto& path : c.detections) {
    auto in = open_input(path, "detections");
    auto det = parse_detections(in);
    print_diagnostics(err, det.diagnostics, path);
    failed |= !det.diagnostics.empty();
    for (auto& d : det.sets) seeds[d.seed].detections[d.record_id] = std::move(d);
  }
  for (const auto& path : c.judgments) {
    auto in = open_input(path, "judgments");
    auto jp = parse_judgments(in);
    print_diagnostics(err, jp.diagnostics, path);
    failed |= !jp.diagnostics.empty();
    for (auto& j : jp.files) seeds[j.seed].judgments[j.record_id] = std::move(j);
  }

  std::map<std::string, std::string> split_of;
  if (!c.scored.empty()) {
    auto in = open_input(c.scored, "scored");
    for (const auto& e : parse_scored(in)) split_of[e.layout.id] = std::string(to_string(e.bucket));
  }

  std::optional<EmbeddingStore> store;
  if (!c.embeddings.empty()) {
    try {
      store = load_store_file(c.embeddings);
    } catch (const EmbeddingError& e) {
      throw IoError(e.what());
    }
  }
  auto service = make_service(c);
  const ClipScoreOptions clip_opts{c.clip_scale, true};
  auto image_emb = [&](const std::string& seed, const std::string& key) -> std::optional<EmbeddingVector> {
    EmbeddingVector v;
    if (store->try_get(seed + ":" + key, v) || store->try_get(key, v)) return v;
    return std::nullopt;
  };

  std::vector<std::string> inputs{c.annotations, c.scored, c.embeddings};
  inputs.insert(inputs.end(), c.detections.begin(), c.detections.end());
  inputs.insert(inputs.end(), c.judgments.begin(), c.judgments.end());
  std::ostringstream metrics_body;
  metrics_body << provenance("eval", resolved, inputs);

  std::vector<RunResult> runs;
  std::map<std::string, RunResult> by_key;
  std::size_t clip_missing = 0;
  double micro_iou_sum = 0.0;
  std::size_t micro_gt = 0;
  std::size_t sr_yes[2] = {0, 0}, sr_total[2] = {0, 0};

  for (const auto& seed : c.seeds) {
    auto sit = seeds.find(seed);
    if (sit == seeds.end() || sit->second.detections.empty()) {
      err << "warning: no detections for seed " << seed << "; run skipped\n";
      failed = true;
      continue;
    }
    const SeedData& sd = sit->second;
    for (const auto& r : parsed.records) {
      const std::string split = split_of.count(r.id) ? split_of[r.id]
                                : r.split             ? std::string(to_string(*r.split))
                                                      : std::string("all");
      std::map<std::string, double> m;

      DetectionSet det{r.id, seed, {}};
      if (auto it = sd.detections.find(r.id); it != sd.detections.end()) {
        det = it->second;
      } else {
        err << "warning: seed " << seed << " has no detections for '" << r.id << "'; scored as empty\n";
      }
      const auto mi = miou(r, det, scope, match_opts);
      m["miou"] = mi.value;
      micro_iou_sum += mi.iou_sum;
      micro_gt += mi.count;
      const auto pairs = c.omiou_pairs == "overlap" ? overlap_pairs(r, {c.iou_min, c.area_min}) : relationship_pairs(r);
      const auto om = o_miou(r, det, pairs, scope, match_opts);
      for (const auto& d : om.diagnostics) err << "note: " << d << '\n';
      if (om.value) m["o_miou"] = *om.value;

      if (auto it = sd.judgments.find(r.id); it != sd.judgments.end()) {
        const auto problems = validate_judgment(it->second, r);
        if (!problems.empty()) {
          for (const auto& p : problems) err << "seed " << seed << ": " << p << '\n';
          failed = true;
        } else {
          const std::vector<JudgmentFile> one{it->second};
          const auto e = success_rate(one, VerdictKind::Entity);
          const auto rel = success_rate(one, VerdictKind::Relationship);
          if (e.pooled) m["sr_e"] = *e.pooled;
          if (rel.pooled) m["sr_r"] = *rel.pooled;
          sr_yes[0] += e.yes, sr_total[0] += e.total;
          sr_yes[1] += rel.yes, sr_total[1] += rel.total;
        }
      } else if (!c.judgments.empty()) {
        err << "warning: seed " << seed << " has no judgments for '" << r.id << "'\n";
      }

      if (store) {
        try {
          if (auto img = image_emb(seed, r.id)) {
            m["clip_global"] = clip_score(*img, get_embedding(*store, r.global_caption, service.get()), clip_opts);
          } else {
            ++clip_missing;
          }
          double local = 0.0;
          std::size_t n_local = 0;
          for (const auto& inst : r.instances) {
            if (auto img = image_emb(seed, r.id + "#" + inst.name)) {
              local += clip_score(*img, get_embedding(*store, inst.caption, service.get()), clip_opts);
              ++n_local;
            } else {
              ++clip_missing;
            }
          }
          if (n_local) m["clip_local"] = local / static_cast<double>(n_local);
        } catch (const EmbeddingError& e) {
          err << "warning: " << e.what() << '\n';
          ++clip_missing;
        }
      }

      auto& run = by_key[seed + "\n" + split];
      run.seed = seed;
      run.split = split;
      for (const auto& [k, v] : m) run.add(k, r.id, v);
      metrics_body << serialize_record_metrics(seed, split, r.id, m) << '\n';
    }
  }
  if (clip_missing) err << "warning: " << clip_missing << " image embeddings unavailable; CLIP cells cover the rest\n";

  if (!c.out.empty()) write_file(c.out, metrics_body.str());
  for (auto& [_, r] : by_key) runs.push_back(std::move(r));
  if (runs.empty()) {
    err << "no runs evaluated\n";
    return kExitFailure;
  }

  const AggregateOptions agg{c.std_kind == "sample" ? StdKind::Sample : StdKind::Population,
                             c.pooling == "micro" ? Pooling::Micro : Pooling::Macro};
  const ReportTable table = aggregate(runs, agg);
  const RenderOptions ropts{c.format == "csv" ? RenderFormat::Csv : RenderFormat::Text, true, c.fid};
  const std::string rendered = render(table, ropts);
  if (!c.table_out.empty()) {
    write_file(c.table_out, rendered);
  } else {
    out << rendered;
  }
  auto pct = [](double num, std::size_t den) {
    if (!den) return std::string("-");
    char b[32];
    std::snprintf(b, sizeof b, "%.2f", 100.0 * num / static_cast<double>(den));
    return std::string(b);
  };
  err << "micro: mIoU=" << pct(micro_iou_sum, micro_gt) << " SR_E=" << pct(static_cast<double>(sr_yes[0]), sr_total[0])
      << " SR_R=" << pct(static_cast<double>(sr_yes[1]), sr_total[1]) << '\n';
  return failed ? kExitFailure : kExitOk;
}

// ------------------------------------------------------------ losses-check

int cmd_losses_check(const Config& c, std::ostream& out) {
  if (c.trials < 0 || c.min_size < 1 || c.max_size < c.min_size) throw ConfigError("invalid trial settings");
  double worst_token = 0.0, worst_pixel = 0.0;
  out << std::setprecision(6);

  for (const auto& path : c.fixtures) {
    LossFixture f = [&] {
      try {
        return read_loss_fixture_file(path);
      } catch (const LossError& e) {
        throw IoError(e.what());
      }
    }();
    const auto tok = finite_diff_check<double>(LossKind::Token, f.maps, f.masks, c.fd_step);
    const double token = token_loss<double>(f.maps, f.masks);
    double pixel = 0.0;
    for (std::size_t i = 0; i < f.maps.size(); ++i) {
      pixel += pixel_loss(f.maps[i], f.masks[i], PixelLossOptions{1e-6, ProbabilityMap::MaxScale});
    }
    pixel /= static_cast<double>(f.maps.size());
    out << "fixture " << path << ": token=" << token << " pixel=" << pixel
        << " token_grad_rel_err=" << tok.max_rel_error << '\n';
    worst_token = std::max(worst_token, tok.max_rel_error);
  }

  std::mt19937_64 rng(c.rng_seed);
  std::uniform_int_distribution<int> size(c.min_size, c.max_size);
  std::uniform_int_distribution<int> count(1, 4);
  std::uniform_real_distribution<double> att(0.05, 1.0);
  std::uniform_real_distribution<double> prob(0.05, 0.95);
  std::bernoulli_distribution bit(0.5);
  for (int t = 0; t < c.trials; ++t) {
    const int h = size(rng), w = size(rng), n = count(rng);
    std::vector<AttentionMap<double>> maps, probs;
    std::vector<AmodalMask<double>> masks;
    for (int i = 0; i < n; ++i) {
      Grid<double> a(h, w), p(h, w), m(h, w);
      for (Eigen::Index u = 0; u < a.size(); ++u) {
        a(u) = att(rng);
        p(u) = prob(rng);
        m(u) = bit(rng) ? 1.0 : 0.0;
      }
      maps.emplace_back(std::move(a));
      probs.emplace_back(std::move(p));
      masks.emplace_back(std::move(m));
    }
    worst_token = std::max(worst_token, finite_diff_check<double>(LossKind::Token, maps, masks, c.fd_step).max_rel_error);
    worst_pixel = std::max(worst_pixel, finite_diff_check<double>(LossKind::Pixel, probs, masks, c.fd_step).max_rel_error);
  }
  out << "token loss: max relative gradient error " << worst_token << '\n';
  out << "pixel loss: max relative gradient error " << worst_pixel << '\n';
  const bool ok = worst_token < c.tolerance && worst_pixel < c.tolerance;
  out << (ok ? "PASS" : "FAIL") << " (tolerance " << c.tolerance << ")\n";
  return ok ? kExitOk : kExitFailure;
}

// ------------------------------------------------------------------ report

int cmd_report(const Config& c, std::ostream& out) {
  if (c.metrics.empty()) throw ConfigError("missing required path: metrics");
  std::vector<RunResult> runs;
  for (const auto& path : c.metrics) {
    auto in = open_input(path, "metrics");
    try {
      auto part = parse_run_results(in);
      runs.insert(runs.end(), part.begin(), part.end());
    } catch (const std::invalid_argument& e) {
      throw IoError(path + ": " + e.what());
    }
  }
  if (runs.empty()) {
    out << "no runs found\n";
    return kExitFailure;
  }
  const AggregateOptions agg{c.std_kind == "sample" ? StdKind::Sample : StdKind::Population,
                             c.pooling == "micro" ? Pooling::Micro : Pooling::Macro};
  const std::string rendered =
      render(aggregate(runs, agg), {c.format == "csv" ? RenderFormat::Csv : RenderFormat::Text, true, c.fid});
  if (!c.table_out.empty()) {
    write_file(c.table_out, rendered);
  } else {
    out << rendered;
  }
  return kExitOk;
}

// ------------------------------------------------------------- audit-serve

AuditServer* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

int cmd_audit_serve(const Config& c, std::ostream& out, std::ostream& err) {
  ParseResult parsed = load_annotations(c);
  print_diagnostics(err, parsed.diagnostics, c.annotations);
  auto scored_in = open_input(c.scored, "scored");
  std::vector<std::string> missing;
  auto tasks = build_tasks(parsed.records, parse_scored(scored_in), c.image_template, &missing);
  for (const auto& id : missing) err << "warning: record '" << id << "' has no score; not served\n";

  AuditStore store(std::move(tasks), {c.log, default_checks(), {}});
  AuditServer server(store, {c.bind, c.port, c.static_dir, c.export_path, 50});
  try {
    server.bind();
  } catch (const AuditError& e) {
    err << e.what() << '\n';
    return kExitIo;
  }
  out << "audit service on http://" << c.bind << ":" << server.port() << " (" << store.size() << " tasks)"
      << std::endl;
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.listen();
  g_server = nullptr;
  return kExitOk;
}

json read_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ConfigError("config file is not a JSON object: " + path);
  return j;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Config c;
  CLI::App app{"Layout-to-image benchmark evaluation toolkit", "l2ieval"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  std::map<std::string, std::unique_ptr<Binder>> binders;
  auto sub = [&](const std::string& name, const std::string& desc) {
    CLI::App* s = app.add_subcommand(name, desc);
    s->add_option("--config", c.config_file, "JSON config file; explicit flags win");
    s->add_flag("--print-config", c.print_config, "Print the resolved configuration and exit");
    auto& b = binders[name] = std::make_unique<Binder>(s);
    return b.get();
  };

  sub("validate", "Validate an annotation file")
      ->option("--annotations", c.annotations, "Annotation file (record per line)")
      .flag("--eligibility", c.eligibility, "Also require 1-10 valid overlap pairs per record")
      .option("--iou-min", c.iou_min, "Valid pair IoU threshold (strict)")
      .option("--area-min", c.area_min, "Valid pair intersection-area threshold (strict)");

  sub("score", "Score layout difficulty and bucket records")
      ->option("--annotations", c.annotations, "Annotation file")
      .option("--embeddings", c.embeddings, "Embedding store")
      .option("--out", c.out, "Scored output file (stdout when empty)")
      .option("--t-simple-regular", c.t_simple_regular, "Simple/regular cut point")
      .option("--t-regular-complex", c.t_regular_complex, "Regular/complex cut point")
      .option("--bin-width", c.bin_width, "Histogram bin width")
      .flag("--clamp-negative-cosine", c.clamp_negative_cosine, "Clamp negative caption similarities at 0")
      .option("--embed-url", c.embed_url, "Embedding service base URL")
      .option("--embed-timeout-ms", c.embed_timeout_ms, "Embedding service timeout")
      .option("--embed-retries", c.embed_retries, "Embedding service retry count");

  sub("eval", "Evaluate detections and judgments against annotations")
      ->option("--annotations", c.annotations, "Annotation file")
      .option("--detections", c.detections, "Detection files")
      .option("--judgments", c.judgments, "Judgment files")
      .option("--scored", c.scored, "Scored file giving each record's split")
      .option("--embeddings", c.embeddings, "Embedding store for CLIP scores")
      .option("--seeds", c.seeds, "Seed labels to evaluate")
      .option("--scope", c.scope, "per-category or global matching")
      .option("--o-miou-pairs", c.omiou_pairs, "relationships or overlap")
      .option("--min-match-iou", c.min_match_iou, "Treat matches with IoU <= this as unmatched")
      .option("--iou-min", c.iou_min, "Valid pair IoU threshold for overlap pairs")
      .option("--area-min", c.area_min, "Valid pair area threshold for overlap pairs")
      .option("--clip-scale", c.clip_scale, "CLIP score scale")
      .option("--out", c.out, "Per-record metrics output file")
      .option("--table-out", c.table_out, "Rendered table output (stdout when empty)")
      .option("--format", c.format, "text or csv")
      .option("--std", c.std_kind, "population or sample")
      .option("--pooling", c.pooling, "macro or micro")
      .flag("--fid", c.fid, "Add an FID column rendered as n/a")
      .option("--embed-url", c.embed_url, "Embedding service base URL")
      .option("--embed-timeout-ms", c.embed_timeout_ms, "Embedding service timeout")
      .option("--embed-retries", c.embed_retries, "Embedding service retry count");

  sub("losses-check", "Gradient check for the alignment loss kernels")
      ->option("--fixtures", c.fixtures, "Map/mask fixture files")
      .option("--trials", c.trials, "Randomized instances")
      .option("--rng-seed", c.rng_seed, "Seed for randomized instances")
      .option("--min-size", c.min_size, "Smallest map side")
      .option("--max-size", c.max_size, "Largest map side")
      .option("--fd-step", c.fd_step, "Central-difference step")
      .option("--tolerance", c.tolerance, "Maximum accepted relative error");

  sub("report", "Aggregate per-record metric files into a table")
      ->option("--metrics", c.metrics, "Per-record metrics files")
      .option("--table-out", c.table_out, "Output file (stdout when empty)")
      .option("--format", c.format, "text or csv")
      .option("--std", c.std_kind, "population or sample")
      .option("--pooling", c.pooling, "macro or micro")
      .flag("--fid", c.fid, "Add an FID column rendered as n/a");

  sub("audit-serve", "Serve the human audit API")
      ->option("--annotations", c.annotations, "Annotation file")
      .option("--scored", c.scored, "Scored file")
      .option("--log", c.log, "Append-only verdict log")
      .option("--bind", c.bind, "Bind address")
      .option("--port", c.port, "Port")
      .option("--static-dir", c.static_dir, "UI bundle directory")
      .option("--export-path", c.export_path, "Default export destination")
      .option("--image-template", c.image_template, "Image reference template; {id} is replaced");

  std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    for (auto* s : app.get_subcommands()) {
      if (s->parsed()) err << s->help();
    }
    return kExitIo;
  }

  CLI::App* chosen = app.get_subcommands().front();
  const std::string name = chosen->get_name();
  try {
    Binder& binder = *binders.at(name);
    binder.resolve(read_config_file(c.config_file));
    const json resolved = binder.dump();
    if (c.print_config) {
      out << json{{"command", name}, {"version", kVersion}, {"config", resolved}}.dump(2) << '\n';
      return kExitOk;
    }
    if (name == "validate") return cmd_validate(c, out, err);
    if (name == "score") return cmd_score(c, resolved, out, err);
    if (name == "eval") return cmd_eval(c, resolved, out, err);
    if (name == "losses-check") return cmd_losses_check(c, out);
    if (name == "report") return cmd_report(c, out);
    if (name == "audit-serve") return cmd_audit_serve(c, out, err);
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitIo;
}

}  // namespace l2i
