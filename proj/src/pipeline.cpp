#include "w2k/pipeline.hpp"

#include <omp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <ctime>
#include <exception>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "w2k/eval.hpp"
#include "w2k/io.hpp"
#include "w2k/rng.hpp"
#include "w2k/timing.hpp"

namespace w2k::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Seed-path tags. Changing one changes every downstream artifact.
enum SeedTag : std::uint64_t {
  kTagGenerator = 1,
  kTagEdgeSplit = 2,
  kTagPartition = 3,
  kTagWalk = 4,
  kTagSkipGram = 5,
  kTagTarget = 6,
  kTagFinetune = 7,
  kTagRelation = 8,
  kTagTransform = 9,
};

std::uint64_t bucket_seed(const PipelineConfig& cfg, SeedTag tag, const SizeBucket& b) {
  return derive_seed(cfg.seed, {tag, b.min_nodes, b.max_nodes});
}

std::uint64_t graph_seed(const PipelineConfig& cfg, SeedTag tag, const SizeBucket& b, std::size_t id) {
  return derive_seed(cfg.seed, {tag, b.min_nodes, b.max_nodes, id});
}

std::string graph_file(std::size_t id, std::string_view ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "g%04zu", id);
  return std::string(buf) + std::string(ext);
}

// Shortest round-trip decimal; deterministic across runs.
std::string num(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// ---- config --------------------------------------------------------------

std::string_view source_name(SourceMethod m) { return m == SourceMethod::kDeepWalk ? "deepwalk" : "node2vec"; }

template <typename T>
T get(const json& doc, const char* section, const char* key) {
  const json& v = section ? doc.at(section).at(key) : doc.at(key);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config: bad value for ") + (section ? std::string(section) + "." : "") + key);
  }
}

// Rejects keys absent from `reference` and type changes between number,
// string, bool, array and object.
void check_shape(const json& reference, const json& doc, const std::string& prefix) {
  if (!doc.is_object()) throw ConfigError("config: " + (prefix.empty() ? "document" : prefix) + " must be an object");
  for (const auto& [key, value] : doc.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!reference.contains(key)) throw ConfigError("config: unknown key " + path);
    const json& ref = reference.at(key);
    if (ref.is_object()) {
      check_shape(ref, value, path);
    } else if (ref.is_number() != value.is_number() || ref.is_string() != value.is_string() ||
               ref.is_boolean() != value.is_boolean() || ref.is_array() != value.is_array()) {
      throw ConfigError("config: wrong type for " + path);
    }
  }
}

// ---- manifest ------------------------------------------------------------

enum class Stage { kPrepare, kEmbed, kTrainKg, kTrainTransform, kApply, kEvaluate, kBench, kReport };

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::kPrepare: return "prepare";
    case Stage::kEmbed: return "embed";
    case Stage::kTrainKg: return "train-kg";
    case Stage::kTrainTransform: return "train-transform";
    case Stage::kApply: return "apply";
    case Stage::kEvaluate: return "evaluate";
    case Stage::kBench: return "bench";
    case Stage::kReport: return "report";
  }
  return "?";
}

// Hash of the config sections a stage's outputs depend on. Used to detect
// artifacts left over from a different configuration.
std::string fingerprint(const PipelineConfig& cfg, Stage stage) {
  const json full = to_json(cfg);
  json sub;
  sub["dataset"] = full["dataset"];
  sub["holdout_fraction"] = full["holdout_fraction"];
  sub["split_ratios"] = full["split_ratios"];
  sub["seed"] = full["seed"];
  if (stage >= Stage::kEmbed) {
    sub["source"] = full["source"];
    sub["dim"] = full["dim"];
  }
  if (stage >= Stage::kTrainKg) sub["target"] = full["target"];
  if (stage >= Stage::kTrainTransform) {
    sub["transform"] = full["transform"];
    if (cfg.pool_buckets) sub["size_buckets"] = full["size_buckets"];
  }
  const std::string text = sub.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct StageRecord {
  StageRecord(Stage s, std::string sc) : stage(s), scope(std::move(sc)), started_at(utc_now()) {}

  Stage stage;
  std::string scope;  // bucket label, "pooled" or "all"
  std::vector<fs::path> artifacts;
  std::vector<fs::path> inputs;
  json seeds = json::object();
  json lineage = json::object();
  std::string started_at;
};

class Manifest {
 public:
  explicit Manifest(const Layout& layout) : layout_(layout) {
    if (fs::exists(layout.manifest())) {
      doc_ = read_json(layout.manifest());
    } else {
      doc_ = {{"tool", "w2k"}, {"version", kVersion}, {"stages", json::array()}};
    }
  }

  const json* find(Stage stage, const std::string& scope) const {
    for (const json& e : doc_["stages"]) {
      if (e.value("stage", "") == stage_name(stage) && e.value("scope", "") == scope) return &e;
    }
    return nullptr;
  }

  // Throws MissingArtifact unless `stage` ran for `scope` under the current
  // config and its artifacts are still on disk.
  void require(const PipelineConfig& cfg, Stage stage, const std::string& scope) const {
    const std::string name(stage_name(stage));
    const std::string remedy = "run `w2k " + name + "` with the same config first";
    const json* e = find(stage, scope);
    if (e == nullptr) {
      throw MissingArtifact("no " + name + " output for " + scope + " under " + layout_.root().string(), remedy);
    }
    if (e->value("fingerprint", "") != fingerprint(cfg, stage)) {
      throw MissingArtifact(name + " output for " + scope + " is stale (config changed)", remedy);
    }
    for (const json& a : e->at("artifacts")) {
      const fs::path p = layout_.root() / a.get<std::string>();
      if (!fs::exists(p)) throw MissingArtifact("missing artifact " + p.string(), remedy);
    }
  }

  void record(const PipelineConfig& cfg, const StageRecord& r) {
    auto relative = [&](const std::vector<fs::path>& paths) {
      json out = json::array();
      for (const fs::path& p : paths) out.push_back(p.lexically_relative(layout_.root()).generic_string());
      return out;
    };
    for (const fs::path& p : r.artifacts) {
      if (!fs::exists(p)) throw std::logic_error("manifest: artifact not written: " + p.string());
    }
    json entry = {{"stage", stage_name(r.stage)},
                  {"scope", r.scope},
                  {"fingerprint", fingerprint(cfg, r.stage)},
                  {"seeds", r.seeds},
                  {"artifacts", relative(r.artifacts)},
                  {"inputs", relative(r.inputs)},
                  {"lineage", r.lineage},
                  {"started_at", r.started_at},
                  {"finished_at", utc_now()}};
    json& stages = doc_["stages"];
    auto it = std::find_if(stages.begin(), stages.end(), [&](const json& e) {
      return e.value("stage", "") == stage_name(r.stage) && e.value("scope", "") == r.scope;
    });
    if (it != stages.end()) {
      *it = std::move(entry);
    } else {
      stages.push_back(std::move(entry));
    }
    doc_["tool"] = "w2k";
    doc_["version"] = kVersion;
    doc_["config"] = to_json(cfg);
    io::write_file_atomic(layout_.manifest(), doc_.dump(2) + "\n");
  }

 private:
  const Layout& layout_;
  json doc_;
};

// ---- per-graph work --------------------------------------------------------

// Runs fn(i) for i in [0, count) on up to `jobs` threads. With jobs > 1 the
// inner OpenMP regions run serially so per-graph thread CPU time is complete.
template <typename F>
void for_each_index(std::size_t count, std::size_t jobs, F&& fn) {
  if (jobs <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  omp_set_max_active_levels(1);
  std::exception_ptr error;
  const long n = static_cast<long>(count);
#pragma omp parallel for schedule(dynamic) num_threads(static_cast<int>(jobs))
  for (long i = 0; i < n; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(w2k_pipeline_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

// CPU time of one unit of work. Serial runs charge the whole process (inner
// parallel regions included); parallel runs charge the worker thread.
template <typename F>
auto measure(std::size_t jobs, F&& fn) {
  const auto wall0 = std::chrono::steady_clock::now();
  const bool per_thread = jobs > 1;
  const double cpu0 = per_thread ? thread_cpu_seconds() : process_cpu_seconds();
  auto value = fn();
  StageTiming t;
  t.cpu_seconds = (per_thread ? thread_cpu_seconds() : process_cpu_seconds()) - cpu0;
  t.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  return std::pair{std::move(value), t};
}

EmbeddingMatrix make_source(const PipelineConfig& cfg, const SizeBucket& b, const GraphRecord& rec) {
  WalkConfig w = cfg.walk;
  if (cfg.source == SourceMethod::kDeepWalk) {
    w.return_param_p = 1.0;
    w.inout_param_q = 1.0;
  }
  w.seed = graph_seed(cfg, kTagWalk, b, rec.id);
  SkipGramConfig s = cfg.skipgram;
  s.dim = cfg.dim;
  s.seed = graph_seed(cfg, kTagSkipGram, b, rec.id);
  return embed(rec.edges.train_graph, w, s);
}

KgTrainConfig kg_config(const PipelineConfig& cfg, SeedTag tag, const SizeBucket& b, std::size_t id) {
  KgTrainConfig k = cfg.kg;
  k.dim = cfg.dim;
  k.seed = graph_seed(cfg, tag, b, id);
  k.relation_seed = relation_seed(cfg);
  return k;
}

// Timings live beside the artifacts but are kept out of them, since they are
// the only run-dependent outputs.
using TimingTable = std::map<std::pair<std::string, std::size_t>, StageTiming>;

void write_timings(const fs::path& path, const TimingTable& table) {
  json records = json::array();
  for (const auto& [key, t] : table) {
    records.push_back({{"label", key.first}, {"id", key.second}, {"cpu_seconds", t.cpu_seconds},
                       {"wall_seconds", t.wall_seconds}});
  }
  io::write_file_atomic(path, json{{"records", records}}.dump(1) + "\n");
}

TimingTable read_timings(const fs::path& path) {
  TimingTable table;
  const json doc = read_json(path);
  for (const json& r : doc.at("records")) {
    table[{r.at("label").get<std::string>(), r.at("id").get<std::size_t>()}] =
        StageTiming{r.at("cpu_seconds").get<double>(), r.at("wall_seconds").get<double>()};
  }
  return table;
}

StageTiming lookup(const TimingTable& t, const std::string& label, std::size_t id) {
  auto it = t.find({label, id});
  if (it == t.end()) throw DataError("no " + label + " timing recorded for graph " + std::to_string(id));
  return it->second;
}

EmbeddingMatrix load_any_embedding(const fs::path& path) {
  {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    char magic[5] = {};
    in.read(magic, 5);
    if (in.gcount() == 5 && std::string_view(magic, 5) == "EMBE1") return io::load_embedding(path);
  }
  return EmbeddingMatrix(io::load_embedding_text(path), Provenance::kSource);
}

std::vector<SizeBucket> sorted_buckets(const PipelineConfig& cfg) {
  auto out = cfg.buckets;
  std::sort(out.begin(), out.end(), [](const SizeBucket& a, const SizeBucket& b) {
    return std::pair{a.min_nodes, a.max_nodes} < std::pair{b.min_nodes, b.max_nodes};
  });
  return out;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// Minimal reader for the CSV files this module writes (header + plain cells).
std::vector<std::map<std::string, std::string>> read_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  std::vector<std::string> header;
  std::vector<std::map<std::string, std::string>> rows;
  auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::stringstream ss(l);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!l.empty() && l.back() == ',') cells.emplace_back();
    return cells;
  };
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty CSV");
  header = split(line);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != header.size()) throw ParseError(path.string(), line_no, "wrong number of columns");
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < cells.size(); ++i) row[header[i]] = cells[i];
    rows.push_back(std::move(row));
  }
  return rows;
}

double to_double(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw DataError("not a number: " + s);
  return v;
}

std::size_t to_size(const std::string& s) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw DataError("not an integer: " + s);
  return v;
}

}  // namespace

// ---- config ----------------------------------------------------------------

std::string SizeBucket::label() const { return std::to_string(min_nodes) + "-" + std::to_string(max_nodes); }

SizeBucket parse_bucket(std::string_view text) {
  const auto dash = text.find('-');
  SizeBucket b;
  auto parse = [&](std::string_view part, std::size_t& out) {
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
    return ec == std::errc() && ptr == part.data() + part.size() && !part.empty();
  };
  if (dash == std::string_view::npos || !parse(text.substr(0, dash), b.min_nodes) ||
      !parse(text.substr(dash + 1), b.max_nodes)) {
    throw ConfigError("size bucket must look like MIN-MAX, got '" + std::string(text) + "'");
  }
  if (b.min_nodes < 2 || b.min_nodes > b.max_nodes) {
    throw ConfigError("size bucket " + std::string(text) + " needs 2 <= MIN <= MAX");
  }
  return b;
}

void PipelineConfig::validate() const {
  auto wrap = [](auto&& fn) {
    try {
      fn();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  };
  if (buckets.empty()) throw ConfigError("at least one size bucket is required");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) throw ConfigError("holdout_fraction must lie in [0, 1)");
  if (dim < 1) throw ConfigError("dim must be >= 1");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  const double sum = split_ratios.train + split_ratios.validation + split_ratios.test;
  if (split_ratios.train < 0 || split_ratios.validation < 0 || split_ratios.test < 0 || std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("split_ratios must be non-negative and sum to 1");
  }
  if (!synthetic && (edges_path.empty() || communities_path.empty())) {
    throw ConfigError("dataset.edges and dataset.communities are required unless dataset.synthetic is set");
  }
  if (synthetic && generator.graph_count < 3) throw ConfigError("dataset.graphs must be >= 3");
  if (!(generator.intra_prob >= 0 && generator.intra_prob <= 1 && generator.inter_prob >= 0 &&
        generator.inter_prob <= 1)) {
    throw ConfigError("dataset edge probabilities must lie in [0, 1]");
  }
  if (generator.block_size < 1) throw ConfigError("dataset.block_size must be >= 1");
  wrap([&] { walk.validate(); });
  wrap([&] { skipgram.validate(); });
  wrap([&] { kg.validate(); });
  wrap([&] { transform.validate(); });
}

json to_json(const PipelineConfig& cfg) {
  json buckets = json::array();
  for (const SizeBucket& b : cfg.buckets) buckets.push_back(b.label());
  return {
      {"dataset",
       {{"name", cfg.dataset_name},
        {"synthetic", cfg.synthetic},
        {"edges", cfg.edges_path.string()},
        {"communities", cfg.communities_path.string()},
        {"graphs", cfg.generator.graph_count},
        {"intra_prob", cfg.generator.intra_prob},
        {"inter_prob", cfg.generator.inter_prob},
        {"block_size", cfg.generator.block_size},
        {"min_edges", cfg.generator.min_edges}}},
      {"size_buckets", buckets},
      {"source",
       {{"method", source_name(cfg.source)},
        {"walks_per_node", cfg.walk.walks_per_node},
        {"walk_length", cfg.walk.walk_length},
        {"p", cfg.walk.return_param_p},
        {"q", cfg.walk.inout_param_q},
        {"window", cfg.skipgram.window},
        {"negatives", cfg.skipgram.negatives_per_positive},
        {"epochs", cfg.skipgram.epochs},
        {"learning_rate", cfg.skipgram.learning_rate},
        {"min_learning_rate", cfg.skipgram.min_learning_rate}}},
      {"target",
       {{"method", to_string(cfg.target)},
        {"margin", cfg.kg.margin},
        {"learning_rate", cfg.kg.learning_rate},
        {"epochs", cfg.kg.epochs},
        {"negatives", cfg.kg.negatives_per_positive},
        {"norm", cfg.kg.norm_order},
        {"weight_decay", cfg.kg.weight_decay}}},
      {"transform",
       {{"batch_size", cfg.transform.batch_size},
        {"learning_rate", cfg.transform.learning_rate},
        {"epochs", cfg.transform.epochs},
        {"max_grad_norm", cfg.transform.max_grad_norm},
        {"pool_buckets", cfg.pool_buckets}}},
      {"holdout_fraction", cfg.holdout_fraction},
      {"split_ratios",
       {{"train", cfg.split_ratios.train}, {"validation", cfg.split_ratios.validation}, {"test", cfg.split_ratios.test}}},
      {"dim", cfg.dim},
      {"seed", cfg.seed},
      {"out", cfg.out_dir.string()},
      {"jobs", cfg.jobs},
  };
}

PipelineConfig config_from_json(const json& doc) {
  json merged = to_json(PipelineConfig{});
  check_shape(merged, doc, "");
  merged.merge_patch(doc);

  PipelineConfig cfg;
  cfg.dataset_name = get<std::string>(merged, "dataset", "name");
  cfg.synthetic = get<bool>(merged, "dataset", "synthetic");
  cfg.edges_path = get<std::string>(merged, "dataset", "edges");
  cfg.communities_path = get<std::string>(merged, "dataset", "communities");
  cfg.generator.graph_count = get<std::size_t>(merged, "dataset", "graphs");
  cfg.generator.intra_prob = get<double>(merged, "dataset", "intra_prob");
  cfg.generator.inter_prob = get<double>(merged, "dataset", "inter_prob");
  cfg.generator.block_size = get<std::size_t>(merged, "dataset", "block_size");
  cfg.generator.min_edges = get<std::size_t>(merged, "dataset", "min_edges");

  cfg.buckets.clear();
  for (const json& b : merged.at("size_buckets")) {
    if (!b.is_string()) throw ConfigError("size_buckets entries must be strings like \"16-21\"");
    cfg.buckets.push_back(parse_bucket(b.get<std::string>()));
  }

  const auto method = get<std::string>(merged, "source", "method");
  if (method == "deepwalk") {
    cfg.source = SourceMethod::kDeepWalk;
  } else if (method == "node2vec") {
    cfg.source = SourceMethod::kNode2Vec;
  } else {
    throw ConfigError("source.method must be deepwalk or node2vec, got '" + method + "'");
  }
  cfg.walk.walks_per_node = get<std::size_t>(merged, "source", "walks_per_node");
  cfg.walk.walk_length = get<std::size_t>(merged, "source", "walk_length");
  cfg.walk.return_param_p = get<double>(merged, "source", "p");
  cfg.walk.inout_param_q = get<double>(merged, "source", "q");
  cfg.skipgram.window = get<std::size_t>(merged, "source", "window");
  cfg.skipgram.negatives_per_positive = get<std::size_t>(merged, "source", "negatives");
  cfg.skipgram.epochs = get<std::size_t>(merged, "source", "epochs");
  cfg.skipgram.learning_rate = get<double>(merged, "source", "learning_rate");
  cfg.skipgram.min_learning_rate = get<double>(merged, "source", "min_learning_rate");

  const auto target = get<std::string>(merged, "target", "method");
  const auto kind = parse_kg_kind(target);
  if (!kind) throw ConfigError("target.method must be one of transe, transh, transd, distmult, rescal, simple");
  cfg.target = *kind;
  cfg.kg.margin = get<double>(merged, "target", "margin");
  cfg.kg.learning_rate = get<double>(merged, "target", "learning_rate");
  cfg.kg.epochs = get<std::size_t>(merged, "target", "epochs");
  cfg.kg.negatives_per_positive = get<std::size_t>(merged, "target", "negatives");
  cfg.kg.norm_order = get<int>(merged, "target", "norm");
  cfg.kg.weight_decay = get<double>(merged, "target", "weight_decay");

  cfg.transform.batch_size = get<std::size_t>(merged, "transform", "batch_size");
  cfg.transform.learning_rate = get<double>(merged, "transform", "learning_rate");
  cfg.transform.epochs = get<std::size_t>(merged, "transform", "epochs");
  cfg.transform.max_grad_norm = get<double>(merged, "transform", "max_grad_norm");
  cfg.pool_buckets = get<bool>(merged, "transform", "pool_buckets");

  cfg.holdout_fraction = get<double>(merged, nullptr, "holdout_fraction");
  cfg.split_ratios.train = get<double>(merged, "split_ratios", "train");
  cfg.split_ratios.validation = get<double>(merged, "split_ratios", "validation");
  cfg.split_ratios.test = get<double>(merged, "split_ratios", "test");
  cfg.dim = get<std::size_t>(merged, nullptr, "dim");
  cfg.seed = get<std::uint64_t>(merged, nullptr, "seed");
  cfg.out_dir = get<std::string>(merged, nullptr, "out");
  cfg.jobs = get<std::size_t>(merged, nullptr, "jobs");
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(doc);
}

void apply_override(json& doc, std::string_view dotted, std::string_view value) {
  json* node = &doc;
  std::string path(dotted);
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(key)) throw ConfigError("unknown config key " + path);
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_object()) throw ConfigError("config key " + path + " is a section, not a value");
  const std::string text(value);
  if (node->is_string()) {
    *node = text;
    return;
  }
  json parsed = json::parse(text, nullptr, false);
  if (node->is_array() && !parsed.is_array()) {
    json list = json::array();
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) list.push_back(item);
    *node = list;
    return;
  }
  if (parsed.is_discarded()) throw ConfigError("bad value for " + path + ": " + text);
  *node = parsed;
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "?";
}

std::vector<const GraphRecord*> BucketData::in_split(Split s) const {
  std::vector<const GraphRecord*> out;
  for (const GraphRecord& g : graphs) {
    if (g.split == s) out.push_back(&g);
  }
  return out;
}

fs::path Layout::source(const SizeBucket& b, std::size_t id) const {
  return bucket_dir(b) / "source" / graph_file(id, ".emb");
}
fs::path Layout::target(const SizeBucket& b, std::size_t id) const {
  return bucket_dir(b) / "target" / graph_file(id, ".kgm");
}
fs::path Layout::finetuned(const SizeBucket& b, std::size_t id) const {
  return bucket_dir(b) / "finetuned" / graph_file(id, ".kgm");
}
fs::path Layout::transformed(const SizeBucket& b, std::size_t id) const {
  return bucket_dir(b) / "transformed" / graph_file(id, ".emb");
}
fs::path Layout::timings(const SizeBucket& b, std::string_view stage) const {
  return bucket_dir(b) / "timings" / (std::string(stage) + ".json");
}
fs::path Layout::transform_dir(const SizeBucket& b, bool pooled) const {
  return pooled ? root_ / "pooled" / "transform" : bucket_dir(b) / "transform";
}

std::uint64_t relation_seed(const PipelineConfig& cfg) { return derive_seed(cfg.seed, {kTagRelation}); }

// ---- dataset ---------------------------------------------------------------

namespace {

json edges_json(std::span<const Edge> edges) {
  json out = json::array();
  for (const Edge& e : edges) out.push_back({e.u, e.v});
  return out;
}

std::vector<Edge> edges_from_json(const json& j) {
  std::vector<Edge> out;
  for (const json& e : j) out.emplace_back(e.at(0).get<NodeId>(), e.at(1).get<NodeId>());
  return out;
}

std::string pooled_scope(const PipelineConfig& cfg, const SizeBucket& b) {
  return cfg.pool_buckets ? "pooled" : b.label();
}

}  // namespace

BucketData load_bucket(const PipelineConfig& cfg, const SizeBucket& b) {
  const Layout layout(cfg.out_dir);
  const fs::path path = layout.dataset(b);
  if (!fs::exists(path)) throw MissingArtifact("missing " + path.string(), "run `w2k prepare` first");
  const json doc = read_json(path);
  BucketData data;
  data.bucket = b;
  try {
    data.skipped_members = doc.at("skipped_members").get<std::size_t>();
    for (const json& g : doc.at("graphs")) {
      GraphRecord rec;
      rec.id = g.at("id").get<std::size_t>();
      rec.community = g.at("community").get<std::int64_t>();
      const auto split = g.at("split").get<std::string>();
      rec.split = split == "train" ? Split::kTrain : split == "validation" ? Split::kValidation : Split::kTest;
      rec.edges.seed = g.at("split_seed").get<std::uint64_t>();
      rec.edges.train_graph = Graph(g.at("nodes").get<std::size_t>(), edges_from_json(g.at("train_edges")),
                                    rec.community);
      rec.edges.held_out_edges = edges_from_json(g.at("held_out_edges"));
      data.graphs.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return data;
}

// ---- stages ----------------------------------------------------------------

void run_prepare(const PipelineConfig& cfg) {
  cfg.validate();
  const Layout layout(cfg.out_dir);
  Manifest manifest(layout);
  for (const SizeBucket& b : cfg.buckets) {
    StageRecord rec{Stage::kPrepare, b.label()};
    GraphDataset ds;
    if (cfg.synthetic) {
      PlantedPartitionConfig gen = cfg.generator;
      gen.min_nodes = b.min_nodes;
      gen.max_nodes = b.max_nodes;
      const std::uint64_t seed = bucket_seed(cfg, kTagGenerator, b);
      ds = planted_partition_dataset(gen, seed);
      rec.seeds["generator"] = seed;
    } else {
      for (const fs::path& p : {cfg.edges_path, cfg.communities_path}) {
        if (!fs::exists(p)) throw MissingArtifact("dataset file not found: " + p.string(), "check dataset.edges and dataset.communities");
      }
      ds = load_communities(cfg.edges_path, cfg.communities_path, b.min_nodes, b.max_nodes);
      rec.inputs = {cfg.edges_path, cfg.communities_path};
    }

    // A graph needs both a non-empty holdout and training edges to take part.
    std::vector<EdgeSplit> splits;
    std::vector<std::int64_t> communities;
    std::size_t dropped = 0;
    for (std::size_t i = 0; i < ds.graphs.size(); ++i) {
      EdgeSplit s = split_edges(ds.graphs[i], cfg.holdout_fraction, graph_seed(cfg, kTagEdgeSplit, b, i));
      if (s.held_out_edges.empty() || s.train_graph.edge_count() == 0) {
        ++dropped;
        continue;
      }
      communities.push_back(ds.graphs[i].community_id().value_or(static_cast<std::int64_t>(i)));
      splits.push_back(std::move(s));
    }
    if (splits.size() < 3) {
      throw DataError("bucket " + b.label() + ": " + std::to_string(splits.size()) +
                      " usable graphs, need at least 3 to form train/validation/test splits");
    }
    const std::uint64_t partition_seed = bucket_seed(cfg, kTagPartition, b);
    rec.seeds["partition"] = partition_seed;
    const DatasetPartition part = partition_indices(splits.size(), cfg.split_ratios, partition_seed);
    std::vector<Split> which(splits.size(), Split::kTrain);
    for (std::size_t i : part.validation) which[i] = Split::kValidation;
    for (std::size_t i : part.test) which[i] = Split::kTest;

    json graphs = json::array();
    for (std::size_t i = 0; i < splits.size(); ++i) {
      graphs.push_back({{"id", i},
                        {"community", communities[i]},
                        {"split", to_string(which[i])},
                        {"nodes", splits[i].train_graph.node_count()},
                        {"split_seed", splits[i].seed},
                        {"train_edges", edges_json(splits[i].train_graph.edges())},
                        {"held_out_edges", edges_json(splits[i].held_out_edges)}});
    }
    const json doc = {{"format", "w2k-dataset-1"},
                      {"dataset", cfg.dataset_name},
                      {"size_bucket", b.label()},
                      {"holdout_fraction", cfg.holdout_fraction},
                      {"skipped_members", ds.skipped_members},
                      {"dropped_graphs", dropped},
                      {"split_counts",
                       {{"train", part.train.size()}, {"validation", part.validation.size()}, {"test", part.test.size()}}},
                      {"graphs", graphs}};
    io::write_file_atomic(layout.dataset(b), doc.dump() + "\n");
    rec.artifacts = {layout.dataset(b)};
    manifest.record(cfg, rec);
  }
}

void run_embed(const PipelineConfig& cfg) {
  cfg.validate();
  const Layout layout(cfg.out_dir);
  Manifest manifest(layout);
  for (const SizeBucket& b : cfg.buckets) {
    manifest.require(cfg, Stage::kPrepare, b.label());
    StageRecord rec{Stage::kEmbed, b.label()};
    const BucketData data = load_bucket(cfg, b);
    std::vector<StageTiming> times(data.graphs.size());
    for_each_index(data.graphs.size(), cfg.jobs, [&](std::size_t i) {
      const GraphRecord& g = data.graphs[i];
      auto [emb, t] = measure(cfg.jobs, [&] { return make_source(cfg, b, g); });
      io::save_embedding(layout.source(b, g.id), emb);
      times[i] = t;
    });
    TimingTable table;
    for (std::size_t i = 0; i < data.graphs.size(); ++i) {
      table[{"source", data.graphs[i].id}] = times[i];
      rec.artifacts.push_back(layout.source(b, data.graphs[i].id));
    }
    write_timings(layout.timings(b, "embed"), table);
    rec.inputs = {layout.dataset(b)};
    rec.seeds["walk"] = "derive_seed(seed, {4, min, max, graph_id})";
    rec.seeds["skipgram"] = "derive_seed(seed, {5, min, max, graph_id})";
    rec.lineage["source_method"] = source_name(cfg.source);
    manifest.record(cfg, rec);
  }
}

void run_train_kg(const PipelineConfig& cfg) {
  cfg.validate();
  const Layout layout(cfg.out_dir);
  Manifest manifest(layout);
  for (const SizeBucket& b : cfg.buckets) {
    manifest.require(cfg, Stage::kEmbed, b.label());
    StageRecord rec{Stage::kTrainKg, b.label()};
    const BucketData data = load_bucket(cfg, b);
    std::vector<StageTiming> fine_times(data.graphs.size()), target_times(data.graphs.size());
    for_each_index(data.graphs.size(), cfg.jobs, [&](std::size_t i) {
      const GraphRecord& g = data.graphs[i];
      const Graph& graph = g.edges.train_graph;
      EmbeddingMatrix source = io::load_embedding(layout.source(b, g.id));
      auto [fine, tf] = measure(cfg.jobs, [&] {
        return train_kg(graph, cfg.target, std::optional<EmbeddingMatrix>(std::move(source)),
                        kg_config(cfg, kTagFinetune, b, g.id));
      });
      io::save_kg_model(layout.finetuned(b, g.id), {fine.embeddings, fine.relation, fine.aux});
      fine_times[i] = tf;
      // Target models are only needed for evaluation.
      if (g.split == Split::kTest) {
        auto [target, tt] = measure(cfg.jobs, [&] {
          return train_kg(graph, cfg.target, std::nullopt, kg_config(cfg, kTagTarget, b, g.id));
        });
        io::save_kg_model(layout.target(b, g.id), {target.embeddings, target.relation, target.aux});
        target_times[i] = tt;
      }
    });
    TimingTable table;
    for (std::size_t i = 0; i < data.graphs.size(); ++i) {
      const GraphRecord& g = data.graphs[i];
      table[{"finetuned", g.id}] = fine_times[i];
      rec.inputs.push_back(layout.source(b, g.id));
      rec.artifacts.push_back(layout.finetuned(b, g.id));
      if (g.split == Split::kTest) {
        table[{"target", g.id}] = target_times[i];
        rec.artifacts.push_back(layout.target(b, g.id));
      }
    }
    write_timings(layout.timings(b, "train-kg"), table);
    rec.seeds["relation"] = relation_seed(cfg);
    rec.seeds["finetune"] = "derive_seed(seed, {7, min, max, graph_id})";
    rec.seeds["target"] = "derive_seed(seed, {6, min, max, graph_id})";
    rec.lineage["target_method"] = to_string(cfg.target);
    manifest.record(cfg, rec);
  }
}

namespace {

void train_one_transform(const PipelineConfig& cfg, Manifest& manifest, const std::vector<SizeBucket>& buckets,
                         const std::string& scope, const fs::path& dir, std::uint64_t seed) {
  const Layout layout(cfg.out_dir);
  StageRecord rec{Stage::kTrainTransform, scope};
  std::vector<TrainPair> train, validation;
  json train_ids = json::object(), val_ids = json::object();
  for (const SizeBucket& b : buckets) {
    const BucketData data = load_bucket(cfg, b);
    train_ids[b.label()] = json::array();
    val_ids[b.label()] = json::array();
    for (const GraphRecord& g : data.graphs) {
      if (g.split == Split::kTest) continue;
      auto& dest = g.split == Split::kTrain ? train : validation;
      dest.emplace_back(g.edges.train_graph, io::load_embedding(layout.source(b, g.id)),
                        io::load_kg_model(layout.finetuned(b, g.id)).embeddings);
      (g.split == Split::kTrain ? train_ids : val_ids)[b.label()].push_back(g.id);
      rec.inputs.push_back(layout.source(b, g.id));
      rec.inputs.push_back(layout.finetuned(b, g.id));
    }
  }
  if (train.empty()) throw DataError("train-transform " + scope + ": no training graphs");
  TransformTrainConfig tcfg = cfg.transform;
  tcfg.seed = seed;
  const TransformTrainResult result = train_transformer(train, validation, tcfg);

  io::save_params(dir / "theta.bin", result.params);
  io::write_file_atomic(dir / "theta.json", io::params_to_json(result.params));
  std::ostringstream hist;
  hist << "epoch,train_loss,validation_loss\n";
  for (std::size_t e = 0; e < result.train_loss.size(); ++e) {
    hist << e << ',' << num(result.train_loss[e]) << ','
         << (e < result.validation_loss.size() ? num(result.validation_loss[e]) : "") << '\n';
  }
  io::write_file_atomic(dir / "loss_history.csv", hist.str());
  const json summary = {{"best_epoch", result.best_epoch},
                        {"epochs", result.train_loss.size()},
                        {"train_graphs", train.size()},
                        {"validation_graphs", validation.size()}};
  io::write_file_atomic(dir / "training.json", summary.dump(2) + "\n");

  rec.artifacts = {dir / "theta.bin", dir / "theta.json", dir / "loss_history.csv", dir / "training.json"};
  rec.seeds["transform"] = seed;
  rec.lineage = {{"train_graph_ids", train_ids}, {"validation_graph_ids", val_ids}};
  manifest.record(cfg, rec);
}

}  // namespace

void run_train_transform(const PipelineConfig& cfg) {
  cfg.validate();
  const Layout layout(cfg.out_dir);
  Manifest manifest(layout);
  for (const SizeBucket& b : cfg.buckets) manifest.require(cfg, Stage::kTrainKg, b.label());
  if (cfg.pool_buckets) {
    const SizeBucket any = cfg.buckets.front();
    train_one_transform(cfg, manifest, cfg.buckets, "pooled", layout.transform_dir(any, true),
                        derive_seed(cfg.seed, {kTagTransform}));
    return;
  }
  for (const SizeBucket& b : cfg.buckets) {
    train_one_transform(cfg, manifest, {b}, b.label(), layout.transform_dir(b, false),
                        bucket_seed(cfg, kTagTransform, b));
  }
}

void run_apply(const PipelineConfig& cfg) {
  cfg.validate();
  const Layout layout(cfg.out_dir);
  Manifest manifest(layout);
  for (const SizeBucket& b : cfg.buckets) {
    manifest.require(cfg, Stage::kEmbed, b.label());
    manifest.require(cfg, Stage::kTrainTransform, pooled_scope(cfg, b));
    StageRecord rec{Stage::kApply, b.label()};
    const fs::path theta_path = layout.transform_dir(b, cfg.pool_buckets) / "theta.bin";
    const AttentionParams theta = io::load_params(theta_path);
    const BucketData data = load_bucket(cfg, b);
    const auto test = data.in_split(Split::kTest);
    std::vector<StageTiming> times(test.size());
    for_each_index(test.size(), cfg.jobs, [&](std::size_t i) {
      const GraphRecord& g = *test[i];
      const EmbeddingMatrix source = io::load_embedding(layout.source(b, g.id));
      auto [out, t] = measure(cfg.jobs, [&] { return apply_transform(g.edges.train_graph, source, theta); });
      io::save_embedding(layout.transformed(b, g.id), out);
      times[i] = t;
    });
    TimingTable table;
    json ids = json::array();
    for (std::size_t i = 0; i < test.size(); ++i) {
      table[{"forward", test[i]->id}] = times[i];
      rec.inputs.push_back(layout.source(b, test[i]->id));
      rec.artifacts.push_back(layout.transformed(b, test[i]->id));
      ids.push_back(test[i]->id);
    }
    rec.inputs.push_back(theta_path);
    write_timings(layout.timings(b, "apply"), table);
    rec.lineage = {{"split", "test"}, {"graph_ids", ids}};
    manifest.record(cfg, rec);
  }
}

void run_evaluate(const PipelineConfig& cfg) {
  cfg.validate();
  const Layout layout(cfg.out_dir);
  Manifest manifest(layout);
  static constexpr const char* kMethods[] = {"source", "target", "finetuned", "transformed"};
  for (const SizeBucket& b : cfg.buckets) {
    manifest.require(cfg, Stage::kTrainKg, b.label());
    manifest.require(cfg, Stage::kApply, b.label());
    StageRecord rec{Stage::kEvaluate, b.label()};
    const BucketData data = load_bucket(cfg, b);
    const auto test = data.in_split(Split::kTest);
    const TimingTable embed_t = read_timings(layout.timings(b, "embed"));
    const TimingTable kg_t = read_timings(layout.timings(b, "train-kg"));
    const TimingTable apply_t = read_timings(layout.timings(b, "apply"));
    const RelationParams shared_rel = init_relation(cfg.target, cfg.dim, cfg.kg.norm_order, relation_seed(cfg));

    std::vector<std::array<MetricsReport, 4>> reports(test.size());
    for_each_index(test.size(), cfg.jobs, [&](std::size_t i) {
      const GraphRecord& g = *test[i];
      // Leakage guard: only test-split artifacts are read here.
      if (g.split != Split::kTest) throw std::logic_error("evaluate: non-test graph reached evaluation");
      const EdgeSplit& split = g.edges;
      const EmbeddingMatrix source = io::load_embedding(layout.source(b, g.id));
      reports[i][0] = evaluate_link_prediction(split, source.values, {}, distance_relation(cfg.dim));
      const io::KgModelFile target = io::load_kg_model(layout.target(b, g.id));
      reports[i][1] = evaluate_link_prediction(split, target.embeddings.values, target.aux, target.relation);
      const io::KgModelFile fine = io::load_kg_model(layout.finetuned(b, g.id));
      reports[i][2] = evaluate_link_prediction(split, fine.embeddings.values, fine.aux, fine.relation);
      // Transformed rows stand in for the auxiliary vectors too: inference
      // never trains a KG model, so there are no learned ones to use.
      const EmbeddingMatrix transformed = io::load_embedding(layout.transformed(b, g.id));
      EntityAuxParams aux;
      if (has_entity_aux(cfg.target)) aux.values = transformed.values;
      reports[i][3] = evaluate_link_prediction(split, transformed.values, aux, shared_rel);
    });

    std::ostringstream csv;
    csv << "dataset,size_bucket,method,graph_id,mrr,p_at_1,p_at_3,p_at_10,cpu_seconds,wall_seconds\n";
    json records = json::array();
    json ids = json::array();
    std::array<double, 4> mrr_sum{};
    for (std::size_t i = 0; i < test.size(); ++i) {
      const std::size_t id = test[i]->id;
      ids.push_back(id);
      const StageTiming src = lookup(embed_t, "source", id);
      StageTiming fine = lookup(kg_t, "finetuned", id);
      fine += src;
      StageTiming transformed = lookup(apply_t, "forward", id);
      transformed += src;
      const std::array<StageTiming, 4> cost{src, lookup(kg_t, "target", id), fine, transformed};
      for (std::size_t m = 0; m < 4; ++m) {
        const MetricsReport& r = reports[i][m];
        mrr_sum[m] += r.mrr;
        csv << csv_escape(cfg.dataset_name) << ',' << b.label() << ',' << kMethods[m] << ',' << id << ','
            << num(r.mrr) << ',' << num(r.precision_at_k.at(1)) << ',' << num(r.precision_at_k.at(3)) << ','
            << num(r.precision_at_k.at(10)) << ',' << num(cost[m].cpu_seconds) << ','
            << num(cost[m].wall_seconds) << '\n';
        records.push_back({{"graph_id", id},
                           {"method", kMethods[m]},
                           {"mrr", r.mrr},
                           {"precision_at_k", {{"1", r.precision_at_k.at(1)}, {"3", r.precision_at_k.at(3)},
                                               {"10", r.precision_at_k.at(10)}}},
                           {"query_count", r.query_count},
                           {"cpu_seconds", cost[m].cpu_seconds},
                           {"wall_seconds", cost[m].wall_seconds}});
      }
      rec.inputs.push_back(layout.source(b, id));
      rec.inputs.push_back(layout.target(b, id));
      rec.inputs.push_back(layout.finetuned(b, id));
      rec.inputs.push_back(layout.transformed(b, id));
    }
    json summary = json::object();
    for (std::size_t m = 0; m < 4; ++m) {
      summary[kMethods[m]] = {{"mean_mrr", test.empty() ? 0.0 : mrr_sum[m] / static_cast<double>(test.size())}};
    }
    const json doc = {{"dataset", cfg.dataset_name},
                      {"size_bucket", b.label()},
                      {"filtered", true},
                      {"query_directions", "both"},
                      {"tie_rule", "mid-rank"},
                      {"graphs", test.size()},
                      {"summary", summary},
                      {"records", records}};
    io::write_file_atomic(layout.metrics_csv(b), csv.str());
    io::write_file_atomic(layout.metrics_json(b), doc.dump(2) + "\n");
    rec.artifacts = {layout.metrics_csv(b), layout.metrics_json(b)};
    rec.lineage = {{"split", "test"}, {"graph_ids", ids}};
    manifest.record(cfg, rec);
  }
}

void run_bench(const PipelineConfig& cfg) {
  cfg.validate();
  const Layout layout(cfg.out_dir);
  Manifest manifest(layout);
  StageRecord rec{Stage::kBench, "all"};
  std::ostringstream per_graph, summary;
  per_graph << "size_bucket,graph_id,nodes,cpu_source,cpu_kg,cpu_forward,cpu_finetune_path,cpu_transform_path,"
               "wall_finetune_path,wall_transform_path,mrr_finetuned,mrr_transformed\n";
  summary << "size_bucket,graphs,mean_nodes,mean_cpu_source,mean_cpu_kg,mean_cpu_forward,mean_cpu_finetune_path,"
             "mean_cpu_transform_path,mean_mrr_finetuned,mean_mrr_transformed\n";
  const RelationParams shared_rel = init_relation(cfg.target, cfg.dim, cfg.kg.norm_order, relation_seed(cfg));
  for (const SizeBucket& b : sorted_buckets(cfg)) {
    manifest.require(cfg, Stage::kPrepare, b.label());
    manifest.require(cfg, Stage::kTrainTransform, pooled_scope(cfg, b));
    const fs::path theta_path = layout.transform_dir(b, cfg.pool_buckets) / "theta.bin";
    const AttentionParams theta = io::load_params(theta_path);
    rec.inputs.push_back(layout.dataset(b));
    rec.inputs.push_back(theta_path);
    const BucketData data = load_bucket(cfg, b);
    const auto test = data.in_split(Split::kTest);
    double nodes = 0, src_sum = 0, kg_sum = 0, fwd_sum = 0, fine_mrr = 0, trans_mrr = 0;
    // Sequential on purpose: each stage must own the process for its CPU time.
    for (const GraphRecord* g : test) {
      const Graph& graph = g->edges.train_graph;
      auto src = time_stage("source", [&] { return make_source(cfg, b, *g); });
      auto fine = time_stage("kg", [&] {
        return train_kg(graph, cfg.target, std::optional<EmbeddingMatrix>(src.value),
                        kg_config(cfg, kTagFinetune, b, g->id));
      });
      auto fwd = time_stage("forward", [&] { return apply_transform(graph, src.value, theta); });
      const double mf = evaluate_link_prediction(g->edges, fine.value.embeddings.values, fine.value.aux,
                                                 fine.value.relation).mrr;
      EntityAuxParams aux;
      if (has_entity_aux(cfg.target)) aux.values = fwd.value.values;
      const double mt = evaluate_link_prediction(g->edges, fwd.value.values, aux, shared_rel).mrr;
      per_graph << b.label() << ',' << g->id << ',' << graph.node_count() << ',' << num(src.timing.cpu_seconds)
                << ',' << num(fine.timing.cpu_seconds) << ',' << num(fwd.timing.cpu_seconds) << ','
                << num(src.timing.cpu_seconds + fine.timing.cpu_seconds) << ','
                << num(src.timing.cpu_seconds + fwd.timing.cpu_seconds) << ','
                << num(src.timing.wall_seconds + fine.timing.wall_seconds) << ','
                << num(src.timing.wall_seconds + fwd.timing.wall_seconds) << ',' << num(mf) << ',' << num(mt)
                << '\n';
      nodes += static_cast<double>(graph.node_count());
      src_sum += src.timing.cpu_seconds;
      kg_sum += fine.timing.cpu_seconds;
      fwd_sum += fwd.timing.cpu_seconds;
      fine_mrr += mf;
      trans_mrr += mt;
    }
    const double k = test.empty() ? 1.0 : static_cast<double>(test.size());
    summary << b.label() << ',' << test.size() << ',' << num(nodes / k) << ',' << num(src_sum / k) << ','
            << num(kg_sum / k) << ',' << num(fwd_sum / k) << ',' << num((src_sum + kg_sum) / k) << ','
            << num((src_sum + fwd_sum) / k) << ',' << num(fine_mrr / k) << ',' << num(trans_mrr / k) << '\n';
  }
  io::write_file_atomic(layout.bench_graphs_csv(), per_graph.str());
  io::write_file_atomic(layout.bench_csv(), summary.str());
  rec.artifacts = {layout.bench_csv(), layout.bench_graphs_csv()};
  manifest.record(cfg, rec);
}

void run_report(const PipelineConfig& cfg) {
  cfg.validate();
  const Layout layout(cfg.out_dir);
  Manifest manifest(layout);
  StageRecord rec{Stage::kReport, "all"};
  // (method1, method2): the comparisons drawn in the significance figure.
  static constexpr std::pair<const char*, const char*> kPairs[] = {{"source", "transformed"},
                                                                  {"target", "finetuned"},
                                                                  {"source", "finetuned"},
                                                                  {"source", "target"},
                                                                  {"finetuned", "transformed"},
                                                                  {"target", "transformed"}};
  std::ostringstream csv;
  csv << "size_bucket,method1,method2,n1,n2,mean1,mean2,mean_difference,f_statistic,p_value\n";
  json buckets = json::array();
  for (const SizeBucket& b : sorted_buckets(cfg)) {
    manifest.require(cfg, Stage::kEvaluate, b.label());
    rec.inputs.push_back(layout.metrics_csv(b));
    std::map<std::string, std::vector<double>> by_method;
    for (const MetricRow& r : read_metrics_csv(layout.metrics_csv(b))) by_method[r.method].push_back(r.mrr);
    json means = json::object();
    for (const auto& [m, v] : by_method) {
      double s = 0;
      for (double x : v) s += x;
      means[m] = v.empty() ? 0.0 : s / static_cast<double>(v.size());
    }
    json comparisons = json::array();
    for (const auto& [m1, m2] : kPairs) {
      const auto& g1 = by_method[m1];
      const auto& g2 = by_method[m2];
      if (g1.size() < 2 || g2.size() < 2) continue;
      const AnovaResult a = anova_one_way(g1, g2);
      csv << b.label() << ',' << m1 << ',' << m2 << ',' << g1.size() << ',' << g2.size() << ','
          << num(means[m1].get<double>()) << ',' << num(means[m2].get<double>()) << ',' << num(a.mean_difference)
          << ',' << num(a.f_statistic) << ',' << num(a.p_value) << '\n';
      comparisons.push_back({{"method1", m1}, {"method2", m2}, {"mean_difference", a.mean_difference},
                             {"f_statistic", a.f_statistic}, {"p_value", a.p_value}});
    }
    buckets.push_back({{"size_bucket", b.label()}, {"mean_mrr", means}, {"anova", comparisons}});
  }
  io::write_file_atomic(layout.report_csv(), csv.str());
  io::write_file_atomic(layout.report_json(), json{{"buckets", buckets}}.dump(2) + "\n");
  rec.artifacts = {layout.report_csv(), layout.report_json()};
  manifest.record(cfg, rec);
}

void run_all(const PipelineConfig& cfg) {
  run_prepare(cfg);
  run_embed(cfg);
  run_train_kg(cfg);
  run_train_transform(cfg);
  run_apply(cfg);
  run_evaluate(cfg);
  run_report(cfg);
}

void apply_to_file(const fs::path& graph_path, const fs::path& embedding_path, const fs::path& theta_path,
                   const fs::path& output_path) {
  for (const fs::path& p : {graph_path, embedding_path, theta_path}) {
    if (!fs::exists(p)) throw MissingArtifact("input not found: " + p.string(), "check the path");
  }
  const Graph g = load_edge_list(graph_path);
  const EmbeddingMatrix source = load_any_embedding(embedding_path);
  if (source.node_count() != g.node_count()) {
    throw DataError(embedding_path.string() + ": " + std::to_string(source.node_count()) + " rows for a graph with " +
                    std::to_string(g.node_count()) + " nodes");
  }
  const AttentionParams theta = io::load_params(theta_path);
  if (theta.dim() != source.dim()) {
    throw DataError(theta_path.string() + ": parameters are for d=" + std::to_string(theta.dim()) +
                    ", embedding has d=" + std::to_string(source.dim()));
  }
  const EmbeddingMatrix out = apply_transform(g, source, theta);
  if (output_path.extension() == ".emb") {
    io::save_embedding(output_path, out);
  } else {
    io::save_embedding_text(output_path, out.values);
  }
}

std::vector<MetricRow> read_metrics_csv(const fs::path& path) {
  std::vector<MetricRow> out;
  for (auto& row : read_csv(path)) {
    MetricRow r;
    r.dataset = row["dataset"];
    r.size_bucket = row["size_bucket"];
    r.method = row["method"];
    r.graph_id = to_size(row["graph_id"]);
    r.mrr = to_double(row["mrr"]);
    r.p_at_1 = to_double(row["p_at_1"]);
    r.p_at_3 = to_double(row["p_at_3"]);
    r.p_at_10 = to_double(row["p_at_10"]);
    r.cpu_seconds = to_double(row["cpu_seconds"]);
    r.wall_seconds = to_double(row["wall_seconds"]);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<BenchRow> read_bench_graphs_csv(const fs::path& path) {
  std::vector<BenchRow> out;
  for (auto& row : read_csv(path)) {
    BenchRow r;
    r.size_bucket = row["size_bucket"];
    r.graph_id = to_size(row["graph_id"]);
    r.nodes = to_size(row["nodes"]);
    r.cpu_source = to_double(row["cpu_source"]);
    r.cpu_kg = to_double(row["cpu_kg"]);
    r.cpu_forward = to_double(row["cpu_forward"]);
    r.mrr_finetuned = to_double(row["mrr_finetuned"]);
    r.mrr_transformed = to_double(row["mrr_transformed"]);
    out.push_back(std::move(r));
  }
  return out;
}

LossHistory read_loss_history(const fs::path& path) {
  LossHistory h;
  for (auto& row : read_csv(path)) {
    h.train.push_back(to_double(row["train_loss"]));
    if (!row["validation_loss"].empty()) h.validation.push_back(to_double(row["validation_loss"]));
  }
  return h;
}

}  // namespace w2k::pipeline
