#ifndef W2K_PIPELINE_HPP_
#define W2K_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "w2k/graph.hpp"
#include "w2k/kg.hpp"
#include "w2k/transform.hpp"
#include "w2k/walk.hpp"

namespace w2k::pipeline {

inline constexpr const char* kVersion = "0.1.0";

// Process exit codes shared by every subcommand.
enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitMissingArtifact = 3, kExitData = 4 };

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An upstream artifact or input file is absent, or was produced under a
// different config. The message ends with a remedy.
class MissingArtifact : public std::runtime_error {
 public:
  MissingArtifact(const std::string& what, const std::string& remedy)
      : std::runtime_error(what + "; " + remedy) {}
};

struct SizeBucket {
  std::size_t min_nodes = 16;
  std::size_t max_nodes = 21;

  std::string label() const;
  friend bool operator==(const SizeBucket&, const SizeBucket&) = default;
};

// "MIN-MAX", e.g. "16-21".
SizeBucket parse_bucket(std::string_view text);

enum class SourceMethod { kDeepWalk, kNode2Vec };

struct PipelineConfig {
  std::string dataset_name = "synthetic";
  bool synthetic = true;
  std::filesystem::path edges_path;        // SNAP edge list when !synthetic
  std::filesystem::path communities_path;  // one community per line
  PlantedPartitionConfig generator;        // node range comes from the bucket

  std::vector<SizeBucket> buckets{SizeBucket{}};
  SourceMethod source = SourceMethod::kNode2Vec;
  WalkConfig walk;
  SkipGramConfig skipgram;
  KgModelKind target = KgModelKind::kTransE;
  KgTrainConfig kg;
  TransformTrainConfig transform;
  bool pool_buckets = false;

  double holdout_fraction = 0.2;
  SplitRatios split_ratios;
  std::size_t dim = 32;
  std::uint64_t seed = 42;
  std::filesystem::path out_dir = "w2k-out";
  std::size_t jobs = 1;

  // Throws ConfigError.
  void validate() const;
};

// The JSON document form; every leaf is addressable by its dotted path.
nlohmann::json to_json(const PipelineConfig& cfg);
// Missing keys keep their defaults; unknown keys and bad values throw ConfigError.
PipelineConfig config_from_json(const nlohmann::json& doc);
PipelineConfig load_config(const std::filesystem::path& path);

// Sets `dotted` (e.g. "transform.epochs") in `doc`. The value is parsed as
// JSON when possible and kept as a string otherwise. Unknown paths throw.
void apply_override(nlohmann::json& doc, std::string_view dotted, std::string_view value);

enum class Split { kTrain, kValidation, kTest };
std::string_view to_string(Split s);

struct GraphRecord {
  std::size_t id = 0;
  std::int64_t community = -1;
  Split split = Split::kTrain;
  EdgeSplit edges;
};

struct BucketData {
  SizeBucket bucket;
  std::vector<GraphRecord> graphs;
  std::size_t skipped_members = 0;

  std::vector<const GraphRecord*> in_split(Split s) const;
};

// On-disk layout under cfg.out_dir.
class Layout {
 public:
  explicit Layout(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path manifest() const { return root_ / "manifest.json"; }
  std::filesystem::path bucket_dir(const SizeBucket& b) const { return root_ / ("bucket-" + b.label()); }
  std::filesystem::path dataset(const SizeBucket& b) const { return bucket_dir(b) / "dataset.json"; }
  std::filesystem::path source(const SizeBucket& b, std::size_t id) const;
  std::filesystem::path target(const SizeBucket& b, std::size_t id) const;
  std::filesystem::path finetuned(const SizeBucket& b, std::size_t id) const;
  std::filesystem::path transformed(const SizeBucket& b, std::size_t id) const;
  std::filesystem::path timings(const SizeBucket& b, std::string_view stage) const;
  // Directory holding theta.bin, theta.json and loss_history.csv.
  std::filesystem::path transform_dir(const SizeBucket& b, bool pooled) const;
  std::filesystem::path metrics_csv(const SizeBucket& b) const { return bucket_dir(b) / "metrics.csv"; }
  std::filesystem::path metrics_json(const SizeBucket& b) const { return bucket_dir(b) / "metrics.json"; }
  std::filesystem::path bench_csv() const { return root_ / "bench.csv"; }
  std::filesystem::path bench_graphs_csv() const { return root_ / "bench_graphs.csv"; }
  std::filesystem::path report_csv() const { return root_ / "report.csv"; }
  std::filesystem::path report_json() const { return root_ / "report.json"; }

 private:
  std::filesystem::path root_;
};

// Stages. Each runs one step for every configured bucket and records itself
// in the manifest. Upstream problems throw MissingArtifact, bad input data
// throws DataError.
void run_prepare(const PipelineConfig& cfg);
void run_embed(const PipelineConfig& cfg);
void run_train_kg(const PipelineConfig& cfg);
void run_train_transform(const PipelineConfig& cfg);
void run_apply(const PipelineConfig& cfg);
void run_evaluate(const PipelineConfig& cfg);
void run_bench(const PipelineConfig& cfg);
void run_report(const PipelineConfig& cfg);

// prepare through report in order.
void run_all(const PipelineConfig& cfg);

// Standalone inference on one graph: edge list + source embedding (text or
// EMBE1 binary) + theta -> transformed embedding written as text.
void apply_to_file(const std::filesystem::path& graph_path, const std::filesystem::path& embedding_path,
                   const std::filesystem::path& theta_path, const std::filesystem::path& output_path);

BucketData load_bucket(const PipelineConfig& cfg, const SizeBucket& b);

// Seed of the relation parameters shared by every KG model in a run.
std::uint64_t relation_seed(const PipelineConfig& cfg);

struct MetricRow {
  std::string dataset;
  std::string size_bucket;
  std::string method;
  std::size_t graph_id = 0;
  double mrr = 0.0;
  double p_at_1 = 0.0;
  double p_at_3 = 0.0;
  double p_at_10 = 0.0;
  double cpu_seconds = 0.0;
  double wall_seconds = 0.0;
};
std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path);

struct BenchRow {
  std::string size_bucket;
  std::size_t graph_id = 0;
  std::size_t nodes = 0;
  double cpu_source = 0.0;
  double cpu_kg = 0.0;
  double cpu_forward = 0.0;
  double mrr_finetuned = 0.0;
  double mrr_transformed = 0.0;

  double cpu_finetune_path() const { return cpu_source + cpu_kg; }
  double cpu_transform_path() const { return cpu_source + cpu_forward; }
};
std::vector<BenchRow> read_bench_graphs_csv(const std::filesystem::path& path);

// Loss history written by train-transform: epoch, train, validation.
struct LossHistory {
  std::vector<double> train;
  std::vector<double> validation;
};
LossHistory read_loss_history(const std::filesystem::path& path);

}  // namespace w2k::pipeline

#endif  // W2K_PIPELINE_HPP_
