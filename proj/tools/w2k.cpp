// w2k: command-line driver for the embedding pipeline.
//
//   w2k prepare --synthetic --out run1
//   w2k embed --out run1 --source node2vec
//   ...
//
// Every config field can also be set with a flag named by its dotted path,
// e.g. --transform.epochs=50 or --target.margin 0.5.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "w2k/graph.hpp"
#include "w2k/pipeline.hpp"

namespace pl = w2k::pipeline;

namespace {

struct CommonFlags {
  std::string config;
  std::string out;
  std::string source;
  std::string target;
  std::vector<std::string> buckets;
  std::uint64_t seed = 0;
  std::size_t jobs = 0;
  bool synthetic = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--seed", f.seed, "global seed");
  cmd->add_option("--jobs", f.jobs, "graphs processed in parallel")->check(CLI::PositiveNumber);
  cmd->add_flag("--synthetic", f.synthetic, "use the planted-partition generator instead of dataset files");
  cmd->add_option("--size-bucket", f.buckets, "node-count bucket MIN-MAX (repeatable)");
  cmd->add_option("--source", f.source, "source embedding method")->check(CLI::IsMember({"deepwalk", "node2vec"}));
  cmd->add_option("--target", f.target, "KG model")
      ->check(CLI::IsMember({"transe", "transh", "transd", "distmult", "rescal", "simple"}));
  cmd->allow_extras();
}

// Turns leftover "--a.b=v" / "--a.b v" tokens into overrides.
void apply_extras(nlohmann::json& doc, const std::vector<std::string>& extras) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& tok = extras[i];
    if (tok.rfind("--", 0) != 0 || tok.size() < 3) throw pl::ConfigError("unexpected argument '" + tok + "'");
    std::string key = tok.substr(2);
    std::string value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key.resize(eq);
    } else if (i + 1 < extras.size() && extras[i + 1].rfind("--", 0) != 0) {
      value = extras[++i];
    } else {
      throw pl::ConfigError("flag --" + key + " needs a value");
    }
    pl::apply_override(doc, key, value);
  }
}

pl::PipelineConfig build_config(const CommonFlags& f, const std::vector<std::string>& extras) {
  nlohmann::json doc = pl::to_json(f.config.empty() ? pl::PipelineConfig{} : pl::load_config(f.config));
  apply_extras(doc, extras);
  if (f.synthetic) doc["dataset"]["synthetic"] = true;
  if (!f.out.empty()) doc["out"] = f.out;
  if (!f.source.empty()) doc["source"]["method"] = f.source;
  if (!f.target.empty()) doc["target"]["method"] = f.target;
  if (f.seed != 0) doc["seed"] = f.seed;
  if (f.jobs != 0) doc["jobs"] = f.jobs;
  if (!f.buckets.empty()) doc["size_buckets"] = f.buckets;
  return pl::config_from_json(doc);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transform random-walk node embeddings into KG-quality embeddings"};
  app.require_subcommand(1);
  app.set_version_flag("--version", pl::kVersion);

  CommonFlags flags;
  std::string graph_path, embedding_path, theta_path, output_path;
  struct Sub {
    const char* name;
    const char* help;
    void (*run)(const pl::PipelineConfig&);
  };
  const Sub subs[] = {
      {"prepare", "build size-bucketed graphs, edge holdouts and train/validation/test splits", pl::run_prepare},
      {"embed", "random-walk source embeddings for every graph", pl::run_embed},
      {"train-kg", "KG training: finetuned for every graph, target for test graphs", pl::run_train_kg},
      {"train-transform", "fit the attention transform on train/validation pairs", pl::run_train_transform},
      {"apply", "transform test-graph source embeddings (or one graph with --graph)", pl::run_apply},
      {"evaluate", "filtered link prediction over the four embedding families", pl::run_evaluate},
      {"bench", "per-graph CPU time of the finetune and transform paths", pl::run_bench},
      {"report", "ANOVA comparisons of per-graph MRR", pl::run_report},
  };
  std::vector<CLI::App*> cmds;
  for (const Sub& s : subs) {
    CLI::App* cmd = app.add_subcommand(s.name, s.help);
    add_common(cmd, flags);
    cmds.push_back(cmd);
  }
  CLI::App* apply_cmd = cmds[4];
  apply_cmd->add_option("--graph", graph_path, "edge list of a single graph");
  apply_cmd->add_option("--embedding", embedding_path, "its source embedding (text or .emb)");
  apply_cmd->add_option("--theta", theta_path, "trained parameters (theta.bin)");
  apply_cmd->add_option("--output", output_path, "transformed embedding (.emb for binary, text otherwise)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? pl::kExitOk : pl::kExitConfig;
  }

  try {
    for (std::size_t i = 0; i < cmds.size(); ++i) {
      if (!cmds[i]->parsed()) continue;
      if (cmds[i] == apply_cmd && !graph_path.empty()) {
        if (embedding_path.empty() || theta_path.empty() || output_path.empty()) {
          throw pl::ConfigError("apply --graph also needs --embedding, --theta and --output");
        }
        pl::apply_to_file(graph_path, embedding_path, theta_path, output_path);
        std::printf("apply: wrote %s\n", output_path.c_str());
        return pl::kExitOk;
      }
      const pl::PipelineConfig cfg = build_config(flags, cmds[i]->remaining());
      subs[i].run(cfg);
      std::printf("%s: done (%s)\n", subs[i].name, cfg.out_dir.string().c_str());
    }
  } catch (const pl::ConfigError& e) {
    std::fprintf(stderr, "w2k: config error: %s\n", e.what());
    return pl::kExitConfig;
  } catch (const pl::MissingArtifact& e) {
    std::fprintf(stderr, "w2k: missing artifact: %s\n", e.what());
    return pl::kExitMissingArtifact;
  } catch (const w2k::DataError& e) {
    std::fprintf(stderr, "w2k: data error: %s\n", e.what());
    return pl::kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "w2k: error: %s\n", e.what());
    return 1;
  }
  return pl::kExitOk;
}
