#include "w2k/walk.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "w2k/rng.hpp"

namespace w2k {

void WalkConfig::validate() const {
  if (walks_per_node < 1) throw std::invalid_argument("walks_per_node must be >= 1");
  if (walk_length < 1) throw std::invalid_argument("walk_length must be >= 1");
  if (!(return_param_p > 0.0) || !(inout_param_q > 0.0)) {
    throw std::invalid_argument("node2vec p and q must be positive");
  }
}

WalkConfig deepwalk_preset(std::uint64_t seed) {
  WalkConfig cfg;
  cfg.return_param_p = 1.0;
  cfg.inout_param_q = 1.0;
  cfg.seed = seed;
  return cfg;
}

void SkipGramConfig::validate() const {
  if (dim < 1) throw std::invalid_argument("embedding dim must be >= 1");
  if (window < 1) throw std::invalid_argument("window must be >= 1");
  if (negatives_per_positive < 1) throw std::invalid_argument("negatives_per_positive must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
}

namespace {

Walk walk_from(const Graph& g, NodeId start, const WalkConfig& cfg, Rng& rng) {
  Walk walk;
  walk.reserve(cfg.walk_length);
  walk.push_back(start);
  std::vector<double> cumulative;
  const double return_weight = 1.0 / cfg.return_param_p;
  const double outward_weight = 1.0 / cfg.inout_param_q;
  while (walk.size() < cfg.walk_length) {
    const NodeId cur = walk.back();
    const auto nbrs = g.neighbors(cur);
    if (nbrs.empty()) break;
    if (walk.size() == 1) {
      walk.push_back(nbrs[rng.below(nbrs.size())]);
      continue;
    }
    // Second-order transition: 1/p back to prev, 1 to prev's neighbors, 1/q elsewhere.
    const NodeId prev = walk[walk.size() - 2];
    cumulative.resize(nbrs.size());
    double total = 0.0;
    for (std::size_t i = 0; i < nbrs.size(); ++i) {
      const NodeId x = nbrs[i];
      total += x == prev ? return_weight : (g.has_edge(prev, x) ? 1.0 : outward_weight);
      cumulative[i] = total;
    }
    const double u = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) --it;
    walk.push_back(nbrs[static_cast<std::size_t>(it - cumulative.begin())]);
  }
  return walk;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::vector<Walk> generate_walks(const Graph& g, const WalkConfig& cfg) {
  cfg.validate();
  const std::size_t n = g.node_count();
  if (n == 0) throw std::invalid_argument("generate_walks: graph has no nodes");
  std::vector<Walk> walks(cfg.walks_per_node * n);
  const long total = static_cast<long>(walks.size());
#pragma omp parallel for schedule(static)
  for (long idx = 0; idx < total; ++idx) {
    const auto round = static_cast<std::uint64_t>(idx) / n;
    const auto node = static_cast<NodeId>(static_cast<std::uint64_t>(idx) % n);
    Rng rng(derive_seed(cfg.seed, {round, node}));
    walks[idx] = walk_from(g, node, cfg, rng);
  }
  return walks;
}

EmbeddingMatrix train_skipgram(const std::vector<Walk>& walks, std::size_t node_count,
                               const SkipGramConfig& cfg) {
  cfg.validate();
  if (node_count == 0) throw std::invalid_argument("train_skipgram: node_count must be positive");
  if (walks.empty()) throw std::invalid_argument("train_skipgram: no walks");
  const std::size_t d = cfg.dim;
  Rng rng(cfg.seed);

  Matrix input(node_count, d);
  for (double& x : input.values()) x = (rng.uniform() - 0.5) / static_cast<double>(d);
  Matrix output(node_count, d, 0.0);

  // Negative-sampling table: cumulative unigram^0.75 over walk occurrences.
  std::vector<double> counts(node_count, 0.0);
  std::size_t tokens = 0;
  for (const Walk& w : walks) {
    for (NodeId v : w) {
      if (v >= node_count) throw std::invalid_argument("train_skipgram: walk node out of range");
      counts[v] += 1.0;
    }
    tokens += w.size();
  }
  std::vector<double> cumulative(node_count);
  double total = 0.0;
  for (std::size_t v = 0; v < node_count; ++v) {
    total += std::pow(counts[v], 0.75);
    cumulative[v] = total;
  }
  auto draw_negative = [&]() {
    const double u = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) --it;
    return static_cast<NodeId>(it - cumulative.begin());
  };

  const double total_steps = static_cast<double>(cfg.epochs * tokens);
  std::size_t processed = 0;
  std::vector<double> grad_in(d);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const Walk& walk : walks) {
      for (std::size_t i = 0; i < walk.size(); ++i, ++processed) {
        const double lr = std::max(cfg.min_learning_rate,
                                   cfg.learning_rate - (cfg.learning_rate - cfg.min_learning_rate) *
                                                           (static_cast<double>(processed) / total_steps));
        // Window shrunk uniformly to 1..window, as in word2vec.
        const std::size_t reach = cfg.window - rng.below(cfg.window);
        const std::size_t lo = i >= reach ? i - reach : 0;
        const std::size_t hi = std::min(walk.size() - 1, i + reach);
        auto center = input.row(walk[i]);
        for (std::size_t j = lo; j <= hi; ++j) {
          if (j == i) continue;
          const NodeId context = walk[j];
          std::fill(grad_in.begin(), grad_in.end(), 0.0);
          for (std::size_t s = 0; s <= cfg.negatives_per_positive; ++s) {
            NodeId target;
            double label;
            if (s == 0) {
              target = context;
              label = 1.0;
            } else {
              target = draw_negative();
              if (target == context) continue;
              label = 0.0;
            }
            auto out = output.row(target);
            const double g = (label - sigmoid(dot(center, out))) * lr;
            for (std::size_t k = 0; k < d; ++k) grad_in[k] += g * out[k];
            for (std::size_t k = 0; k < d; ++k) out[k] += g * center[k];
          }
          for (std::size_t k = 0; k < d; ++k) center[k] += grad_in[k];
        }
      }
    }
  }
  return EmbeddingMatrix(std::move(input), Provenance::kSource);
}

EmbeddingMatrix embed(const Graph& g, const WalkConfig& wcfg, const SkipGramConfig& scfg) {
  return train_skipgram(generate_walks(g, wcfg), g.node_count(), scfg);
}

}  // namespace w2k
