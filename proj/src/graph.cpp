#include "w2k/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "w2k/rng.hpp"

namespace w2k {

Graph::Graph(std::size_t node_count, std::vector<Edge> edges, std::optional<std::int64_t> community_id)
    : node_count_(node_count), edges_(std::move(edges)), adjacency_(node_count), community_id_(community_id) {
  for (const Edge& e : edges_) {
    if (e.u == e.v) throw std::invalid_argument("Graph: self-loop on node " + std::to_string(e.u));
    if (e.v >= node_count_) throw std::invalid_argument("Graph: edge endpoint out of range");
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
  for (const Edge& e : edges_) {
    adjacency_[e.u].push_back(e.v);
    adjacency_[e.v].push_back(e.u);
  }
  for (auto& nbrs : adjacency_) std::sort(nbrs.begin(), nbrs.end());
}

bool Graph::has_edge(NodeId u, NodeId v) const {
  if (u >= node_count_ || v >= node_count_) return false;
  const auto& nbrs = adjacency_[u];
  return std::binary_search(nbrs.begin(), nbrs.end(), v);
}

namespace {

// Splits on spaces/tabs; returns false if any token is not a non-negative integer.
bool parse_ids(std::string_view line, std::vector<std::uint64_t>& out) {
  out.clear();
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    if (i >= line.size()) break;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    std::uint64_t value = 0;
    auto [ptr, ec] = std::from_chars(line.data() + i, line.data() + j, value);
    if (ec != std::errc() || ptr != line.data() + j) return false;
    out.push_back(value);
    i = j;
  }
  return true;
}

bool is_skippable(std::string_view line) {
  const auto first = line.find_first_not_of(" \t\r");
  return first == std::string_view::npos || line[first] == '#';
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::uint64_t pair_key(std::uint64_t a, std::uint64_t b) {
  if (a > b) std::swap(a, b);
  return (a << 32) | b;
}

// Reads raw (un-relabelled) edges and calls `visit(u, v, line_no)` for each.
template <typename Visit>
void scan_edge_file(const std::filesystem::path& path, Visit&& visit) {
  auto in = open_or_throw(path);
  std::string line;
  std::vector<std::uint64_t> ids;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_skippable(line)) continue;
    if (!parse_ids(line, ids) || ids.size() != 2) {
      throw ParseError(path.string(), line_no, "expected two non-negative integer node ids");
    }
    if (ids[0] > UINT32_MAX || ids[1] > UINT32_MAX) {
      throw ParseError(path.string(), line_no, "node id exceeds 32 bits");
    }
    visit(ids[0], ids[1], line_no);
  }
}

}  // namespace

Graph load_edge_list(const std::filesystem::path& path) {
  std::unordered_map<std::uint64_t, NodeId> relabel;
  std::vector<Edge> edges;
  bool any_line = false;
  auto id_of = [&](std::uint64_t raw) {
    auto [it, inserted] = relabel.try_emplace(raw, static_cast<NodeId>(relabel.size()));
    return it->second;
  };
  scan_edge_file(path, [&](std::uint64_t a, std::uint64_t b, std::size_t) {
    any_line = true;
    const NodeId u = id_of(a);
    const NodeId v = id_of(b);
    if (u != v) edges.emplace_back(u, v);
  });
  if (!any_line) throw DataError(path.string() + ": empty graph (no edge lines)");
  return Graph(relabel.size(), std::move(edges));
}

GraphDataset load_communities(const std::filesystem::path& edge_path,
                              const std::filesystem::path& community_path, std::size_t min_size,
                              std::size_t max_size) {
  std::unordered_set<std::uint64_t> edge_keys;
  std::unordered_set<std::uint64_t> known_nodes;
  scan_edge_file(edge_path, [&](std::uint64_t a, std::uint64_t b, std::size_t) {
    known_nodes.insert(a);
    known_nodes.insert(b);
    if (a != b) edge_keys.insert(pair_key(a, b));
  });

  GraphDataset out;
  out.size_range = {min_size, max_size};

  auto in = open_or_throw(community_path);
  std::string line;
  std::vector<std::uint64_t> ids;
  std::size_t line_no = 0;
  std::int64_t community_index = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_skippable(line)) continue;
    ++community_index;
    if (!parse_ids(line, ids)) {
      throw ParseError(community_path.string(), line_no, "expected non-negative integer member ids");
    }
    std::vector<std::uint64_t> members;
    std::unordered_set<std::uint64_t> seen;
    for (std::uint64_t id : ids) {
      if (!known_nodes.contains(id)) {
        ++out.skipped_members;
        continue;
      }
      if (seen.insert(id).second) members.push_back(id);
    }
    if (members.size() < min_size || members.size() > max_size) continue;

    std::vector<Edge> edges;
    for (std::size_t i = 0; i < members.size(); ++i) {
      for (std::size_t j = i + 1; j < members.size(); ++j) {
        if (edge_keys.contains(pair_key(members[i], members[j]))) {
          edges.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(j));
        }
      }
    }
    if (edges.empty()) continue;
    out.graphs.emplace_back(members.size(), std::move(edges), community_index);
  }
  return out;
}

AdjacencyMatrix adjacency(const Graph& g) {
  Matrix a(g.node_count(), g.node_count());
  for (const Edge& e : g.edges()) {
    a(e.u, e.v) = 1.0;
    a(e.v, e.u) = 1.0;
  }
  return AdjacencyMatrix(std::move(a));
}

EdgeSplit split_edges(const Graph& g, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("split_edges: fraction must lie in [0, 1)");
  }
  const std::size_t m = g.edge_count();
  if (m == 0) throw std::invalid_argument("split_edges: graph has no edges");
  const auto held = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(m)));

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());

  std::vector<char> is_held(m, 0);
  for (std::size_t i = 0; i < held; ++i) is_held[order[i]] = 1;

  EdgeSplit split;
  split.seed = seed;
  std::vector<Edge> train;
  train.reserve(m - held);
  const auto edges = g.edges();
  for (std::size_t i = 0; i < m; ++i) {
    (is_held[i] ? split.held_out_edges : train).push_back(edges[i]);
  }
  split.train_graph = Graph(g.node_count(), std::move(train), g.community_id());
  return split;
}

std::vector<Triple> to_triples(std::span<const Edge> edges) {
  std::vector<Triple> out;
  out.reserve(2 * edges.size());
  for (const Edge& e : edges) {
    out.push_back({e.u, 0, e.v});
    out.push_back({e.v, 0, e.u});
  }
  return out;
}

std::vector<Triple> to_triples(const Graph& g) { return to_triples(g.edges()); }

std::array<std::size_t, 3> partition_sizes(std::size_t count, const SplitRatios& ratios) {
  const std::array<double, 3> r{ratios.train, ratios.validation, ratios.test};
  for (double x : r) {
    if (!(x >= 0.0)) throw std::invalid_argument("split ratios must be non-negative");
  }
  if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) {
    throw std::invalid_argument("split ratios must sum to 1");
  }
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = r[i] * static_cast<double>(count);
    sizes[i] = static_cast<std::size_t>(std::floor(exact));
    remainder[i] = exact - std::floor(exact);
    assigned += sizes[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < count; ++k, ++assigned) ++sizes[order[k % 3]];
  return sizes;
}

DatasetPartition partition_indices(std::size_t count, const SplitRatios& ratios, std::uint64_t seed) {
  const auto sizes = partition_sizes(count, ratios);
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());

  DatasetPartition p;
  auto first = order.begin();
  p.train.assign(first, first + sizes[0]);
  p.validation.assign(first + sizes[0], first + sizes[0] + sizes[1]);
  p.test.assign(first + sizes[0] + sizes[1], order.end());
  std::sort(p.train.begin(), p.train.end());
  std::sort(p.validation.begin(), p.validation.end());
  std::sort(p.test.begin(), p.test.end());
  return p;
}

DatasetSplit split_dataset(const GraphDataset& d, const SplitRatios& ratios, std::uint64_t seed) {
  if (d.size() < 3) throw std::invalid_argument("split_dataset: need at least 3 graphs");
  DatasetSplit out;
  out.indices = partition_indices(d.size(), ratios, seed);
  auto gather = [&](const std::vector<std::size_t>& idx) {
    GraphDataset part;
    part.size_range = d.size_range;
    for (std::size_t i : idx) part.graphs.push_back(d.graphs[i]);
    return part;
  };
  out.train = gather(out.indices.train);
  out.validation = gather(out.indices.validation);
  out.test = gather(out.indices.test);
  return out;
}

Graph planted_partition_graph(std::size_t n, std::size_t blocks, double intra_prob, double inter_prob,
                              std::uint64_t seed) {
  if (blocks == 0) throw std::invalid_argument("planted_partition_graph: need at least one block");
  Rng rng(seed);
  // Contiguous, near-equal blocks.
  std::vector<std::size_t> block(n);
  for (std::size_t i = 0; i < n; ++i) block[i] = i * blocks / std::max<std::size_t>(n, 1);
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double p = block[i] == block[j] ? intra_prob : inter_prob;
      if (rng.uniform() < p) edges.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(j));
    }
  }
  return Graph(n, std::move(edges));
}

GraphDataset planted_partition_dataset(const PlantedPartitionConfig& cfg, std::uint64_t seed) {
  if (cfg.min_nodes < 2 || cfg.max_nodes < cfg.min_nodes) {
    throw std::invalid_argument("planted_partition_dataset: invalid size range");
  }
  GraphDataset out;
  out.size_range = {cfg.min_nodes, cfg.max_nodes};
  const std::size_t span = cfg.max_nodes - cfg.min_nodes + 1;
  for (std::size_t i = 0; i < cfg.graph_count; ++i) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      Rng size_rng(derive_seed(seed, {i, attempt, 0}));
      const std::size_t n = cfg.min_nodes + size_rng.below(span);
      const std::size_t blocks =
          std::max<std::size_t>(2, (n + cfg.block_size - 1) / std::max<std::size_t>(cfg.block_size, 1));
      Graph g = planted_partition_graph(n, blocks, cfg.intra_prob, cfg.inter_prob,
                                        derive_seed(seed, {i, attempt, 1}));
      if (g.edge_count() >= std::max<std::size_t>(cfg.min_edges, 1)) {
        out.graphs.push_back(Graph(g.node_count(), {g.edges().begin(), g.edges().end()},
                                   static_cast<std::int64_t>(i)));
        break;
      }
    }
  }
  return out;
}

}  // namespace w2k
