#ifndef W2K_GRAPH_HPP_
#define W2K_GRAPH_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "w2k/matrix.hpp"

namespace w2k {

using NodeId = std::uint32_t;

// Malformed or unusable input data (bad file contents, empty graphs).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : DataError(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Undirected edge stored canonically with u < v.
struct Edge {
  NodeId u = 0;
  NodeId v = 0;

  Edge() = default;
  Edge(NodeId a, NodeId b) : u(a < b ? a : b), v(a < b ? b : a) {}

  friend auto operator<=>(const Edge&, const Edge&) = default;
};

// Unweighted undirected simple graph on nodes 0..n-1.
class Graph {
 public:
  Graph() = default;
  // Canonicalizes, sorts and deduplicates `edges`; rejects self-loops and
  // out-of-range endpoints.
  Graph(std::size_t node_count, std::vector<Edge> edges, std::optional<std::int64_t> community_id = {});

  std::size_t node_count() const { return node_count_; }
  std::size_t edge_count() const { return edges_.size(); }
  std::span<const Edge> edges() const { return edges_; }
  std::span<const NodeId> neighbors(NodeId u) const { return adjacency_[u]; }
  std::size_t degree(NodeId u) const { return adjacency_[u].size(); }
  bool has_edge(NodeId u, NodeId v) const;
  std::optional<std::int64_t> community_id() const { return community_id_; }

  friend bool operator==(const Graph& a, const Graph& b) {
    return a.node_count_ == b.node_count_ && a.edges_ == b.edges_ && a.community_id_ == b.community_id_;
  }

 private:
  std::size_t node_count_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<NodeId>> adjacency_;  // sorted neighbor lists
  std::optional<std::int64_t> community_id_;
};

// Symmetric 0/1 matrix with zero diagonal.
class AdjacencyMatrix {
 public:
  explicit AdjacencyMatrix(Matrix values) : values_(std::move(values)) {}
  const Matrix& values() const { return values_; }
  std::size_t size() const { return values_.rows(); }

 private:
  Matrix values_;
};

// Fact <head, relation, tail>. Relation is always 0 for homogeneous graphs.
struct Triple {
  NodeId head = 0;
  std::uint32_t relation = 0;
  NodeId tail = 0;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const noexcept {
    std::uint64_t x = (std::uint64_t{t.head} << 32) ^ t.tail ^ (std::uint64_t{t.relation} << 52);
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdULL;
    x ^= x >> 33;
    return static_cast<std::size_t>(x);
  }
};

using TripleSet = std::unordered_set<Triple, TripleHash>;

struct EdgeSplit {
  Graph train_graph;
  std::vector<Edge> held_out_edges;
  std::uint64_t seed = 0;
};

struct GraphDataset {
  std::vector<Graph> graphs;
  std::pair<std::size_t, std::size_t> size_range{0, 0};
  // Community members that did not appear in the edge file.
  std::size_t skipped_members = 0;

  std::size_t size() const { return graphs.size(); }
};

struct DatasetPartition {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

struct SplitRatios {
  double train = 0.64;
  double validation = 0.16;
  double test = 0.20;
};

// SNAP-style edge list. Ids are relabelled to 0..n-1 in first-seen order;
// duplicates, reversed duplicates and self-loops are dropped.
Graph load_edge_list(const std::filesystem::path& path);

// One induced subgraph per community line whose member count lies in
// [min_size, max_size]. Communities with no induced edges are dropped.
GraphDataset load_communities(const std::filesystem::path& edge_path,
                              const std::filesystem::path& community_path, std::size_t min_size,
                              std::size_t max_size);

AdjacencyMatrix adjacency(const Graph& g);

// Moves round(fraction * m) uniformly chosen edges into the held-out list.
EdgeSplit split_edges(const Graph& g, double fraction, std::uint64_t seed);

// Both orientations <u,0,v> and <v,0,u> of every edge, in edge order.
std::vector<Triple> to_triples(const Graph& g);
std::vector<Triple> to_triples(std::span<const Edge> edges);

// Largest-remainder sizes for a partition of `count` items.
std::array<std::size_t, 3> partition_sizes(std::size_t count, const SplitRatios& ratios);

// Random disjoint partition of 0..count-1; each index list is sorted.
DatasetPartition partition_indices(std::size_t count, const SplitRatios& ratios, std::uint64_t seed);

struct DatasetSplit {
  GraphDataset train;
  GraphDataset validation;
  GraphDataset test;
  DatasetPartition indices;
};

DatasetSplit split_dataset(const GraphDataset& d, const SplitRatios& ratios, std::uint64_t seed);

// Planted-partition generator standing in for SNAP communities: n is drawn
// uniformly from the size range and nodes are split into blocks of roughly
// `block_size` nodes; pairs inside a block connect with probability
// `intra_prob`, pairs across blocks with `inter_prob`. Draws with fewer than
// `min_edges` edges are rejected and redrawn.
struct PlantedPartitionConfig {
  std::size_t graph_count = 200;
  std::size_t min_nodes = 16;
  std::size_t max_nodes = 21;
  double intra_prob = 0.3;
  double inter_prob = 0.02;
  std::size_t block_size = 25;
  std::size_t min_edges = 3;  // enough for a non-empty 20% holdout
};

Graph planted_partition_graph(std::size_t n, std::size_t blocks, double intra_prob, double inter_prob,
                              std::uint64_t seed);
GraphDataset planted_partition_dataset(const PlantedPartitionConfig& cfg, std::uint64_t seed);

}  // namespace w2k

#endif  // W2K_GRAPH_HPP_
