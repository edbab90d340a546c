#ifndef W2K_WALK_HPP_
#define W2K_WALK_HPP_

#include <cstdint>
#include <vector>

#include "w2k/embedding.hpp"
#include "w2k/graph.hpp"

namespace w2k {

// node2vec walk parameters; p = q = 1 is DeepWalk.
struct WalkConfig {
  std::size_t walks_per_node = 10;
  std::size_t walk_length = 40;
  double return_param_p = 1.0;
  double inout_param_q = 1.0;
  std::uint64_t seed = 1;

  void validate() const;
};

WalkConfig deepwalk_preset(std::uint64_t seed);

struct SkipGramConfig {
  std::size_t dim = 32;
  std::size_t window = 5;
  std::size_t negatives_per_positive = 5;
  std::size_t epochs = 5;
  double learning_rate = 0.025;
  double min_learning_rate = 0.0001;
  std::uint64_t seed = 1;

  void validate() const;
};

using Walk = std::vector<NodeId>;

// walks_per_node rounds over all nodes; walk (round r, node v) sits at index
// r * n + v and draws from its own seeded stream.
std::vector<Walk> generate_walks(const Graph& g, const WalkConfig& cfg);

// Skip-gram with negative sampling over the walk corpus. Returns the input
// (center) vectors. epochs == 0 returns the seeded initialization.
EmbeddingMatrix train_skipgram(const std::vector<Walk>& walks, std::size_t node_count,
                               const SkipGramConfig& cfg);

EmbeddingMatrix embed(const Graph& g, const WalkConfig& wcfg, const SkipGramConfig& scfg);

}  // namespace w2k

#endif  // W2K_WALK_HPP_
