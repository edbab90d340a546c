#include <boost/math/distributions/chi_squared.hpp>

#include "doctest.h"
#include "oracles.hpp"
#include "w2k/walk.hpp"

using namespace w2k;

namespace {

double chi_square_p(double statistic, double df) {
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(df), statistic));
}

double cosine(std::span<const double> a, std::span<const double> b) {
  return dot(a, b) / std::sqrt(squared_norm(a) * squared_norm(b));
}

}  // namespace

TEST_SUITE("walk") {

TEST_CASE("walks on a path follow edges and start at their node") {
  const Graph g(3, {{0, 1}, {1, 2}});
  WalkConfig cfg;
  cfg.walks_per_node = 2;
  cfg.walk_length = 5;
  const auto walks = generate_walks(g, cfg);
  REQUIRE(walks.size() == 6);
  for (std::size_t idx = 0; idx < walks.size(); ++idx) {
    const Walk& w = walks[idx];
    CHECK(w.front() == idx % 3);
    CHECK(w.size() <= 5);
    CHECK(w.size() == 5);  // no dead ends on a path
    for (std::size_t i = 1; i < w.size(); ++i) CHECK(g.has_edge(w[i - 1], w[i]));
  }
}

TEST_CASE("isolated nodes give single-node walks") {
  const Graph g(3, {{0, 1}});
  const auto walks = generate_walks(g, WalkConfig{});
  for (std::size_t idx = 2; idx < walks.size(); idx += 3) CHECK(walks[idx] == Walk{2});
}

TEST_CASE("walk count and edge-following hold on random graphs") {
  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const Graph g = oracle::random_graph(1 + rng.below(20), 0.25, rng);
    WalkConfig cfg;
    cfg.walks_per_node = 1 + rng.below(4);
    cfg.walk_length = 1 + rng.below(15);
    cfg.return_param_p = rng.uniform(0.25, 4.0);
    cfg.inout_param_q = rng.uniform(0.25, 4.0);
    cfg.seed = rng.next();
    const auto walks = generate_walks(g, cfg);
    CHECK(walks.size() == cfg.walks_per_node * g.node_count());
    for (const Walk& w : walks) {
      CHECK(w.size() >= 1);
      CHECK(w.size() <= cfg.walk_length);
      for (std::size_t i = 1; i < w.size(); ++i) CHECK(g.has_edge(w[i - 1], w[i]));
    }
  }
}

TEST_CASE("walks are deterministic per seed") {
  Rng rng(2);
  const Graph g = oracle::random_graph(15, 0.3, rng);
  WalkConfig cfg;
  cfg.seed = 77;
  CHECK(generate_walks(g, cfg) == generate_walks(g, cfg));
  WalkConfig other = cfg;
  other.seed = 78;
  CHECK(generate_walks(g, cfg) != generate_walks(g, other));
}

TEST_CASE("unbiased walks leave the star centre uniformly") {
  const Graph star(4, {{0, 1}, {0, 2}, {0, 3}});
  WalkConfig cfg;
  cfg.walks_per_node = 5000;
  cfg.walk_length = 41;
  std::vector<long> counts(3, 0);
  long steps = 0;
  for (const Walk& w : generate_walks(star, cfg)) {
    for (std::size_t i = 1; i < w.size(); ++i) {
      if (w[i - 1] == 0) {
        ++counts[w[i] - 1];
        ++steps;
      }
    }
  }
  REQUIRE(steps >= 100000);
  for (long c : counts) CHECK(static_cast<double>(c) / steps == doctest::Approx(1.0 / 3).epsilon(0.06));
  CHECK(chi_square_p(oracle::chi_square_uniform(counts), 2) > 0.01);
}

TEST_CASE("second-order transitions follow the 1/p, 1, 1/q weights") {
  // From 1 having arrived from 0: node 0 is a return (1/p), node 2 is a
  // common neighbour of 0 (1), node 3 is two hops from 0 (1/q).
  const Graph g(4, {{0, 1}, {1, 2}, {1, 3}, {0, 2}});
  WalkConfig cfg;
  cfg.return_param_p = 2.0;
  cfg.inout_param_q = 0.5;
  cfg.walks_per_node = 20000;
  cfg.walk_length = 20;
  std::vector<long> counts(4, 0);
  for (const Walk& w : generate_walks(g, cfg)) {
    for (std::size_t i = 2; i < w.size(); ++i) {
      if (w[i - 2] == 0 && w[i - 1] == 1) ++counts[w[i]];
    }
  }
  const std::vector<long> observed{counts[0], counts[2], counts[3]};
  const std::vector<double> expected{0.5 / 3.5, 1.0 / 3.5, 2.0 / 3.5};
  CHECK(chi_square_p(oracle::chi_square(observed, expected), 2) > 0.01);
}

TEST_CASE("deepwalk preset is node2vec with p = q = 1") {
  const WalkConfig w = deepwalk_preset(5);
  CHECK(w.return_param_p == 1.0);
  CHECK(w.inout_param_q == 1.0);
  CHECK(w.seed == 5);
  Rng rng(4);
  const Graph g = oracle::random_graph(12, 0.3, rng);
  WalkConfig n2v;
  n2v.seed = 5;
  CHECK(generate_walks(g, w) == generate_walks(g, n2v));
}

TEST_CASE("walk config validation") {
  WalkConfig cfg;
  cfg.walk_length = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.return_param_p = 0;
  CHECK_THROWS_AS(generate_walks(Graph(2, {{0, 1}}), cfg), std::invalid_argument);
  CHECK_THROWS_AS(generate_walks(Graph(), WalkConfig{}), std::invalid_argument);
}

TEST_CASE("skip-gram output shape, init and errors") {
  const std::vector<Walk> walks{{0, 1, 2}, {2, 1, 0}};
  SkipGramConfig cfg;
  cfg.dim = 4;
  const EmbeddingMatrix e = train_skipgram(walks, 5, cfg);
  CHECK(e.node_count() == 5);
  CHECK(e.dim() == 4);
  CHECK(e.provenance == Provenance::kSource);

  cfg.epochs = 0;
  const EmbeddingMatrix init = train_skipgram(walks, 5, cfg);
  CHECK(init == train_skipgram(walks, 5, cfg));
  for (double x : init.values.values()) CHECK(std::abs(x) <= 0.5 / 4);
  // Nodes 3 and 4 never occur, so training leaves their rows at the initial values.
  for (std::size_t k = 0; k < 4; ++k) CHECK(e.values(3, k) == init.values(3, k));
  CHECK(e.values.row(0)[0] != init.values.row(0)[0]);

  CHECK_THROWS_AS(train_skipgram(walks, 0, cfg), std::invalid_argument);
  CHECK_THROWS_AS(train_skipgram({}, 3, cfg), std::invalid_argument);
  CHECK_THROWS_AS(train_skipgram({{0, 7}}, 3, cfg), std::invalid_argument);
}

TEST_CASE("skip-gram separates two disconnected cliques") {
  std::vector<Edge> edges;
  for (NodeId base : {0u, 5u}) {
    for (NodeId i = 0; i < 5; ++i) {
      for (NodeId j = i + 1; j < 5; ++j) edges.emplace_back(base + i, base + j);
    }
  }
  const Graph g(10, edges);
  SkipGramConfig s;
  s.dim = 8;
  const EmbeddingMatrix e = embed(g, WalkConfig{}, s);
  double intra = 0, inter = 0;
  int ni = 0, nx = 0;
  for (std::size_t a = 0; a < 10; ++a) {
    for (std::size_t b = a + 1; b < 10; ++b) {
      const double c = cosine(e.values.row(a), e.values.row(b));
      if ((a < 5) == (b < 5)) {
        intra += c;
        ++ni;
      } else {
        inter += c;
        ++nx;
      }
    }
  }
  CHECK(intra / ni > inter / nx);
}

TEST_CASE("embed is deterministic and finite") {
  const Graph path(3, {{0, 1}, {1, 2}});
  SkipGramConfig s;
  s.dim = 4;
  const EmbeddingMatrix a = embed(path, WalkConfig{}, s);
  CHECK(a.node_count() == 3);
  CHECK(a.dim() == 4);
  CHECK(a.values.all_finite());
  CHECK(a == embed(path, WalkConfig{}, s));
}

TEST_CASE("row norms stay bounded on a 400-node graph") {
  Rng rng(8);
  const Graph g = oracle::random_graph(400, 0.02, rng);
  SkipGramConfig s;
  s.epochs = 1;
  const EmbeddingMatrix e = embed(g, WalkConfig{}, s);
  CHECK(e.values.all_finite());
  for (std::size_t i = 0; i < e.node_count(); ++i) CHECK(std::sqrt(squared_norm(e.values.row(i))) < 1e3);
}

}  // TEST_SUITE
