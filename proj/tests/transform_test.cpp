#include "doctest.h"
#include "oracles.hpp"
#include "w2k/transform.hpp"

using namespace w2k;

namespace {

AttentionParams random_params(std::size_t d, Rng& rng, double scale = 0.5) {
  AttentionParams t(d);
  t.for_each_block([&](std::span<double> b) {
    for (double& x : b) x = rng.uniform(-scale, scale);
  });
  return t;
}

TrainPair random_pair(std::size_t n, std::size_t d, Rng& rng) {
  const Graph g = oracle::random_graph(n, 0.3, rng);
  return TrainPair(g, EmbeddingMatrix(oracle::random_matrix(n, d, rng), Provenance::kSource),
                   EmbeddingMatrix(oracle::random_matrix(n, d, rng), Provenance::kFinetuned));
}

std::vector<std::span<double>> blocks(AttentionParams& t) {
  std::vector<std::span<double>> out;
  t.for_each_block([&](std::span<double> b) { out.push_back(b); });
  return out;
}

double l2(const AttentionParams& t) {
  double s = 0;
  t.for_each_block([&](std::span<const double> b) { s += squared_norm(b); });
  return std::sqrt(s);
}

}  // namespace

TEST_SUITE("transform") {

TEST_CASE("initialization bounds and determinism") {
  const AttentionParams t = init_params(8, 3);
  const double bound = std::sqrt(6.0 / 16.0);
  for (const Matrix* w : {&t.w_key, &t.w_query, &t.w_value}) {
    CHECK(w->rows() == 8);
    for (double x : w->values()) CHECK(std::abs(x) <= bound);
  }
  for (const auto* b : {&t.b_key, &t.b_query, &t.b_value}) {
    CHECK(b->size() == 8);
    for (double x : *b) CHECK(x == 0.0);
  }
  CHECK(t == init_params(8, 3));
  CHECK_FALSE(t == init_params(8, 4));
  CHECK_THROWS_AS(init_params(0, 1), std::invalid_argument);
}

TEST_CASE("identity maps on a two-node graph give an all-ones output") {
  // K = Q = V = I, so (I I^T + A) I = I + A, which is all ones here.
  const AdjacencyMatrix a(oracle::dense_adjacency(2, {{0, 1}}));
  AttentionParams t(2);
  t.w_key = t.w_query = t.w_value = Matrix::identity(2);
  const EmbeddingMatrix e(Matrix::identity(2), Provenance::kSource);
  const EmbeddingMatrix out = self_attention_forward(a, e, t);
  CHECK(out.provenance == Provenance::kTransformed);
  CHECK(out.values == Matrix(2, 2, 1.0));

  CHECK(self_attention_forward(a, e, AttentionParams(2)).values == Matrix(2, 2));
}

TEST_CASE("forward pass matches the explicit-sum oracle") {
  Rng rng(12);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 1 + rng.below(12), d = 1 + rng.below(6);
    const Graph g = oracle::random_graph(n, 0.4, rng);
    const EmbeddingMatrix e(oracle::random_matrix(n, d, rng), Provenance::kSource);
    const AttentionParams t = random_params(d, rng);
    const Matrix got = apply_transform(g, e, t).values;
    const Matrix want = oracle::attention_oracle(adjacency(g).values(), e.values, t);
    CHECK(oracle::max_abs_diff(got, want) < 1e-12);
  }
}

TEST_CASE("forward pass rejects mismatched shapes") {
  const Graph g(3, {{0, 1}});
  const EmbeddingMatrix e(Matrix(3, 2), Provenance::kSource);
  CHECK_THROWS_AS(apply_transform(g, e, AttentionParams(3)), std::invalid_argument);
  CHECK_THROWS_AS(apply_transform(Graph(4, {}), e, AttentionParams(2)), std::invalid_argument);
}

TEST_CASE("embedding error and batch loss examples") {
  Matrix t(2, 2), f(2, 2);
  t(0, 0) = 1;
  t(1, 1) = 2;
  // ((1)^2 + (2)^2) / 2 rows
  CHECK(embedding_error(t, f) == doctest::Approx(2.5));
  CHECK(embedding_error(f, f) == 0.0);
  const Matrix t2(2, 2, 1.0);
  CHECK(embedding_error(t2, f) == doctest::Approx(2.0));
  CHECK(batch_loss({{&t, &f}, {&t2, &f}}) == doctest::Approx(2.25));
  CHECK_THROWS_AS(embedding_error(Matrix(2, 3), f), std::invalid_argument);
  CHECK_THROWS_AS(batch_loss({}), std::invalid_argument);
}

TEST_CASE("loss gradient matches central differences for all six blocks") {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<TrainPair> pairs;
    const std::size_t d = 1 + rng.below(4);
    for (int i = 0; i < 3; ++i) pairs.push_back(random_pair(2 + rng.below(6), d, rng));
    std::vector<const TrainPair*> batch;
    for (const auto& p : pairs) batch.push_back(&p);
    AttentionParams theta = random_params(d, rng);
    AttentionParams grad = loss_gradient(batch, theta);
    const auto loss = [&] { return transform_loss(batch, theta); };
    const auto params = blocks(theta);
    const auto analytic = blocks(grad);
    for (std::size_t b = 0; b < 6; ++b) {
      CAPTURE(b);
      double worst = 0;
      for (std::size_t k = 0; k < params[b].size(); ++k) {
        worst = std::max(worst, oracle::rel_error(analytic[b][k], oracle::central_difference(loss, params[b][k])));
      }
      CHECK(worst < 1e-5);
    }
  }
}

TEST_CASE("gradient vanishes at an exact fit") {
  Rng rng(14);
  const Graph g = oracle::random_graph(6, 0.4, rng);
  const EmbeddingMatrix e(oracle::random_matrix(6, 3, rng), Provenance::kSource);
  const AttentionParams theta = random_params(3, rng);
  const TrainPair p(g, e, apply_transform(g, e, theta));
  CHECK(transform_loss({&p}, theta) < 1e-24);
  CHECK(l2(loss_gradient({&p}, theta)) < 1e-12);
}

TEST_CASE("batch gradient is the mean of per-pair gradients") {
  Rng rng(15);
  const TrainPair p1 = random_pair(5, 3, rng), p2 = random_pair(7, 3, rng);
  const AttentionParams theta = random_params(3, rng);
  AttentionParams both = loss_gradient({&p1, &p2}, theta);
  AttentionParams g1 = loss_gradient({&p1}, theta);
  AttentionParams g2 = loss_gradient({&p2}, theta);
  const auto b = blocks(both), s1 = blocks(g1), s2 = blocks(g2);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t k = 0; k < b[i].size(); ++k) CHECK(b[i][k] == doctest::Approx(0.5 * (s1[i][k] + s2[i][k])));
  }
}

TEST_CASE("relabelling nodes permutes the output rows") {
  Rng rng(16);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 2 + rng.below(10), d = 1 + rng.below(5);
    const Graph g = oracle::random_graph(n, 0.4, rng);
    const Matrix e = oracle::random_matrix(n, d, rng);
    const AttentionParams t = random_params(d, rng);
    std::vector<NodeId> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<NodeId>(i);
    rng.shuffle(perm.begin(), perm.end());
    std::vector<Edge> edges;
    for (const Edge& x : g.edges()) edges.emplace_back(perm[x.u], perm[x.v]);
    Matrix pe(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < d; ++k) pe(perm[i], k) = e(i, k);
    }
    const Matrix out = apply_transform(g, EmbeddingMatrix(e, Provenance::kSource), t).values;
    const Matrix pout = apply_transform(Graph(n, edges), EmbeddingMatrix(pe, Provenance::kSource), t).values;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < d; ++k) CHECK(pout(perm[i], k) == doctest::Approx(out(i, k)));
    }
  }
}

TEST_CASE("one parameter set handles graphs of different sizes") {
  Rng rng(17);
  const AttentionParams t = init_params(4, 2);
  for (std::size_t n : {16, 355}) {
    const Graph g = oracle::random_graph(n, 0.05, rng);
    const EmbeddingMatrix out = apply_transform(g, EmbeddingMatrix(oracle::random_matrix(n, 4, rng), Provenance::kSource), t);
    CHECK(out.node_count() == n);
    CHECK(out.dim() == 4);
    CHECK(out.values.all_finite());
  }
}

TEST_CASE("a small gradient step lowers the loss") {
  Rng rng(18);
  std::vector<TrainPair> pairs;
  for (int i = 0; i < 4; ++i) pairs.push_back(random_pair(6, 3, rng));
  std::vector<const TrainPair*> batch;
  for (const auto& p : pairs) batch.push_back(&p);
  AttentionParams theta = random_params(3, rng);
  const double before = transform_loss(batch, theta);
  AttentionParams grad = loss_gradient(batch, theta);
  const auto p = blocks(theta), g = blocks(grad);
  for (std::size_t b = 0; b < 6; ++b) {
    for (std::size_t k = 0; k < p[b].size(); ++k) p[b][k] -= 1e-6 * g[b][k];
  }
  CHECK(transform_loss(batch, theta) < before);
}

TEST_CASE("training with zero epochs returns the initialization") {
  Rng rng(19);
  std::vector<TrainPair> train;
  train.push_back(random_pair(5, 3, rng));
  TransformTrainConfig cfg;
  cfg.epochs = 0;
  const TransformTrainResult r = train_transformer(train, {}, cfg);
  CHECK(r.params == init_params(3, cfg.seed));
  CHECK(r.train_loss.empty());
  CHECK(r.validation_loss.empty());
  CHECK_THROWS_AS(train_transformer({}, {}, cfg), std::invalid_argument);
  cfg.batch_size = 0;
  CHECK_THROWS_AS(train_transformer(train, {}, cfg), std::invalid_argument);
}

TEST_CASE("training lowers the loss on a learnable task") {
  // Targets produced by a hidden parameter set, so a zero-loss solution exists.
  Rng rng(20);
  const AttentionParams hidden = random_params(3, rng, 0.3);
  std::vector<TrainPair> train, val;
  for (int i = 0; i < 24; ++i) {
    const Graph g = oracle::random_graph(4 + rng.below(5), 0.4, rng);
    const EmbeddingMatrix e(oracle::random_matrix(g.node_count(), 3, rng), Provenance::kSource);
    (i < 18 ? train : val).emplace_back(g, e, apply_transform(g, e, hidden));
  }
  TransformTrainConfig cfg;
  cfg.batch_size = 6;
  cfg.epochs = 60;
  cfg.learning_rate = 0.02;
  const TransformTrainResult r = train_transformer(train, val, cfg);
  REQUIRE(r.train_loss.size() == 60);
  REQUIRE(r.validation_loss.size() == 60);
  CHECK(r.train_loss.back() < 0.5 * r.train_loss.front());
  CHECK(r.validation_loss[r.best_epoch] == *std::min_element(r.validation_loss.begin(), r.validation_loss.end()));
  CHECK(r.params.all_finite());
  const TransformTrainResult again = train_transformer(train, val, cfg);
  CHECK(again.params == r.params);
  CHECK(again.train_loss == r.train_loss);
}

}  // TEST_SUITE
