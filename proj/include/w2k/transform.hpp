#ifndef W2K_TRANSFORM_HPP_
#define W2K_TRANSFORM_HPP_

#include <cstdint>
#include <vector>

#include "w2k/embedding.hpp"
#include "w2k/graph.hpp"

namespace w2k {

// Key, query and value affine maps x -> x W + b, each d x d with a length-d bias.
struct AttentionParams {
  Matrix w_key, w_query, w_value;
  std::vector<double> b_key, b_query, b_value;

  AttentionParams() = default;
  explicit AttentionParams(std::size_t d);  // all zeros

  std::size_t dim() const { return w_key.rows(); }
  bool all_finite() const;

  // Visits the six blocks in storage order: W_K, W_Q, W_V, b_K, b_Q, b_V.
  template <typename F>
  void for_each_block(F&& f) {
    f(w_key.values()); f(w_query.values()); f(w_value.values());
    f(std::span<double>(b_key)); f(std::span<double>(b_query)); f(std::span<double>(b_value));
  }
  template <typename F>
  void for_each_block(F&& f) const {
    f(w_key.values()); f(w_query.values()); f(w_value.values());
    f(std::span<const double>(b_key)); f(std::span<const double>(b_query)); f(std::span<const double>(b_value));
  }

  friend bool operator==(const AttentionParams&, const AttentionParams&) = default;
};

// Weights uniform in +-sqrt(6 / 2d), biases zero.
AttentionParams init_params(std::size_t d, std::uint64_t seed);

// Output = (Q K^T + A) V with K, Q, V the affine images of E. No softmax and
// no 1/sqrt(d) scaling.
EmbeddingMatrix self_attention_forward(const AdjacencyMatrix& a, const EmbeddingMatrix& e,
                                       const AttentionParams& theta);

EmbeddingMatrix apply_transform(const Graph& g, const EmbeddingMatrix& source, const AttentionParams& theta);

// (1/n) sum over rows of ||t_row - f_row||^2.
double embedding_error(const Matrix& transformed, const Matrix& finetuned);

struct EmbeddingPairView {
  const Matrix* transformed;
  const Matrix* finetuned;
};

// Mean embedding_error over the batch.
double batch_loss(const std::vector<EmbeddingPairView>& pairs);

struct TrainPair {
  AdjacencyMatrix adjacency;
  EmbeddingMatrix source;
  EmbeddingMatrix finetuned;

  TrainPair(const Graph& g, EmbeddingMatrix src, EmbeddingMatrix fine);
  TrainPair(AdjacencyMatrix a, EmbeddingMatrix src, EmbeddingMatrix fine);
};

// Loss of the attention model on a batch, i.e. batch_loss of the forward pass.
double transform_loss(const std::vector<const TrainPair*>& batch, const AttentionParams& theta);

// Exact gradient of transform_loss with respect to every entry of theta.
// Per-pair gradients are computed in parallel and reduced in batch order.
AttentionParams loss_gradient(const std::vector<const TrainPair*>& batch, const AttentionParams& theta);

struct TransformTrainConfig {
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  std::size_t epochs = 300;
  // Rescale each batch gradient to at most this L2 norm; 0 disables clipping.
  double max_grad_norm = 1.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct TransformTrainResult {
  AttentionParams params;            // validation-best (train-best without validation data)
  std::vector<double> train_loss;    // per epoch, after the epoch's updates
  std::vector<double> validation_loss;
  std::size_t best_epoch = 0;
};

// Shuffled mini-batch SGD on the mean embedding error.
TransformTrainResult train_transformer(const std::vector<TrainPair>& train, const std::vector<TrainPair>& validation,
                                       const TransformTrainConfig& cfg);

}  // namespace w2k

#endif  // W2K_TRANSFORM_HPP_
