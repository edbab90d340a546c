#include "w2k/transform.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "w2k/kernels.hpp"
#include "w2k/rng.hpp"

namespace w2k {

namespace kp = kernels::parallel;

AttentionParams::AttentionParams(std::size_t d)
    : w_key(d, d), w_query(d, d), w_value(d, d), b_key(d, 0.0), b_query(d, 0.0), b_value(d, 0.0) {}

bool AttentionParams::all_finite() const {
  bool ok = true;
  for_each_block([&](std::span<const double> block) {
    for (double x : block) ok = ok && std::isfinite(x);
  });
  return ok;
}

AttentionParams init_params(std::size_t d, std::uint64_t seed) {
  if (d < 1) throw std::invalid_argument("init_params: d must be >= 1");
  AttentionParams theta(d);
  const double bound = std::sqrt(6.0 / (2.0 * static_cast<double>(d)));
  Rng rng(seed);
  for (Matrix* w : {&theta.w_key, &theta.w_query, &theta.w_value}) {
    for (double& x : w->values()) x = rng.uniform(-bound, bound);
  }
  return theta;
}

namespace {

void check_theta(const AttentionParams& theta, std::size_t d) {
  if (theta.dim() != d) throw std::invalid_argument("attention parameters do not match embedding dim");
  require_shape(theta.w_key, d, d, "W_K");
  require_shape(theta.w_query, d, d, "W_Q");
  require_shape(theta.w_value, d, d, "W_V");
  if (theta.b_key.size() != d || theta.b_query.size() != d || theta.b_value.size() != d) {
    throw std::invalid_argument("attention bias length does not match embedding dim");
  }
}

// Intermediates of one forward pass, kept for the backward pass.
struct ForwardCache {
  Matrix key, query, value, logits, output;
};

void forward(const Matrix& a, const Matrix& e, const AttentionParams& theta, ForwardCache& c) {
  const std::size_t n = e.rows();
  require_shape(a, n, n, "adjacency");
  check_theta(theta, e.cols());
  kp::affine(e, theta.w_key, theta.b_key, c.key);
  kp::affine(e, theta.w_query, theta.b_query, c.query);
  kp::affine(e, theta.w_value, theta.b_value, c.value);
  kp::gemm_nt(c.query, c.key, c.logits);
  for (std::size_t i = 0; i < c.logits.size(); ++i) c.logits.data()[i] += a.data()[i];
  kp::gemm_nn(c.logits, c.value, c.output);
}

void add_into(AttentionParams& acc, const AttentionParams& g) {
  std::vector<std::span<const double>> src;
  g.for_each_block([&](std::span<const double> b) { src.push_back(b); });
  std::size_t i = 0;
  acc.for_each_block([&](std::span<double> b) {
    for (std::size_t k = 0; k < b.size(); ++k) b[k] += src[i][k];
    ++i;
  });
}

void affine_backward(const Matrix& e, const Matrix& d_out, Matrix& d_weight, std::vector<double>& d_bias) {
  kp::gemm_tn(e, d_out, d_weight);
  d_bias = kernels::column_sums(d_out);
}

}  // namespace

EmbeddingMatrix self_attention_forward(const AdjacencyMatrix& a, const EmbeddingMatrix& e,
                                       const AttentionParams& theta) {
  ForwardCache c;
  forward(a.values(), e.values, theta, c);
  return EmbeddingMatrix(std::move(c.output), Provenance::kTransformed);
}

EmbeddingMatrix apply_transform(const Graph& g, const EmbeddingMatrix& source, const AttentionParams& theta) {
  if (source.node_count() != g.node_count()) {
    throw std::invalid_argument("apply_transform: embedding rows differ from graph node count");
  }
  return self_attention_forward(adjacency(g), source, theta);
}

double embedding_error(const Matrix& transformed, const Matrix& finetuned) {
  if (!transformed.same_shape(finetuned)) throw std::invalid_argument("embedding_error: shape mismatch");
  if (transformed.rows() == 0) throw std::invalid_argument("embedding_error: no rows");
  double sum = 0.0;
  for (std::size_t i = 0; i < transformed.size(); ++i) {
    const double diff = transformed.data()[i] - finetuned.data()[i];
    sum += diff * diff;
  }
  return sum / static_cast<double>(transformed.rows());
}

double batch_loss(const std::vector<EmbeddingPairView>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("batch_loss: empty batch");
  double sum = 0.0;
  for (const auto& p : pairs) sum += embedding_error(*p.transformed, *p.finetuned);
  return sum / static_cast<double>(pairs.size());
}

TrainPair::TrainPair(const Graph& g, EmbeddingMatrix src, EmbeddingMatrix fine)
    : TrainPair(w2k::adjacency(g), std::move(src), std::move(fine)) {}

TrainPair::TrainPair(AdjacencyMatrix a, EmbeddingMatrix src, EmbeddingMatrix fine)
    : adjacency(std::move(a)), source(std::move(src)), finetuned(std::move(fine)) {
  if (!source.values.same_shape(finetuned.values)) {
    throw std::invalid_argument("TrainPair: source and finetuned shapes differ");
  }
  if (adjacency.size() != source.node_count()) {
    throw std::invalid_argument("TrainPair: adjacency size differs from embedding rows");
  }
}

double transform_loss(const std::vector<const TrainPair*>& batch, const AttentionParams& theta) {
  if (batch.empty()) throw std::invalid_argument("transform_loss: empty batch");
  std::vector<double> errors(batch.size());
  const long b = static_cast<long>(batch.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < b; ++i) {
    ForwardCache c;
    forward(batch[i]->adjacency.values(), batch[i]->source.values, theta, c);
    errors[i] = embedding_error(c.output, batch[i]->finetuned.values);
  }
  return std::accumulate(errors.begin(), errors.end(), 0.0) / static_cast<double>(batch.size());
}

AttentionParams loss_gradient(const std::vector<const TrainPair*>& batch, const AttentionParams& theta) {
  if (batch.empty()) throw std::invalid_argument("loss_gradient: empty batch");
  const std::size_t d = theta.dim();
  for (const TrainPair* p : batch) {
    if (p->source.dim() != d) throw std::invalid_argument("loss_gradient: embedding dim differs from parameters");
  }
  std::vector<AttentionParams> per_pair(batch.size());
  const double b = static_cast<double>(batch.size());
  const long count = static_cast<long>(batch.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < count; ++i) {
    const Matrix& e = batch[i]->source.values;
    ForwardCache c;
    forward(batch[i]->adjacency.values(), e, theta, c);
    const double n = static_cast<double>(e.rows());

    // dLoss/dOutput = 2 (Output - F) / (n b)
    Matrix d_out = c.output;
    const Matrix& f = batch[i]->finetuned.values;
    for (std::size_t k = 0; k < d_out.size(); ++k) d_out.data()[k] = 2.0 * (d_out.data()[k] - f.data()[k]) / (n * b);

    Matrix d_logits, d_value, d_query, d_key;
    kp::gemm_nt(d_out, c.value, d_logits);  // dL = dO V^T
    kp::gemm_tn(c.logits, d_out, d_value);  // dV = L^T dO
    kp::gemm_nn(d_logits, c.key, d_query);  // dQ = dL K
    kp::gemm_tn(d_logits, c.query, d_key);  // dK = dL^T Q

    AttentionParams& g = per_pair[i];
    affine_backward(e, d_key, g.w_key, g.b_key);
    affine_backward(e, d_query, g.w_query, g.b_query);
    affine_backward(e, d_value, g.w_value, g.b_value);
  }
  AttentionParams total(d);
  for (const auto& g : per_pair) add_into(total, g);
  return total;
}

void TransformTrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("transform batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("transform learning_rate must be positive");
  if (!(max_grad_norm >= 0.0)) throw std::invalid_argument("transform max_grad_norm must be >= 0");
}

TransformTrainResult train_transformer(const std::vector<TrainPair>& train, const std::vector<TrainPair>& validation,
                                       const TransformTrainConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw std::invalid_argument("train_transformer: no training pairs");
  const std::size_t d = train.front().source.dim();
  for (const auto* set : {&train, &validation}) {
    for (const TrainPair& p : *set) {
      if (p.source.dim() != d) throw std::invalid_argument("train_transformer: inconsistent embedding dim");
    }
  }

  TransformTrainResult result;
  result.params = init_params(d, cfg.seed);
  if (cfg.epochs == 0) return result;

  std::vector<const TrainPair*> all_train, all_val;
  for (const auto& p : train) all_train.push_back(&p);
  for (const auto& p : validation) all_val.push_back(&p);

  AttentionParams theta = result.params;
  Rng rng(derive_seed(cfg.seed, {0x5347}));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  double best = std::numeric_limits<double>::infinity();

  auto finite_or_inf = [](double x) { return std::isfinite(x) ? x : std::numeric_limits<double>::infinity(); };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<const TrainPair*> batch;
      for (std::size_t k = start; k < std::min(order.size(), start + cfg.batch_size); ++k) {
        batch.push_back(&train[order[k]]);
      }
      const AttentionParams grad = loss_gradient(batch, theta);
      std::vector<std::span<const double>> g;
      double grad_sq = 0.0;
      grad.for_each_block([&](std::span<const double> blk) {
        g.push_back(blk);
        grad_sq += squared_norm(blk);
      });
      double step = cfg.learning_rate;
      if (cfg.max_grad_norm > 0.0 && grad_sq > cfg.max_grad_norm * cfg.max_grad_norm) {
        step *= cfg.max_grad_norm / std::sqrt(grad_sq);
      }
      std::size_t blk = 0;
      theta.for_each_block([&](std::span<double> p) {
        for (std::size_t k = 0; k < p.size(); ++k) p[k] -= step * g[blk][k];
        ++blk;
      });
    }
    const double train_loss = transform_loss(all_train, theta);
    const double val_loss = all_val.empty() ? train_loss : transform_loss(all_val, theta);
    result.train_loss.push_back(train_loss);
    if (!all_val.empty()) result.validation_loss.push_back(val_loss);
    if (finite_or_inf(val_loss) < best) {
      best = val_loss;
      result.params = theta;
      result.best_epoch = epoch;
    }
  }
  return result;
}

}  // namespace w2k
