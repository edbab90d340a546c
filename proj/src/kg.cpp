#include "w2k/kg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace w2k {

std::string_view to_string(KgModelKind kind) {
  switch (kind) {
    case KgModelKind::kTransE: return "transe";
    case KgModelKind::kTransH: return "transh";
    case KgModelKind::kTransD: return "transd";
    case KgModelKind::kDistMult: return "distmult";
    case KgModelKind::kRescal: return "rescal";
    case KgModelKind::kSimplE: return "simple";
  }
  return "unknown";
}

std::optional<KgModelKind> parse_kg_kind(std::string_view name) {
  for (KgModelKind k : kAllKgKinds)
    if (to_string(k) == name) return k;
  return std::nullopt;
}

bool is_translational(KgModelKind kind) {
  return kind == KgModelKind::kTransE || kind == KgModelKind::kTransH || kind == KgModelKind::kTransD;
}

bool has_entity_aux(KgModelKind kind) { return kind == KgModelKind::kTransD || kind == KgModelKind::kSimplE; }

void KgTrainConfig::validate() const {
  if (!(margin > 0.0)) throw std::invalid_argument("kg margin must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("kg learning_rate must be positive");
  if (negatives_per_positive < 1) throw std::invalid_argument("kg negatives_per_positive must be >= 1");
  if (norm_order != 1 && norm_order != 2) throw std::invalid_argument("kg norm_order must be 1 or 2");
}

RelationParams init_relation(KgModelKind kind, std::size_t dim, int norm_order, std::uint64_t seed) {
  if (dim < 1) throw std::invalid_argument("init_relation: dim must be >= 1");
  Rng rng(seed);
  auto draw = [&](std::size_t count) {
    std::vector<double> v(count);
    for (double& x : v) x = rng.uniform(-0.1, 0.1);
    return v;
  };
  RelationParams rel;
  rel.kind = kind;
  rel.dim = dim;
  rel.norm_order = norm_order;
  switch (kind) {
    case KgModelKind::kTransE:
      rel.r.assign(dim, 0.0);
      break;
    case KgModelKind::kTransH: {
      rel.r.assign(dim, 0.0);
      rel.normal = draw(dim);
      const double norm = std::sqrt(squared_norm(rel.normal));
      for (double& x : rel.normal) x /= norm;
      break;
    }
    case KgModelKind::kTransD:
      rel.r.assign(dim, 0.0);
      rel.projection = draw(dim);
      break;
    case KgModelKind::kDistMult:
      rel.r = draw(dim);
      break;
    case KgModelKind::kRescal: {
      rel.bilinear = Matrix(dim, dim);
      const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
      for (double& x : rel.bilinear.values()) x = rng.uniform(-0.1, 0.1) * scale;
      break;
    }
    case KgModelKind::kSimplE:
      rel.r = draw(dim);
      rel.inverse = draw(dim);
      break;
  }
  return rel;
}

namespace {

double distance(std::span<const double> u, int norm_order) {
  double s = 0.0;
  if (norm_order == 1) {
    for (double x : u) s += std::abs(x);
    return s;
  }
  for (double x : u) s += x * x;
  return std::sqrt(s);
}

// d(-||u||_p)/du written into g.
void neg_distance_grad(std::span<const double> u, int norm_order, std::span<double> g) {
  if (norm_order == 1) {
    for (std::size_t k = 0; k < u.size(); ++k) g[k] = u[k] > 0.0 ? -1.0 : (u[k] < 0.0 ? 1.0 : 0.0);
    return;
  }
  const double norm = distance(u, 2);
  for (std::size_t k = 0; k < u.size(); ++k) g[k] = norm > 0.0 ? -u[k] / norm : 0.0;
}

// Residual h_proj + r - t_proj of the translational kinds.
void translation_residual(const EntityView& e, const RelationParams& rel, std::span<double> u) {
  const std::size_t d = rel.dim;
  switch (rel.kind) {
    case KgModelKind::kTransE:
      for (std::size_t k = 0; k < d; ++k) u[k] = e.head[k] + rel.r[k] - e.tail[k];
      break;
    case KgModelKind::kTransH: {
      const double wh = dot(rel.normal, e.head);
      const double wt = dot(rel.normal, e.tail);
      for (std::size_t k = 0; k < d; ++k) {
        u[k] = (e.head[k] - rel.normal[k] * wh) + rel.r[k] - (e.tail[k] - rel.normal[k] * wt);
      }
      break;
    }
    case KgModelKind::kTransD: {
      const double ph = dot(e.head_aux, e.head);
      const double pt = dot(e.tail_aux, e.tail);
      for (std::size_t k = 0; k < d; ++k) {
        u[k] = (e.head[k] + rel.projection[k] * ph) + rel.r[k] - (e.tail[k] + rel.projection[k] * pt);
      }
      break;
    }
    default:
      throw std::logic_error("translation_residual: not a translational kind");
  }
}

void check_view(const EntityView& e, const RelationParams& rel) {
  const std::size_t d = rel.dim;
  if (e.head.size() != d || e.tail.size() != d) throw std::invalid_argument("score: dimension mismatch");
  if (has_entity_aux(rel.kind) && (e.head_aux.size() != d || e.tail_aux.size() != d)) {
    throw std::invalid_argument("score: auxiliary vectors missing or mismatched");
  }
}

}  // namespace

double score(const EntityView& e, const RelationParams& rel) {
  check_view(e, rel);
  const std::size_t d = rel.dim;
  switch (rel.kind) {
    case KgModelKind::kTransE:
    case KgModelKind::kTransH:
    case KgModelKind::kTransD: {
      std::vector<double> u(d);
      translation_residual(e, rel, u);
      return -distance(u, rel.norm_order);
    }
    case KgModelKind::kDistMult: {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += e.head[k] * rel.r[k] * e.tail[k];
      return s;
    }
    case KgModelKind::kRescal: {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += e.head[i] * dot(rel.bilinear.row(i), e.tail);
      return s;
    }
    case KgModelKind::kSimplE: {
      double fwd = 0.0, inv = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        fwd += e.head[k] * rel.r[k] * e.tail_aux[k];
        inv += e.tail[k] * rel.inverse[k] * e.head_aux[k];
      }
      return 0.5 * (fwd + inv);
    }
  }
  return 0.0;
}

void accumulate_score_gradient(const EntityView& e, const RelationParams& rel, double scale,
                               const EntityGrad& out) {
  check_view(e, rel);
  const std::size_t d = rel.dim;
  switch (rel.kind) {
    case KgModelKind::kTransE:
    case KgModelKind::kTransH:
    case KgModelKind::kTransD: {
      std::vector<double> u(d), g(d);
      translation_residual(e, rel, u);
      neg_distance_grad(u, rel.norm_order, g);
      if (rel.kind == KgModelKind::kTransE) {
        for (std::size_t k = 0; k < d; ++k) {
          out.head[k] += scale * g[k];
          out.tail[k] -= scale * g[k];
        }
      } else if (rel.kind == KgModelKind::kTransH) {
        // (I - w w^T) g
        const double wg = dot(rel.normal, g);
        for (std::size_t k = 0; k < d; ++k) {
          const double pg = g[k] - rel.normal[k] * wg;
          out.head[k] += scale * pg;
          out.tail[k] -= scale * pg;
        }
      } else {
        // Jacobian of h + r_p (h_p . h) is I + r_p h_p^T.
        const double rg = dot(rel.projection, g);
        for (std::size_t k = 0; k < d; ++k) {
          out.head[k] += scale * (g[k] + e.head_aux[k] * rg);
          out.head_aux[k] += scale * e.head[k] * rg;
          out.tail[k] -= scale * (g[k] + e.tail_aux[k] * rg);
          out.tail_aux[k] -= scale * e.tail[k] * rg;
        }
      }
      break;
    }
    case KgModelKind::kDistMult:
      for (std::size_t k = 0; k < d; ++k) {
        out.head[k] += scale * rel.r[k] * e.tail[k];
        out.tail[k] += scale * rel.r[k] * e.head[k];
      }
      break;
    case KgModelKind::kRescal:
      for (std::size_t i = 0; i < d; ++i) {
        out.head[i] += scale * dot(rel.bilinear.row(i), e.tail);
        double mh = 0.0;
        for (std::size_t j = 0; j < d; ++j) mh += rel.bilinear(j, i) * e.head[j];
        out.tail[i] += scale * mh;
      }
      break;
    case KgModelKind::kSimplE:
      for (std::size_t k = 0; k < d; ++k) {
        out.head[k] += scale * 0.5 * rel.r[k] * e.tail_aux[k];
        out.tail_aux[k] += scale * 0.5 * rel.r[k] * e.head[k];
        out.tail[k] += scale * 0.5 * rel.inverse[k] * e.head_aux[k];
        out.head_aux[k] += scale * 0.5 * rel.inverse[k] * e.tail[k];
      }
      break;
  }
}

EntityView entity_view(const Matrix& entities, const Matrix* aux, NodeId head, NodeId tail) {
  EntityView v{entities.row(head), entities.row(tail), {}, {}};
  if (aux != nullptr && !aux->empty()) {
    v.head_aux = aux->row(head);
    v.tail_aux = aux->row(tail);
  }
  return v;
}

double score_triple(const Matrix& entities, const EntityAuxParams& aux, const RelationParams& rel,
                    const Triple& t) {
  return score(entity_view(entities, &aux.values, t.head, t.tail), rel);
}

Triple negative_sample(const Triple& t, std::size_t n, const TripleSet& known, Rng& rng) {
  if (n < 2) throw std::invalid_argument("negative_sample: need at least 2 entities");
  for (std::size_t attempt = 0; attempt < 4 * n; ++attempt) {
    Triple c = t;
    const auto entity = static_cast<NodeId>(rng.below(n));
    (rng.coin() ? c.head : c.tail) = entity;
    if (c == t || c.head == c.tail || known.contains(c)) continue;
    return c;
  }
  // Every corruption seen was a known fact or degenerate; fall back to one
  // that at least differs from t.
  Triple c = t;
  c.head = static_cast<NodeId>((t.head + 1 + rng.below(n - 1)) % n);
  return c;
}

double margin_loss(const Matrix& entities, const EntityAuxParams& aux, const RelationParams& rel,
                   const Triple& pos, const Triple& neg, double margin) {
  return std::max(0.0, margin - score_triple(entities, aux, rel, pos) + score_triple(entities, aux, rel, neg));
}

void accumulate_margin_gradient(const Matrix& entities, const EntityAuxParams& aux, const RelationParams& rel,
                                const Triple& pos, const Triple& neg, double margin, Matrix& entity_grad,
                                Matrix* aux_grad) {
  if (margin_loss(entities, aux, rel, pos, neg, margin) <= 0.0) return;
  auto grad_for = [&](const Triple& t) {
    EntityGrad g{entity_grad.row(t.head), entity_grad.row(t.tail), {}, {}};
    if (aux_grad != nullptr && !aux_grad->empty()) {
      g.head_aux = aux_grad->row(t.head);
      g.tail_aux = aux_grad->row(t.tail);
    }
    return g;
  };
  accumulate_score_gradient(entity_view(entities, &aux.values, pos.head, pos.tail), rel, -1.0, grad_for(pos));
  accumulate_score_gradient(entity_view(entities, &aux.values, neg.head, neg.tail), rel, 1.0, grad_for(neg));
}

namespace {

void clamp_row_norm(std::span<double> row) {
  const double norm = std::sqrt(squared_norm(row));
  if (norm > 1.0) {
    for (double& x : row) x /= norm;
  }
}

// Rows touched by one (pos, neg) update, deduplicated.
struct TouchedRows {
  std::array<NodeId, 4> ids{};
  std::size_t count = 0;

  void add(NodeId v) {
    for (std::size_t i = 0; i < count; ++i)
      if (ids[i] == v) return;
    ids[count++] = v;
  }
};

}  // namespace

KgTrainResult train_kg(const Graph& g, KgModelKind kind, const std::optional<EmbeddingMatrix>& init,
                       const KgTrainConfig& cfg) {
  cfg.validate();
  if (g.edge_count() == 0) throw std::invalid_argument("train_kg: graph has no edges");
  const std::size_t n = g.node_count();
  Rng rng(cfg.seed);

  Matrix entities;
  if (init) {
    if (init->node_count() != n) throw std::invalid_argument("train_kg: init row count differs from graph");
    entities = init->values;
  } else {
    if (cfg.dim < 1) throw std::invalid_argument("train_kg: dim must be >= 1");
    entities = Matrix(n, cfg.dim);
  }
  const std::size_t d = entities.cols();
  const double bound = 6.0 / std::sqrt(static_cast<double>(d));
  if (!init) {
    for (double& x : entities.values()) x = rng.uniform(-bound, bound);
  }

  KgTrainResult result;
  result.relation = init_relation(kind, d, cfg.norm_order, cfg.relation_seed.value_or(derive_seed(cfg.seed, {0x52454c})));
  if (has_entity_aux(kind)) {
    result.aux.values = Matrix(n, d);
    for (double& x : result.aux.values.values()) x = rng.uniform(-bound, bound);
  }
  const RelationParams& rel = result.relation;
  Matrix& aux = result.aux.values;
  const bool translational = is_translational(kind);

  std::vector<Triple> triples = to_triples(g);
  const TripleSet known(triples.begin(), triples.end());

  if (cfg.epochs > 0 && translational) {
    for (std::size_t v = 0; v < n; ++v) clamp_row_norm(entities.row(v));
  }

  // Per-update gradient buffers, indexed by node like the parameters.
  Matrix entity_grad(n, d);
  Matrix aux_grad(aux.rows(), aux.cols());
  Matrix* aux_grad_ptr = aux.empty() ? nullptr : &aux_grad;

  result.loss_history.reserve(cfg.epochs);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(triples.begin(), triples.end());
    double loss_sum = 0.0;
    std::size_t pairs = 0;
    for (const Triple& pos : triples) {
      for (std::size_t s = 0; s < cfg.negatives_per_positive; ++s, ++pairs) {
        const Triple neg = negative_sample(pos, n, known, rng);
        const double loss = margin_loss(entities, result.aux, rel, pos, neg, cfg.margin);
        loss_sum += loss;
        if (loss <= 0.0) continue;

        TouchedRows touched;
        touched.add(pos.head);
        touched.add(pos.tail);
        touched.add(neg.head);
        touched.add(neg.tail);
        for (std::size_t i = 0; i < touched.count; ++i) {
          std::fill(entity_grad.row(touched.ids[i]).begin(), entity_grad.row(touched.ids[i]).end(), 0.0);
          if (aux_grad_ptr) std::fill(aux_grad.row(touched.ids[i]).begin(), aux_grad.row(touched.ids[i]).end(), 0.0);
        }
        accumulate_margin_gradient(entities, result.aux, rel, pos, neg, cfg.margin, entity_grad, aux_grad_ptr);

        for (std::size_t i = 0; i < touched.count; ++i) {
          const NodeId v = touched.ids[i];
          auto row = entities.row(v);
          auto grad = entity_grad.row(v);
          const double decay = translational ? 0.0 : cfg.weight_decay;
          for (std::size_t k = 0; k < d; ++k) row[k] -= cfg.learning_rate * (grad[k] + decay * row[k]);
          if (aux_grad_ptr) {
            auto arow = aux.row(v);
            auto agrad = aux_grad.row(v);
            for (std::size_t k = 0; k < d; ++k) arow[k] -= cfg.learning_rate * (agrad[k] + decay * arow[k]);
          }
          if (translational) clamp_row_norm(row);
        }
      }
    }
    result.loss_history.push_back(pairs > 0 ? loss_sum / static_cast<double>(pairs) : 0.0);
  }

  result.embeddings = EmbeddingMatrix(std::move(entities), init ? Provenance::kFinetuned : Provenance::kTarget);
  return result;
}

}  // namespace w2k
