#ifndef W2K_KG_HPP_
#define W2K_KG_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "w2k/embedding.hpp"
#include "w2k/graph.hpp"
#include "w2k/rng.hpp"

namespace w2k {

enum class KgModelKind : std::uint8_t { kTransE = 0, kTransH = 1, kTransD = 2, kDistMult = 3, kRescal = 4, kSimplE = 5 };

inline constexpr KgModelKind kAllKgKinds[] = {KgModelKind::kTransE,   KgModelKind::kTransH,
                                              KgModelKind::kTransD,   KgModelKind::kDistMult,
                                              KgModelKind::kRescal,   KgModelKind::kSimplE};

std::string_view to_string(KgModelKind kind);
std::optional<KgModelKind> parse_kg_kind(std::string_view name);

// Translational kinds score by negative distance and keep entity norms <= 1.
bool is_translational(KgModelKind kind);
// TransD carries a projection vector per entity, SimplE a second embedding.
bool has_entity_aux(KgModelKind kind);

// Frozen parameters of relation 0. Only the fields used by `kind` are sized.
struct RelationParams {
  KgModelKind kind = KgModelKind::kTransE;
  std::size_t dim = 0;
  int norm_order = 2;              // L1 or L2 distance for translational kinds
  std::vector<double> r;           // translation (TransE/H/D) or diagonal (DistMult, SimplE forward)
  std::vector<double> normal;      // TransH hyperplane normal, unit length
  std::vector<double> projection;  // TransD relation projection vector r_p
  std::vector<double> inverse;     // SimplE inverse-relation diagonal
  Matrix bilinear;                 // RESCAL M

  friend bool operator==(const RelationParams&, const RelationParams&) = default;
};

// Translational relations get r = 0 (the relation is symmetric); every other
// vector or matrix is drawn once from uniform(-0.1, 0.1). The TransH normal
// is renormalized and the RESCAL matrix divided by sqrt(d).
RelationParams init_relation(KgModelKind kind, std::size_t dim, int norm_order, std::uint64_t seed);

struct EntityAuxParams {
  Matrix values;  // n x d, empty for kinds without auxiliary vectors

  bool empty() const { return values.empty(); }
  friend bool operator==(const EntityAuxParams&, const EntityAuxParams&) = default;
};

struct KgTrainConfig {
  std::size_t dim = 32;  // used only for fresh-random initialization
  double margin = 1.0;
  double learning_rate = 0.01;
  std::size_t epochs = 500;
  std::size_t negatives_per_positive = 1;
  int norm_order = 2;
  double weight_decay = 1e-5;  // non-translational kinds only
  std::uint64_t seed = 1;
  // Seed for the frozen relation parameters; derived from `seed` when unset.
  // Sharing it across graphs gives every graph the same relation.
  std::optional<std::uint64_t> relation_seed;

  void validate() const;
};

// Entity-side inputs for one triple. The aux spans are empty unless
// has_entity_aux(kind).
struct EntityView {
  std::span<const double> head;
  std::span<const double> tail;
  std::span<const double> head_aux;
  std::span<const double> tail_aux;
};

// Plausibility of <h, r, t>; higher is more plausible.
double score(const EntityView& e, const RelationParams& rel);

// Adds scale * d score / d (h, t, h_aux, t_aux) into the gradient spans.
struct EntityGrad {
  std::span<double> head;
  std::span<double> tail;
  std::span<double> head_aux;
  std::span<double> tail_aux;
};
void accumulate_score_gradient(const EntityView& e, const RelationParams& rel, double scale,
                               const EntityGrad& out);

// Convenience for whole-matrix access.
EntityView entity_view(const Matrix& entities, const Matrix* aux, NodeId head, NodeId tail);
double score_triple(const Matrix& entities, const EntityAuxParams& aux, const RelationParams& rel,
                    const Triple& t);

// Corrupts head or tail (coin flip) with a uniform entity so the result is not
// in `known`, has head != tail and differs from `t`. After 4n failed draws it
// returns a corruption that only guarantees it differs from `t`.
Triple negative_sample(const Triple& t, std::size_t n, const TripleSet& known, Rng& rng);

// max(0, margin - score(pos) + score(neg)).
double margin_loss(const Matrix& entities, const EntityAuxParams& aux, const RelationParams& rel,
                   const Triple& pos, const Triple& neg, double margin);

// Adds d margin_loss / d entities (and aux) into the gradient matrices.
void accumulate_margin_gradient(const Matrix& entities, const EntityAuxParams& aux, const RelationParams& rel,
                                const Triple& pos, const Triple& neg, double margin, Matrix& entity_grad,
                                Matrix* aux_grad);

struct KgTrainResult {
  EmbeddingMatrix embeddings;
  RelationParams relation;
  EntityAuxParams aux;
  std::vector<double> loss_history;  // mean hinge per epoch
};

// Margin-ranking SGD over to_triples(g) with relation parameters frozen.
// With `init` the result is tagged finetuned, otherwise target.
KgTrainResult train_kg(const Graph& g, KgModelKind kind, const std::optional<EmbeddingMatrix>& init,
                       const KgTrainConfig& cfg);

}  // namespace w2k

#endif  // W2K_KG_HPP_
