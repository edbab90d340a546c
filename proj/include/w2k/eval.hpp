#ifndef W2K_EVAL_HPP_
#define W2K_EVAL_HPP_

#include <map>
#include <span>
#include <vector>

#include "w2k/embedding.hpp"
#include "w2k/graph.hpp"
#include "w2k/kg.hpp"
#include "w2k/timing.hpp"

namespace w2k {

enum class QueryDirection : std::uint8_t { kPredictTail, kPredictHead };

struct RankQuery {
  NodeId known_entity = 0;
  QueryDirection direction = QueryDirection::kPredictTail;
  NodeId true_answer = 0;
};

// The triple a query completes with `candidate` in the missing slot.
Triple complete(const RankQuery& q, NodeId candidate);

// Filtered mid-rank of the true answer: 1 + #(surviving candidates scoring
// strictly higher) + 0.5 * #(surviving candidates tied with it). Candidates
// are all nodes except the known entity; a candidate is filtered out when its
// completed triple is in `filter`, unless it is the true answer.
double rank_candidates(const RankQuery& q, const Matrix& embeddings, const EntityAuxParams& aux,
                       const RelationParams& rel, const TripleSet& filter);

double mrr(std::span<const double> ranks);
double precision_at_k(std::span<const double> ranks, std::size_t k);

// Relation used to rank embeddings that have no KG model of their own
// (source embeddings): TransE with a zero translation, i.e. -||h - t||_2.
RelationParams distance_relation(std::size_t dim);

struct MetricsReport {
  double mrr = 0.0;
  std::map<std::size_t, double> precision_at_k;
  std::size_t query_count = 0;
  std::vector<double> ranks;
  TimingLog timings;
};

inline constexpr std::size_t kReportedK[] = {1, 3, 10};

// Two queries per held-out edge (u, v): <u, 0, ?> answered by v and
// <?, 0, v> answered by u. The filter holds both orientations of every train
// and held-out edge.
MetricsReport evaluate_link_prediction(const EdgeSplit& split, const Matrix& embeddings, const EntityAuxParams& aux,
                                       const RelationParams& rel);

struct AnovaResult {
  double f_statistic = 0.0;
  double p_value = 1.0;
  double mean_difference = 0.0;  // mean(group2) - mean(group1)
};

// One-way ANOVA of two groups, F ~ F(1, n1 + n2 - 2).
AnovaResult anova_one_way(std::span<const double> group1, std::span<const double> group2);

}  // namespace w2k

#endif  // W2K_EVAL_HPP_
