#include "w2k/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <boost/math/special_functions/beta.hpp>

namespace w2k {

Triple complete(const RankQuery& q, NodeId candidate) {
  return q.direction == QueryDirection::kPredictTail ? Triple{q.known_entity, 0, candidate}
                                                     : Triple{candidate, 0, q.known_entity};
}

double rank_candidates(const RankQuery& q, const Matrix& embeddings, const EntityAuxParams& aux,
                       const RelationParams& rel, const TripleSet& filter) {
  const std::size_t n = embeddings.rows();
  if (q.known_entity >= n || q.true_answer >= n) throw std::invalid_argument("rank_candidates: node out of range");
  if (q.known_entity == q.true_answer) throw std::invalid_argument("rank_candidates: known entity equals answer");

  const double true_score = score_triple(embeddings, aux, rel, complete(q, q.true_answer));
  std::size_t higher = 0, tied = 0;
  for (NodeId c = 0; c < n; ++c) {
    if (c == q.known_entity || c == q.true_answer) continue;
    const Triple t = complete(q, c);
    if (filter.contains(t)) continue;
    const double s = score_triple(embeddings, aux, rel, t);
    if (s > true_score) {
      ++higher;
    } else if (s == true_score) {
      ++tied;
    }
  }
  return 1.0 + static_cast<double>(higher) + 0.5 * static_cast<double>(tied);
}

double mrr(std::span<const double> ranks) {
  if (ranks.empty()) throw std::invalid_argument("mrr: no ranks");
  double sum = 0.0;
  for (double r : ranks) sum += 1.0 / r;
  return sum / static_cast<double>(ranks.size());
}

double precision_at_k(std::span<const double> ranks, std::size_t k) {
  if (ranks.empty()) throw std::invalid_argument("precision_at_k: no ranks");
  if (k < 1) throw std::invalid_argument("precision_at_k: k must be >= 1");
  const auto hits = std::count_if(ranks.begin(), ranks.end(), [&](double r) { return r <= static_cast<double>(k); });
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

RelationParams distance_relation(std::size_t dim) {
  RelationParams rel;
  rel.kind = KgModelKind::kTransE;
  rel.dim = dim;
  rel.norm_order = 2;
  rel.r.assign(dim, 0.0);
  return rel;
}

MetricsReport evaluate_link_prediction(const EdgeSplit& split, const Matrix& embeddings, const EntityAuxParams& aux,
                                       const RelationParams& rel) {
  if (split.held_out_edges.empty()) throw std::invalid_argument("evaluate_link_prediction: no held-out edges");
  if (embeddings.rows() != split.train_graph.node_count()) {
    throw std::invalid_argument("evaluate_link_prediction: embedding rows differ from graph node count");
  }
  TripleSet filter;
  for (const Triple& t : to_triples(split.train_graph)) filter.insert(t);
  for (const Triple& t : to_triples(split.held_out_edges)) filter.insert(t);

  std::vector<RankQuery> queries;
  queries.reserve(2 * split.held_out_edges.size());
  for (const Edge& e : split.held_out_edges) {
    queries.push_back({e.u, QueryDirection::kPredictTail, e.v});
    queries.push_back({e.v, QueryDirection::kPredictHead, e.u});
  }

  MetricsReport report;
  report.ranks.resize(queries.size());
  const long count = static_cast<long>(queries.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < count; ++i) {
    report.ranks[i] = rank_candidates(queries[i], embeddings, aux, rel, filter);
  }
  report.query_count = queries.size();
  report.mrr = mrr(report.ranks);
  for (std::size_t k : kReportedK) report.precision_at_k[k] = precision_at_k(report.ranks, k);
  return report;
}

AnovaResult anova_one_way(std::span<const double> group1, std::span<const double> group2) {
  if (group1.size() < 2 || group2.size() < 2) throw std::invalid_argument("anova_one_way: each group needs >= 2 values");
  auto mean = [](std::span<const double> g) {
    return std::accumulate(g.begin(), g.end(), 0.0) / static_cast<double>(g.size());
  };
  const double n1 = static_cast<double>(group1.size());
  const double n2 = static_cast<double>(group2.size());
  const double m1 = mean(group1), m2 = mean(group2);
  const double grand = (n1 * m1 + n2 * m2) / (n1 + n2);

  double within = 0.0;
  for (double x : group1) within += (x - m1) * (x - m1);
  for (double x : group2) within += (x - m2) * (x - m2);
  const double between = n1 * (m1 - grand) * (m1 - grand) + n2 * (m2 - grand) * (m2 - grand);
  const double df_within = n1 + n2 - 2.0;

  AnovaResult r;
  r.mean_difference = m2 - m1;
  if (within == 0.0) {
    // Degenerate: no spread inside groups.
    r.f_statistic = between == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    r.p_value = between == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.f_statistic = between / (within / df_within);
  // P(F(1, df) > f) = I_{df / (df + f)}(df / 2, 1 / 2)
  const double x = df_within / (df_within + r.f_statistic);
  r.p_value = std::clamp(boost::math::ibeta(df_within / 2.0, 0.5, x), 0.0, 1.0);
  return r;
}

}  // namespace w2k
