// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.
//
//   w2k_acceptance [--work DIR] [--keep]

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "w2k/eval.hpp"
#include "w2k/io.hpp"
#include "w2k/pipeline.hpp"
#include "w2k/transform.hpp"

using namespace w2k;
namespace pl = w2k::pipeline;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

AttentionParams random_params(std::size_t d, Rng& rng, double scale) {
  AttentionParams t(d);
  t.for_each_block([&](std::span<double> b) {
    for (double& x : b) x = rng.uniform(-scale, scale);
  });
  return t;
}

// ---- 1: gradients ----------------------------------------------------------

double transform_gradient_error(Rng& rng) {
  const std::size_t d = 1 + rng.below(4);
  std::vector<TrainPair> pairs;
  const std::size_t count = 1 + rng.below(3);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t n = 1 + rng.below(6);
    const Graph g = oracle::random_graph(n, 0.4, rng);
    pairs.emplace_back(g, EmbeddingMatrix(oracle::random_matrix(n, d, rng), Provenance::kSource),
                       EmbeddingMatrix(oracle::random_matrix(n, d, rng), Provenance::kFinetuned));
  }
  std::vector<const TrainPair*> batch;
  for (const auto& p : pairs) batch.push_back(&p);
  AttentionParams theta = random_params(d, rng, 0.5);
  const AttentionParams grad = loss_gradient(batch, theta);
  std::vector<std::span<const double>> analytic;
  grad.for_each_block([&](std::span<const double> b) { analytic.push_back(b); });
  const auto loss = [&] { return transform_loss(batch, theta); };
  double worst = 0;
  std::size_t blk = 0;
  theta.for_each_block([&](std::span<double> b) {
    for (std::size_t k = 0; k < b.size(); ++k) {
      worst = std::max(worst, oracle::rel_error(analytic[blk][k], oracle::central_difference(loss, b[k])));
    }
    ++blk;
  });
  return worst;
}

// Returns -1 when an L1 instance lies within the difference step of a kink,
// where the derivative does not exist.
double kg_gradient_error(KgModelKind kind, int norm, Rng& rng) {
  const std::size_t n = 2 + rng.below(5), d = 1 + rng.below(4);
  Matrix ent = oracle::random_matrix(n, d, rng);
  EntityAuxParams aux;
  if (has_entity_aux(kind)) aux.values = oracle::random_matrix(n, d, rng);
  RelationParams rel = init_relation(kind, d, norm, rng.next());
  if (is_translational(kind)) {
    for (double& x : rel.r) x = rng.uniform(-0.3, 0.3);
  }
  const auto pick = [&] { return static_cast<NodeId>(rng.below(n)); };
  Triple pos{pick(), 0, pick()};
  while (pos.tail == pos.head) pos.tail = pick();
  const Triple neg{pick(), 0, pick()};
  const double margin = 100.0;
  Matrix grad(n, d);
  Matrix aux_grad = has_entity_aux(kind) ? Matrix(n, d) : Matrix();
  accumulate_margin_gradient(ent, aux, rel, pos, neg, margin, grad, has_entity_aux(kind) ? &aux_grad : nullptr);
  const auto loss = [&] { return margin_loss(ent, aux, rel, pos, neg, margin); };
  double worst = 0;
  bool smooth = true;
  auto check = [&](Matrix& params, const Matrix& analytic) {
    for (std::size_t i = 0; i < params.size() && smooth; ++i) {
      const double numeric = oracle::central_difference(loss, params.data()[i]);
      if (norm == 1 && std::abs(numeric - oracle::central_difference(loss, params.data()[i], 1e-7)) > 1e-6) {
        smooth = false;
      }
      worst = std::max(worst, oracle::rel_error(analytic.data()[i], numeric));
    }
  };
  check(ent, grad);
  if (has_entity_aux(kind)) check(aux.values, aux_grad);
  return smooth ? worst : -1;
}

Outcome criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(1001);
  double transform_worst = 0;
  for (int i = 0; i < 100; ++i) transform_worst = std::max(transform_worst, transform_gradient_error(rng));
  double kg_worst = 0;
  std::string worst_kind = "-";
  for (KgModelKind kind : kAllKgKinds) {
    for (int norm : {1, 2}) {
      if (norm == 1 && !is_translational(kind)) continue;
      for (int i = 0; i < 100;) {
        const double e = kg_gradient_error(kind, norm, rng);
        if (e < 0) continue;  // redraw instances that straddle a kink
        if (e > kg_worst) {
          kg_worst = e;
          worst_kind = std::string(to_string(kind)) + "/L" + std::to_string(norm);
        }
        ++i;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {transform_worst < 1e-4 && kg_worst < 1e-4 && secs < 30,
          fmt("transform max rel err %.2e, KG max rel err %.2e (%s), %.2fs", transform_worst, kg_worst,
              worst_kind.c_str(), secs)};
}

// ---- 2: forward pass ---------------------------------------------------------

Outcome criterion_forward() {
  Rng rng(1002);
  double oracle_worst = 0, perm_worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(16), d = 1 + rng.below(8);
    const Graph g = oracle::random_graph(n, 0.3, rng);
    const Matrix e = oracle::random_matrix(n, d, rng);
    const AttentionParams t = random_params(d, rng, 0.5);
    const Matrix out = apply_transform(g, EmbeddingMatrix(e, Provenance::kSource), t).values;
    oracle_worst = std::max(oracle_worst, oracle::max_abs_diff(out, oracle::attention_oracle(adjacency(g).values(), e, t)));

    std::vector<NodeId> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm.begin(), perm.end());
    std::vector<Edge> edges;
    for (const Edge& x : g.edges()) edges.emplace_back(perm[x.u], perm[x.v]);
    Matrix pe(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < d; ++k) pe(perm[i], k) = e(i, k);
    }
    const Matrix pout = apply_transform(Graph(n, edges), EmbeddingMatrix(pe, Provenance::kSource), t).values;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < d; ++k) perm_worst = std::max(perm_worst, std::abs(pout(perm[i], k) - out(i, k)));
    }
  }
  return {oracle_worst <= 1e-12 && perm_worst <= 1e-10,
          fmt("oracle max abs diff %.2e, permutation max abs diff %.2e over 1000 instances", oracle_worst, perm_worst)};
}

// ---- 3: ranking --------------------------------------------------------------

Outcome criterion_ranking() {
  Rng rng(1003);
  int mismatches = 0, ties = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.below(7), d = 1 + rng.below(3);
    Matrix e(n, d);
    for (double& x : e.values()) x = static_cast<double>(rng.below(3)) - 1.0;
    RelationParams rel = distance_relation(d);
    if (rng.coin()) {
      rel = init_relation(KgModelKind::kDistMult, d, 2, 1);
      rel.r.assign(d, 1.0);
    }
    RankQuery q;
    q.known_entity = static_cast<NodeId>(rng.below(n));
    do q.true_answer = static_cast<NodeId>(rng.below(n));
    while (q.true_answer == q.known_entity);
    q.direction = rng.coin() ? QueryDirection::kPredictTail : QueryDirection::kPredictHead;
    TripleSet filter;
    for (NodeId c = 0; c < n; ++c) {
      if (rng.uniform() < 0.3) filter.insert(complete(q, c));
    }
    const double got = rank_candidates(q, e, {}, rel, filter);
    if (got != oracle::brute_force_rank(q, e, {}, rel, filter)) ++mismatches;
    if (got != std::floor(got)) ++ties;
  }

  // Uniform-random embeddings on n = 20. On a perfect matching every query
  // keeps all 19 other nodes as candidates, which is the setting of the
  // 0.187 harmonic value. The planted-partition graph, where filtering
  // removes candidates, is checked against its own per-query harmonic mean.
  double matching_mrr = 0, planted_mrr = 0, planted_oracle = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng grng(derive_seed(seed, {1}));
    std::vector<NodeId> order(20);
    std::iota(order.begin(), order.end(), 0);
    grng.shuffle(order.begin(), order.end());
    std::vector<Edge> pairs;
    for (std::size_t i = 0; i < 20; i += 2) pairs.emplace_back(order[i], order[i + 1]);
    const EdgeSplit matching = split_edges(Graph(20, pairs), 0.2, seed);

    PlantedPartitionConfig gen;
    gen.graph_count = 1;
    gen.min_nodes = gen.max_nodes = 20;
    const EdgeSplit planted = split_edges(planted_partition_dataset(gen, seed).graphs.front(), 0.2, seed);

    Rng erng(derive_seed(seed, {3}));
    const Matrix e = oracle::random_matrix(20, 32, erng);
    matching_mrr += evaluate_link_prediction(matching, e, {}, distance_relation(32)).mrr;
    planted_mrr += evaluate_link_prediction(planted, e, {}, distance_relation(32)).mrr;

    TripleSet filter;
    for (const Triple& t : to_triples(planted.train_graph)) filter.insert(t);
    for (const Triple& t : to_triples(planted.held_out_edges)) filter.insert(t);
    double expected = 0;
    for (const Edge& x : planted.held_out_edges) {
      for (const RankQuery q : {RankQuery{x.u, QueryDirection::kPredictTail, x.v},
                                RankQuery{x.v, QueryDirection::kPredictHead, x.u}}) {
        std::size_t candidates = 1;
        for (NodeId c = 0; c < 20; ++c) {
          if (c != q.known_entity && c != q.true_answer && !filter.contains(complete(q, c))) ++candidates;
        }
        expected += oracle::harmonic_mrr(candidates);
      }
    }
    planted_oracle += expected / static_cast<double>(2 * planted.held_out_edges.size());
  }
  matching_mrr /= 100;
  planted_mrr /= 100;
  planted_oracle /= 100;
  return {mismatches == 0 && std::abs(matching_mrr - 0.187) <= 0.03 && std::abs(planted_mrr - planted_oracle) <= 0.03,
          fmt("%d/1000 mismatches (%d tied ranks); random-embedding MRR %.4f with 19 candidates (harmonic %.4f), "
              "%.4f on planted graphs (harmonic %.4f)",
              mismatches, ties, matching_mrr, oracle::harmonic_mrr(19), planted_mrr, planted_oracle)};
}

// ---- 4, 5, 7b, 8: the synthetic pipeline --------------------------------------

pl::PipelineConfig synthetic_config(const fs::path& out) {
  pl::PipelineConfig cfg;  // 200 graphs, 16-21 nodes, node2vec, TransE
  cfg.out_dir = out;
  cfg.source = pl::SourceMethod::kNode2Vec;
  cfg.target = KgModelKind::kTransE;
  cfg.buckets = {pl::SizeBucket{16, 21}};
  cfg.generator.graph_count = 200;
  cfg.seed = 42;
  return cfg;
}

std::map<std::string, std::vector<double>> mrr_by_method(const fs::path& csv) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& r : pl::read_metrics_csv(csv)) out[r.method].push_back(r.mrr);
  return out;
}

Outcome criterion_transformed_vs_source(const std::map<std::string, std::vector<double>>& m, double secs) {
  const auto& src = m.at("source");
  const auto& tr = m.at("transformed");
  const AnovaResult a = anova_one_way(src, tr);
  return {mean(tr) > mean(src) && a.p_value < 0.05 && secs < 20 * 60,
          fmt("MRR transformed %.4f vs source %.4f, F=%.3f p=%.4f, n=%zu per group, pipeline %.0fs", mean(tr),
              mean(src), a.f_statistic, a.p_value, tr.size(), secs)};
}

Outcome criterion_finetuned_vs_target(const std::map<std::string, std::vector<double>>& m) {
  const auto& tg = m.at("target");
  const auto& ft = m.at("finetuned");
  const AnovaResult a = anova_one_way(tg, ft);
  return {a.p_value > 0.05 || mean(ft) >= mean(tg),
          fmt("MRR finetuned %.4f vs target %.4f, F=%.3f p=%.4f", mean(ft), mean(tg), a.f_statistic, a.p_value)};
}

// metrics.csv without the cpu_seconds and wall_seconds columns.
std::string metrics_without_timing(const fs::path& csv) {
  std::istringstream in(slurp(csv));
  std::string line, out;
  std::vector<bool> keep;
  bool header = true;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    if (header) {
      for (const auto& name : cells) keep.push_back(name != "cpu_seconds" && name != "wall_seconds");
      header = false;
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i < keep.size() && keep[i]) out += cells[i] + ",";
    }
    out += "\n";
  }
  return out;
}

Outcome criterion_determinism(const fs::path& run1, const fs::path& run2, const pl::SizeBucket& b) {
  const pl::Layout l1(run1), l2(run2);
  std::size_t compared = 0, differing = 0;
  std::string first_diff;
  auto compare = [&](const fs::path& p1) {
    const fs::path p2 = run2 / p1.lexically_relative(run1);
    ++compared;
    if (!fs::exists(p2) || slurp(p1) != slurp(p2)) {
      if (differing++ == 0) first_diff = p1.lexically_relative(run1).string();
    }
  };
  for (const auto& entry : fs::recursive_directory_iterator(l1.bucket_dir(b))) {
    const auto ext = entry.path().extension();
    if (ext == ".emb" || ext == ".kgm" || ext == ".bin" || entry.path().filename() == "dataset.json") {
      compare(entry.path());
    }
  }
  ++compared;
  if (metrics_without_timing(l1.metrics_csv(b)) != metrics_without_timing(l2.metrics_csv(b))) {
    if (differing++ == 0) first_diff = "metrics.csv";
  }
  return {compared > 1 && differing == 0,
          fmt("%zu artifacts compared, %zu differ%s%s", compared, differing, differing ? ", first: " : "",
              first_diff.c_str())};
}

Outcome criterion_transform_training(const pl::PipelineConfig& cfg) {
  const pl::SizeBucket b = cfg.buckets.front();
  const pl::Layout layout(cfg.out_dir);
  const pl::BucketData data = pl::load_bucket(cfg, b);
  std::vector<TrainPair> train;
  for (const pl::GraphRecord* g : data.in_split(pl::Split::kTrain)) {
    const EmbeddingMatrix src = io::load_embedding(layout.source(b, g->id));
    train.emplace_back(g->edges.train_graph, src, src);
  }
  TransformTrainConfig tc = cfg.transform;
  tc.epochs = 200;
  const TransformTrainResult identity = train_transformer(train, {}, tc);
  const double identity_final = identity.train_loss.back();

  const pl::LossHistory h = pl::read_loss_history(layout.transform_dir(b, false) / "loss_history.csv");
  const double first = h.validation.front(), last = h.validation.back();
  return {identity_final < 1e-3 && last < 0.5 * first,
          fmt("identity task final train loss %.4g (first %.4g); real task validation loss %.4f -> %.4f (ratio %.3f)",
              identity_final, identity.train_loss.front(), first, last, last / first)};
}

// ---- 6: timing ------------------------------------------------------------------

Outcome criterion_timing(const fs::path& out) {
  pl::PipelineConfig cfg;
  cfg.out_dir = out;
  cfg.buckets = {pl::SizeBucket{51, 55}};
  cfg.generator.graph_count = 50;
  cfg.transform.epochs = 20;
  cfg.seed = 7;
  pl::run_all(cfg);
  pl::run_bench(cfg);
  const auto rows = pl::read_bench_graphs_csv(pl::Layout(out).bench_graphs_csv());
  std::size_t path_ok = 0, forward_ok = 0;
  double ratio_sum = 0, forward_sum = 0;
  for (const auto& r : rows) {
    const double ratio = r.cpu_transform_path() / r.cpu_finetune_path();
    const double fwd = r.cpu_forward / r.cpu_kg;
    path_ok += ratio < 0.5;
    forward_ok += fwd < 0.05;
    ratio_sum += ratio;
    forward_sum += fwd;
  }
  const double n = static_cast<double>(rows.size());
  double src = 0, kg = 0;
  for (const auto& r : rows) {
    src += r.cpu_source;
    kg += r.cpu_kg;
  }
  return {!rows.empty() && path_ok == rows.size() && forward_ok == rows.size(),
          fmt("%zu test graphs at 51-55 nodes: transform/finetune path ratio mean %.3f (%zu/%zu < 0.5), "
              "forward/KG mean %.4f (%zu/%zu < 0.05); mean CPU source %.3fs, KG %.3fs",
              rows.size(), ratio_sum / n, path_ok, rows.size(), forward_sum / n, forward_ok, rows.size(), src / n,
              kg / n)};
}

// ---- 9: ANOVA ---------------------------------------------------------------------

Outcome criterion_anova() {
  Rng rng(1009);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> a(2 + rng.below(30)), b(2 + rng.below(30));
    const double shift = rng.uniform(-1, 1);
    for (double& x : a) x = rng.uniform();
    for (double& x : b) x = rng.uniform() + shift;
    const double t = oracle::pooled_t(a, b);
    worst = std::max(worst, oracle::rel_error(anova_one_way(a, b).f_statistic, t * t, 1.0));
  }
  const std::vector<double> g1{1, 2, 3}, g2{4, 5, 6};
  const AnovaResult h = anova_one_way(g1, g2);
  return {worst < 1e-9 && std::abs(h.f_statistic - 13.5) <= 1e-9 && std::abs(h.p_value - 0.0213) <= 0.001,
          fmt("F vs t^2 max rel err %.2e over 1000 pairs; hand case F=%.12g p=%.5f (quadrature %.5f)", worst,
              h.f_statistic, h.p_value, oracle::f_upper_tail_simpson(13.5, 1, 4))};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / ("w2k-acceptance-" + std::to_string(::getpid()));
  bool keep = false;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--work") == 0 && i + 1 < argc) {
      work = argv[++i];
    } else if (std::strcmp(argv[i], "--keep") == 0) {
      keep = true;
    } else {
      std::fprintf(stderr, "usage: %s [--work DIR] [--keep]\n", argv[0]);
      return 2;
    }
  }
  fs::remove_all(work);
  fs::create_directories(work);

  int failures = 0;
  auto report = [&](int id, const char* what, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("[%s] criterion %d: %s: %s\n", o.pass ? "PASS" : "FAIL", id, what, o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "gradient correctness", criterion_gradients);
  report(2, "attention forward fidelity", criterion_forward);
  report(3, "ranking oracle", criterion_ranking);

  const pl::PipelineConfig run1 = synthetic_config(work / "run1");
  double pipeline_secs = 0;
  std::map<std::string, std::vector<double>> mrr;
  std::string pipeline_error;
  try {
    const auto t0 = std::chrono::steady_clock::now();
    pl::run_all(run1);
    pipeline_secs = seconds_since(t0);
    mrr = mrr_by_method(pl::Layout(run1.out_dir).metrics_csv(run1.buckets.front()));
  } catch (const std::exception& e) {
    pipeline_error = e.what();
  }
  auto needs_pipeline = [&](auto fn) {
    return [&, fn]() -> Outcome {
      if (!pipeline_error.empty()) return {false, "pipeline failed: " + pipeline_error};
      return fn();
    };
  };
  report(4, "transformed beats source", needs_pipeline([&] { return criterion_transformed_vs_source(mrr, pipeline_secs); }));
  report(5, "finetuned vs target", needs_pipeline([&] { return criterion_finetuned_vs_target(mrr); }));
  report(6, "transform path CPU time", [&] { return criterion_timing(work / "timing"); });
  report(7, "transform training sanity", needs_pipeline([&] { return criterion_transform_training(run1); }));
  report(8, "determinism", needs_pipeline([&] {
    const pl::PipelineConfig run2 = synthetic_config(work / "run2");
    pl::run_all(run2);
    return criterion_determinism(run1.out_dir, run2.out_dir, run1.buckets.front());
  }));
  report(9, "ANOVA correctness", criterion_anova);

  std::printf("%d of 9 criteria failed\n", failures);
  if (!keep) fs::remove_all(work);
  return failures == 0 ? 0 : 1;
}
