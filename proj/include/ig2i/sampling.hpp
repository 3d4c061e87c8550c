#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "ig2i/error.hpp"
#include "ig2i/linalg.hpp"
#include "ig2i/matrix.hpp"
#include "ig2i/mmag.hpp"
#include "ig2i/parallel.hpp"
#include "ig2i/rng.hpp"

namespace ig2i {

struct PPRConfig {
  double beta = 0.85;  // teleport probability is 1 - beta
  std::size_t max_iters = 200;
  double tolerance = 1e-10;  // L1 change between iterates

  void validate() const {
    if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("ppr: beta must be in (0, 1)");
    if (max_iters == 0) throw ConfigError("ppr: max_iters must be positive");
    if (!(tolerance > 0.0)) throw ConfigError("ppr: tolerance must be > 0");
  }
};

struct PPRVector {
  NodeId target = 0;
  Vector scores;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Single-source personalized PageRank, pi = beta * pi * A_hat +
/// (1 - beta) * e_target, by power iteration. Mass sitting on rows with no
/// out-edges is returned to the target so the scores stay a distribution.
inline PPRVector compute_ppr(const NormalizedAdjacency& adj, NodeId target,
                             const PPRConfig& cfg) {
  cfg.validate();
  const std::size_t n = adj.n();
  if (target >= n) throw Error("ppr target " + std::to_string(target) + " out of range");
  PPRVector out{target, Vector(n, 0.0), 0, false};
  out.scores[target] = 1.0;
  Vector next(n);
  for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    double dangling = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double mass = out.scores[i];
      if (mass == 0.0) continue;
      const std::size_t lo = adj.pattern.offsets[i], hi = adj.pattern.offsets[i + 1];
      if (lo == hi) {
        dangling += mass;
        continue;
      }
      for (std::size_t k = lo; k < hi; ++k)
        next[adj.pattern.columns[k]] += cfg.beta * mass * adj.values[k];
    }
    next[target] += (1.0 - cfg.beta) + cfg.beta * dangling;
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) change += std::abs(next[i] - out.scores[i]);
    out.scores.swap(next);
    out.iterations = it;
    if (change < cfg.tolerance) {
      out.converged = true;
      break;
    }
  }
  return out;
}

/// Direct dense solve of (I - beta * A_hat^T) x = (1 - beta) e_target with
/// the same dangling-row rule as compute_ppr (empty rows point at the
/// target). Test oracle; intended for small graphs.
inline PPRVector dense_ppr_oracle(const NormalizedAdjacency& adj, NodeId target, double beta) {
  const std::size_t n = adj.n();
  if (n > 200) throw Error("dense_ppr_oracle is limited to 200 nodes");
  if (target >= n) throw Error("ppr target out of range");
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i) a(i, i) = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = adj.pattern.offsets[i], hi = adj.pattern.offsets[i + 1];
    if (lo == hi) a(target, i) -= beta;  // A_hat'[i][target] = 1, transposed
    for (std::size_t k = lo; k < hi; ++k) a(adj.pattern.columns[k], i) -= beta * adj.values[k];
  }
  Vector b(n, 0.0);
  b[target] = 1.0 - beta;
  return {target, solve_dense(std::move(a), std::move(b)), 0, true};
}

struct Candidate {
  NodeId id = 0;
  double ppr = 0.0;
};

/// Highest-scoring nodes excluding the target and `exclude`; score
/// descending, ties by ascending id; only positive scores qualify.
inline std::vector<Candidate> top_k_ppr(const PPRVector& ppr, std::size_t k_ppr,
                                        const std::unordered_set<NodeId>& exclude = {}) {
  if (k_ppr == 0) throw ConfigError("k_ppr must be >= 1");
  std::vector<Candidate> all;
  for (std::size_t i = 0; i < ppr.scores.size(); ++i) {
    const auto id = static_cast<NodeId>(i);
    if (id == ppr.target || exclude.count(id) || !(ppr.scores[i] > 0.0)) continue;
    all.push_back({id, ppr.scores[i]});
  }
  const auto better = [](const Candidate& a, const Candidate& b) {
    return a.ppr != b.ppr ? a.ppr > b.ppr : a.id < b.id;
  };
  const std::size_t keep = std::min(k_ppr, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(),
                    better);
  all.resize(keep);
  return all;
}

enum class SimilarityMetric { cosine, dot, negative_euclidean };

inline SimilarityMetric parse_similarity(std::string_view s) {
  if (s == "cosine") return SimilarityMetric::cosine;
  if (s == "dot") return SimilarityMetric::dot;
  if (s == "negative_euclidean") return SimilarityMetric::negative_euclidean;
  throw ConfigError("unknown similarity metric '" + std::string(s) + "'");
}

inline std::string to_string(SimilarityMetric m) {
  switch (m) {
    case SimilarityMetric::cosine: return "cosine";
    case SimilarityMetric::dot: return "dot";
    case SimilarityMetric::negative_euclidean: return "negative_euclidean";
  }
  return "?";
}

inline double similarity(SimilarityMetric m, std::span<const double> text,
                         std::span<const double> image) {
  switch (m) {
    case SimilarityMetric::cosine: return cosine(text, image);
    case SimilarityMetric::dot: return dot(text, image);
    case SimilarityMetric::negative_euclidean: {
      if (text.size() != image.size()) throw DimensionError("similarity length mismatch");
      double s = 0.0;
      for (std::size_t i = 0; i < text.size(); ++i) s += (text[i] - image[i]) * (text[i] - image[i]);
      return -std::sqrt(s);
    }
  }
  return 0.0;
}

/// Selected neighbors of one target plus their stacked image features
/// (d x m*k, neighbor-major column blocks in rank order).
struct GraphCondition {
  NodeId target = 0;
  std::vector<NodeId> neighbor_ids;
  std::vector<double> ppr;  // parallel to neighbor_ids
  std::vector<double> sim;  // parallel to neighbor_ids
  Matrix z;

  bool empty() const noexcept { return neighbor_ids.empty(); }
};

inline Matrix stack_features(const MultimodalGraph& g, std::span<const NodeId> ids) {
  Matrix z;
  for (NodeId id : ids) z = hcat(z, g.node(id).image_features);
  if (ids.empty()) z = Matrix(g.dim(), 0);
  return z;
}

/// Reranks PPR candidates by Sim(target_text, mean image column) and keeps
/// the top k. The sort is stable, so equal similarities keep PPR order.
inline GraphCondition semantic_rerank(const std::vector<Candidate>& candidates, NodeId target,
                                      std::span<const double> target_text,
                                      const MultimodalGraph& g, std::size_t k,
                                      SimilarityMetric metric) {
  GraphCondition out;
  out.target = target;
  std::vector<std::pair<Candidate, double>> scored;
  scored.reserve(candidates.size());
  for (const auto& c : candidates)
    scored.emplace_back(c, similarity(metric, target_text,
                                      column_mean(g.node(c.id).image_features)));
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  scored.resize(std::min(k, scored.size()));
  for (const auto& [c, s] : scored) {
    out.neighbor_ids.push_back(c.id);
    out.ppr.push_back(c.ppr);
    out.sim.push_back(s);
  }
  out.z = stack_features(g, out.neighbor_ids);
  return out;
}

struct SamplerConfig {
  PPRConfig ppr;
  std::size_t k_ppr = 20;
  std::size_t k = 5;
  SimilarityMetric similarity = SimilarityMetric::cosine;
  std::unordered_set<NodeId> exclude;

  void validate() const {
    ppr.validate();
    if (k == 0 || k_ppr == 0) throw ConfigError("sampler: k and k_ppr must be >= 1");
    if (k > k_ppr) throw ConfigError("sampler: k must be <= k_ppr");
  }
};

inline GraphCondition sample_neighbors(const MultimodalGraph& g, const NormalizedAdjacency& adj,
                                       NodeId target, const SamplerConfig& cfg) {
  cfg.validate();
  const auto ppr = compute_ppr(adj, target, cfg.ppr);
  const auto cands = top_k_ppr(ppr, cfg.k_ppr, cfg.exclude);
  if (cands.empty()) return {target, {}, {}, {}, Matrix(g.dim(), 0)};
  return semantic_rerank(cands, target, g.node(target).text_embedding, g, cfg.k, cfg.similarity);
}

inline GraphCondition sample_neighbors(const MultimodalGraph& g, NodeId target,
                                       const SamplerConfig& cfg) {
  return sample_neighbors(g, normalize_adjacency(g), target, cfg);
}

/// Conditions for many targets; identical to sequential calls for any
/// worker count.
inline std::vector<GraphCondition> sample_neighbors_batch(const MultimodalGraph& g,
                                                          const NormalizedAdjacency& adj,
                                                          std::span<const NodeId> targets,
                                                          const SamplerConfig& cfg,
                                                          std::size_t workers = 1) {
  std::vector<GraphCondition> out(targets.size());
  parallel_for(targets.size(), workers,
               [&](std::size_t i) { out[i] = sample_neighbors(g, adj, targets[i], cfg); });
  return out;
}

/// Condition for a virtual node linked to `members` (e.g. all works of one
/// cluster) carrying `query_text`. Candidates are restricted to `members`.
/// The returned condition's target is the virtual index g.size().
inline GraphCondition sample_virtual_neighbors(const MultimodalGraph& g,
                                               std::span<const NodeId> members,
                                               std::span<const double> query_text,
                                               const SamplerConfig& cfg) {
  cfg.validate();
  const auto v = static_cast<NodeId>(g.size());
  const auto adj = normalize_pattern(
      with_virtual_node(g.adjacency(), {members.begin(), members.end()}));
  auto ppr = compute_ppr(adj, v, cfg.ppr);
  const std::unordered_set<NodeId> allowed(members.begin(), members.end());
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!allowed.count(static_cast<NodeId>(i))) ppr.scores[i] = 0.0;
  const auto cands = top_k_ppr(ppr, cfg.k_ppr, cfg.exclude);
  if (cands.empty()) return {v, {}, {}, {}, Matrix(g.dim(), 0)};
  return semantic_rerank(cands, v, query_text, g, cfg.k, cfg.similarity);
}

/// k uniformly drawn eligible nodes (not the target, not excluded); the
/// random-neighbor ablation.
inline GraphCondition random_condition(const MultimodalGraph& g, NodeId target, std::size_t k,
                                       const std::unordered_set<NodeId>& exclude, Rng& rng) {
  std::vector<NodeId> pool;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto id = static_cast<NodeId>(i);
    if (id != target && !exclude.count(id)) pool.push_back(id);
  }
  GraphCondition out;
  out.target = target;
  const std::size_t take = std::min(k, pool.size());
  for (std::size_t i = 0; i < take; ++i) {
    std::swap(pool[i], pool[rng.index(i, pool.size() - 1)]);
    out.neighbor_ids.push_back(pool[i]);
    out.ppr.push_back(0.0);
    out.sim.push_back(0.0);
  }
  out.z = stack_features(g, out.neighbor_ids);
  return out;
}

}  // namespace ig2i
