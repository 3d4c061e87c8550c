#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "ig2i/diffusion.hpp"
#include "ig2i/error.hpp"
#include "ig2i/eval.hpp"
#include "ig2i/guidance.hpp"
#include "ig2i/mmag.hpp"
#include "ig2i/parallel.hpp"
#include "ig2i/rng.hpp"
#include "ig2i/sampling.hpp"

namespace ig2i {

enum class ConditionMode { graph, text_only, random_neighbors, baseline_encoder };

inline std::string to_string(ConditionMode m) {
  switch (m) {
    case ConditionMode::graph: return "graph";
    case ConditionMode::text_only: return "text_only";
    case ConditionMode::random_neighbors: return "random_neighbors";
    case ConditionMode::baseline_encoder: return "baseline_encoder";
  }
  return "?";
}

inline ConditionMode parse_condition_mode(const std::string& s) {
  if (s == "graph") return ConditionMode::graph;
  if (s == "text_only") return ConditionMode::text_only;
  if (s == "random_neighbors") return ConditionMode::random_neighbors;
  if (s == "baseline_encoder") return ConditionMode::baseline_encoder;
  throw ConfigError("unknown condition mode '" + s + "'");
}

/// Picks `count` distinct test nodes, deterministic in `seed`.
inline std::vector<NodeId> choose_test_nodes(std::size_t n_nodes, std::size_t count,
                                             std::uint64_t seed) {
  if (count >= n_nodes) throw ConfigError("test set must leave at least one training node");
  std::vector<NodeId> ids(n_nodes);
  for (std::size_t i = 0; i < n_nodes; ++i) ids[i] = static_cast<NodeId>(i);
  Rng rng(derive_seed(seed, "test_split"));
  for (std::size_t i = 0; i < count; ++i) std::swap(ids[i], ids[rng.index(i, n_nodes - 1)]);
  ids.resize(count);
  std::sort(ids.begin(), ids.end());
  return ids;
}

struct ExperimentConfig {
  SamplerConfig sampler;  // exclude must hold the masked test nodes
  double s_text = 1.0;
  double s_graph = 1.0;
  std::vector<std::uint64_t> seeds{0};
  std::size_t workers = 1;
};

struct NodeScore {
  NodeId id = 0;
  double cosine_x100 = 0.0;  // averaged over seeds
  std::vector<NodeId> neighbors;
};

struct EvalReport {
  ConditionMode mode = ConditionMode::graph;
  std::size_t n = 0;  // generated samples (test nodes x seeds)
  double mean_cosine_x100 = 0.0;
  double fid = 0.0;
  std::vector<NodeScore> per_node;
};

/// Graph condition for one target under an evaluation mode.
inline GraphCondition condition_for_mode(const Model& m, const MultimodalGraph& g,
                                         const NormalizedAdjacency& adj, NodeId target,
                                         ConditionMode mode, const SamplerConfig& sampler) {
  switch (mode) {
    case ConditionMode::text_only: return {target, {}, {}, {}, Matrix(g.dim(), 0)};
    case ConditionMode::random_neighbors: {
      Rng rng(derive_seed(derive_seed(m.config.seed, "random_neighbors"), target));
      return random_condition(g, target, sampler.k, sampler.exclude, rng);
    }
    case ConditionMode::graph:
    case ConditionMode::baseline_encoder: return sample_neighbors(g, adj, target, sampler);
  }
  return {};
}

/// Generates a latent for every (test node, seed) pair under `mode` and
/// scores it against the node's ground-truth latent.
inline EvalReport run_experiment(const Model& m, const MultimodalGraph& g,
                                 std::span<const NodeId> test_ids, ConditionMode mode,
                                 const ExperimentConfig& cfg) {
  cfg.sampler.validate();
  if (test_ids.empty() || cfg.seeds.empty()) throw Error("run_experiment: nothing to evaluate");
  const bool baseline_model = m.config.encoder == GraphEncoderKind::baseline;
  if (mode == ConditionMode::baseline_encoder && !baseline_model)
    throw ConfigError("baseline_encoder mode needs a checkpoint trained with graph_encoder = baseline");
  if (mode == ConditionMode::graph && baseline_model)
    throw ConfigError("graph mode needs a Graph-QFormer checkpoint; use baseline_encoder");
  for (NodeId id : test_ids)
    if (!cfg.sampler.exclude.count(id))
      throw Error("test node " + std::to_string(id) + " is not masked by the sampler");

  const auto adj = normalize_adjacency(g);
  const std::size_t n_seeds = cfg.seeds.size();
  std::vector<Vector> generated(test_ids.size() * n_seeds), truth(generated.size());
  std::vector<NodeScore> per_node(test_ids.size());
  parallel_for(test_ids.size(), cfg.workers, [&](std::size_t i) {
    const NodeId id = test_ids[i];
    const auto& node = g.node(id);
    GuidanceSpec spec{cfg.s_text, {}};
    auto cond = condition_for_mode(m, g, adj, id, mode, cfg.sampler);
    per_node[i].id = id;
    per_node[i].neighbors = cond.neighbor_ids;
    if (mode != ConditionMode::text_only) spec.graph_terms.push_back({std::move(cond), cfg.s_graph});
    const Vector gt = node_latent(node, m.config.latent_scale);
    double total = 0.0;
    for (std::size_t s = 0; s < n_seeds; ++s) {
      Vector z = sample(m, node.text_tokens, spec, derive_seed(cfg.seeds[s], id));
      total += 100.0 * cosine(z, gt);
      generated[i * n_seeds + s] = std::move(z);
      truth[i * n_seeds + s] = gt;
    }
    per_node[i].cosine_x100 = total / static_cast<double>(n_seeds);
  });

  EvalReport r;
  r.mode = mode;
  r.n = generated.size();
  const auto gen = feature_set(generated), gt = feature_set(truth);
  r.mean_cosine_x100 = cosine_score(gen, gt);
  r.fid = r.n >= 2 ? frechet_distance(gen, gt) : 0.0;
  r.per_node = std::move(per_node);
  return r;
}

// ---------------------------------------------------------------------------
// Controllability studies on synthetic data.

struct SweepRow {
  double s_text = 0.0;
  double s_graph = 0.0;
  std::uint64_t seed = 0;
  double style_cosine = 0.0;
  double content_cosine = 0.0;
};

/// One sample per (s_text, s_graph, seed) with the noise seed fixed across
/// grid points, scored against the target's cluster style and content.
inline std::vector<SweepRow> guidance_sweep(const Model& m, const MultimodalGraph& g,
                                            const SyntheticTruth& truth, NodeId target,
                                            const SamplerConfig& sampler,
                                            const std::vector<double>& s_text_grid,
                                            const std::vector<double>& s_graph_grid,
                                            const std::vector<std::uint64_t>& seeds,
                                            std::size_t workers = 1) {
  const auto cond = sample_neighbors(g, target, sampler);
  const auto& style = truth.styles.at(truth.cluster.at(target));
  const auto& content = truth.contents.at(target);
  std::vector<SweepRow> rows;
  for (double st : s_text_grid)
    for (double sg : s_graph_grid)
      for (auto seed : seeds) rows.push_back({st, sg, seed, 0.0, 0.0});
  parallel_for(rows.size(), workers, [&](std::size_t i) {
    auto& row = rows[i];
    GuidanceSpec spec{row.s_text, {{cond, row.s_graph}}};
    const Vector z = sample(m, g.node(target).text_tokens, spec, derive_seed(row.seed, target));
    row.style_cosine = cosine(z, style);
    row.content_cosine = cosine(z, content);
  });
  return rows;
}

struct BlendRow {
  double weight_a = 0.0;
  double weight_b = 0.0;
  std::uint64_t seed = 0;
  double style_a_cosine = 0.0;
  double style_b_cosine = 0.0;
};

/// Two graph conditions built from clusters a and b (virtual node linked to
/// each cluster's non-masked members, queried with the target's text) mixed
/// with scales (w_a, w_b).
inline std::vector<BlendRow> two_condition_blend(
    const Model& m, const MultimodalGraph& g, const SyntheticTruth& truth, NodeId target,
    std::size_t cluster_a, std::size_t cluster_b, const SamplerConfig& sampler,
    const std::vector<std::pair<double, double>>& weights, double s_text,
    const std::vector<std::uint64_t>& seeds, std::size_t workers = 1) {
  const auto members_of = [&](std::size_t c) {
    std::vector<NodeId> out;
    for (NodeId id : truth.members(c))
      if (!sampler.exclude.count(id) && id != target) out.push_back(id);
    return out;
  };
  const auto& text = g.node(target).text_embedding;
  const auto cond_a = sample_virtual_neighbors(g, members_of(cluster_a), text, sampler);
  const auto cond_b = sample_virtual_neighbors(g, members_of(cluster_b), text, sampler);
  std::vector<BlendRow> rows;
  for (auto [wa, wb] : weights)
    for (auto seed : seeds) rows.push_back({wa, wb, seed, 0.0, 0.0});
  parallel_for(rows.size(), workers, [&](std::size_t i) {
    auto& row = rows[i];
    GuidanceSpec spec{s_text, {{cond_a, row.weight_a}, {cond_b, row.weight_b}}};
    const Vector z = sample(m, g.node(target).text_tokens, spec, derive_seed(row.seed, target));
    row.style_a_cosine = cosine(z, truth.styles.at(cluster_a));
    row.style_b_cosine = cosine(z, truth.styles.at(cluster_b));
  });
  return rows;
}

struct AttentionProbeResult {
  std::size_t probes = 0;
  std::size_t hits = 0;
  double hit_rate() const { return probes ? double(hits) / double(probes) : 0.0; }
};

/// For each probe target, stacks one same-topic neighbor with k - 1
/// other-topic neighbors from the target's cluster (in random order) and
/// checks whether the last cross block gives the same-topic neighbor the
/// highest average attention weight.
inline AttentionProbeResult attention_probe(const Model& m, const MultimodalGraph& g,
                                            const SyntheticTruth& truth,
                                            std::span<const NodeId> targets,
                                            const std::unordered_set<NodeId>& exclude,
                                            std::size_t k, std::uint64_t seed) {
  if (m.config.encoder != GraphEncoderKind::qformer)
    throw ConfigError("attention_probe needs a Graph-QFormer model");
  Rng rng(derive_seed(seed, "attention_probe"));
  const std::size_t per = g.images_per_node();
  AttentionProbeResult r;
  for (NodeId target : targets) {
    std::vector<NodeId> same, other;
    for (NodeId id : truth.members(truth.cluster[target])) {
      if (id == target || exclude.count(id)) continue;
      (truth.topic[id] == truth.topic[target] ? same : other).push_back(id);
    }
    if (same.empty() || other.size() + 1 < k) continue;
    std::vector<NodeId> picks{same[rng.index(0, same.size() - 1)]};
    for (std::size_t i = 0; i + 1 < k; ++i) {
      std::swap(other[i], other[rng.index(i, other.size() - 1)]);
      picks.push_back(other[i]);
    }
    const std::size_t slot = rng.index(0, k - 1);
    std::swap(picks[0], picks[slot]);
    const auto maps = cross_attention_map(m.params, m.qformer, g.node(target).text_tokens,
                                          stack_features(g, picks));
    const Matrix& last = maps.back();
    std::vector<double> weight(k, 0.0);
    for (std::size_t r0 = 0; r0 < last.rows(); ++r0)
      for (std::size_t c = 0; c < last.cols(); ++c) weight[c / per] += last(r0, c);
    const auto best = std::max_element(weight.begin(), weight.end()) - weight.begin();
    ++r.probes;
    if (static_cast<std::size_t>(best) == slot) ++r.hits;
  }
  return r;
}

}  // namespace ig2i
