#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ig2i/attention.hpp"
#include "ig2i/autodiff.hpp"
#include "ig2i/error.hpp"
#include "ig2i/rng.hpp"

namespace ig2i {

struct QFormerConfig {
  std::size_t d = 16;
  std::size_t n_layers = 4;      // self-attention layers
  std::size_t heads = 2;
  std::size_t cross_period = 2;  // one cross block after every cross_period self layers
  std::uint64_t seed = 0;

  std::size_t cross_blocks() const { return cross_period ? n_layers / cross_period : 0; }

  void validate() const {
    if (n_layers < 1) throw ConfigError("qformer: n_layers must be >= 1");
    if (cross_period < 1) throw ConfigError("qformer: cross_period must be >= 1");
    if (cross_blocks() < 1) throw ConfigError("qformer: config has no cross-attention block");
    if (heads == 0 || d % heads != 0) throw ConfigError("qformer: heads * d_head must equal d");
  }
};

/// Graph-QFormer parameters. Each layer is a self-attention block and its
/// feed-forward; every cross_period-th layer is followed by a cross block
/// (cross-attention into the neighbor features plus its feed-forward). A
/// final layer norm closes the stack.
struct QFormerWeights {
  struct Layer {
    AttentionWeights self_attn;
    FeedForwardWeights self_ff;
    std::optional<AttentionWeights> cross_attn;
    std::optional<FeedForwardWeights> cross_ff;
  };

  QFormerConfig config;
  std::vector<Layer> layers;
  LayerNormWeights final_ln;
};

/// Registers Graph-QFormer parameters under `prefix`. Output projections of
/// every attention and feed-forward sublayer start at zero, so an untrained
/// encoder returns the layer-normed query tokens.
inline QFormerWeights init_qformer(Parameters& p, const QFormerConfig& cfg,
                                   const std::string& prefix = "qformer") {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, prefix));
  QFormerWeights w;
  w.config = cfg;
  for (std::size_t i = 0; i < cfg.n_layers; ++i) {
    const std::string lp = prefix + ".layer" + std::to_string(i);
    QFormerWeights::Layer layer;
    layer.self_attn = make_attention(p, lp + ".self", cfg.d, cfg.heads, rng);
    layer.self_ff = make_feed_forward(p, lp + ".self_ff", cfg.d, rng);
    if ((i + 1) % cfg.cross_period == 0) {
      layer.cross_attn = make_attention(p, lp + ".cross", cfg.d, cfg.heads, rng);
      layer.cross_ff = make_feed_forward(p, lp + ".cross_ff", cfg.d, rng);
    }
    w.layers.push_back(std::move(layer));
  }
  w.final_ln = make_layer_norm(p, prefix + ".final_ln", cfg.d);
  return w;
}

struct QFormerModel {
  Parameters params;
  QFormerWeights weights;
};

inline QFormerModel init_qformer(const QFormerConfig& cfg) {
  QFormerModel m;
  m.weights = init_qformer(m.params, cfg);
  return m;
}

/// h_G = H^(L) for query tokens (d x l) and neighbor features z (d x n).
/// With no z (or n = 0) the cross blocks are skipped. `cross_weights`, when
/// given, receives each cross block's per-head attention matrices.
inline Var qformer_forward(Tape& t, const QFormerWeights& w, Var query, std::optional<Var> z,
                           std::vector<std::vector<Matrix>>* cross_weights = nullptr) {
  if (t.value(query).rows() != w.config.d) throw DimensionError("qformer query rows != d");
  if (t.value(query).cols() == 0) throw DimensionError("qformer query has no tokens");
  const bool use_cross = z && t.value(*z).cols() > 0;
  if (use_cross && t.value(*z).rows() != w.config.d)
    throw DimensionError("qformer neighbor features rows != d");
  Var h = query;
  for (const auto& layer : w.layers) {
    h = attention_block(t, layer.self_attn, h);
    h = feed_forward_block(t, layer.self_ff, h);
    if (layer.cross_attn && use_cross) {
      std::vector<Matrix> heads;
      h = attention_block(t, *layer.cross_attn, h, *z, cross_weights ? &heads : nullptr);
      if (cross_weights) cross_weights->push_back(std::move(heads));
      h = feed_forward_block(t, *layer.cross_ff, h);
    }
  }
  return layer_norm(t, h, w.final_ln.gain, w.final_ln.offset);
}

inline Matrix qformer_forward(const Parameters& p, const QFormerWeights& w, const Matrix& query,
                              const Matrix& z) {
  Tape t(p, false);
  Var q = t.constant(query);
  std::optional<Var> zv;
  if (z.cols() > 0) zv = t.constant(z);
  return t.value(qformer_forward(t, w, q, zv));
}

/// Head-averaged l x n attention weights of every cross block, exactly as
/// used in the forward pass.
inline std::vector<Matrix> cross_attention_map(const Parameters& p, const QFormerWeights& w,
                                               const Matrix& query, const Matrix& z) {
  if (z.cols() == 0) throw DimensionError("cross_attention_map needs at least one key");
  Tape t(p, false);
  std::vector<std::vector<Matrix>> blocks;
  qformer_forward(t, w, t.constant(query), t.constant(z), &blocks);
  std::vector<Matrix> out;
  for (const auto& heads : blocks) {
    Matrix avg(heads[0].rows(), heads[0].cols());
    for (const auto& h : heads) avg += h;
    avg *= 1.0 / static_cast<double>(heads.size());
    out.push_back(std::move(avg));
  }
  return out;
}

/// Pooled-feature baseline encoder: the frozen neighbor features are the
/// graph tokens.
inline Matrix baseline_encode(const Matrix& z) {
  if (z.cols() == 0) throw DimensionError("baseline_encode needs at least one neighbor");
  return z;
}

struct ConditioningBundle {
  Matrix h_text;
  Matrix h_graph;
  Matrix combined;  // [h_text, h_graph]
};

inline ConditioningBundle build_conditioning(Matrix h_text, Matrix h_graph) {
  if (h_graph.cols() > 0 && h_text.cols() > 0 && h_text.rows() != h_graph.rows())
    throw DimensionError("conditioning tokens differ in d");
  ConditioningBundle b{std::move(h_text), std::move(h_graph), {}};
  b.combined = hcat(b.h_text, b.h_graph);
  return b;
}

}  // namespace ig2i
