#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "ig2i/attention.hpp"
#include "ig2i/autodiff.hpp"
#include "ig2i/config.hpp"
#include "ig2i/error.hpp"
#include "ig2i/guidance.hpp"
#include "ig2i/mmag.hpp"
#include "ig2i/parallel.hpp"
#include "ig2i/qformer.hpp"
#include "ig2i/rng.hpp"
#include "ig2i/sampling.hpp"

namespace ig2i {

// ---------------------------------------------------------------------------
// Forward process.

/// Entries are indexed by t - 1 for t in [1, T].
struct NoiseSchedule {
  std::size_t T = 0;
  Vector beta;
  Vector alpha;
  Vector alpha_bar;

  double alpha_bar_at(std::size_t t) const { return t == 0 ? 1.0 : alpha_bar.at(t - 1); }
};

/// Linear betas from 1e-4 to 0.02 at T = 1000, rescaled by 1000 / T for
/// other lengths (end point capped at 0.999).
inline NoiseSchedule make_schedule(std::size_t T) {
  if (T < 2) throw ConfigError("schedule: T must be >= 2");
  const double s = 1000.0 / static_cast<double>(T);
  const double lo = 1e-4 * s, hi = std::min(0.02 * s, 0.999);
  NoiseSchedule out;
  out.T = T;
  double prod = 1.0;
  for (std::size_t i = 0; i < T; ++i) {
    const double b = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(T - 1);
    out.beta.push_back(b);
    out.alpha.push_back(1.0 - b);
    prod *= 1.0 - b;
    out.alpha_bar.push_back(prod);
  }
  return out;
}

/// z_t = sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) eps.
inline Vector forward_noise(std::span<const double> z0, std::size_t t, std::span<const double> eps,
                            const NoiseSchedule& sched) {
  if (t < 1 || t > sched.T) throw Error("forward_noise: t out of range");
  if (z0.size() != eps.size()) throw DimensionError("forward_noise: length mismatch");
  const double a = std::sqrt(sched.alpha_bar_at(t)), b = std::sqrt(1.0 - sched.alpha_bar_at(t));
  Vector out(z0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * z0[i] + b * eps[i];
  return out;
}

// ---------------------------------------------------------------------------
// Conditional denoiser.

struct DenoiserConfig {
  std::size_t d = 16;        // token width, equals the conditioning width
  std::size_t d_z = 16;      // latent length
  std::size_t tokens = 4;    // latent is projected to this many tokens
  std::size_t heads = 2;
  std::size_t ff_blocks = 1;

  void validate() const {
    if (d == 0 || d_z == 0 || tokens == 0) throw ConfigError("denoiser: sizes must be positive");
    if (heads == 0 || d % heads != 0) throw ConfigError("denoiser: heads must divide d");
    if (ff_blocks == 0) throw ConfigError("denoiser: need at least one feed-forward block");
  }
};

/// eps_theta: latent -> `tokens` tokens of width d, plus a learned per-step
/// embedding; one cross-attention block over the conditioning tokens;
/// feed-forward blocks; projection back to d_z. The two null tokens stand in
/// for a dropped text or graph condition.
struct DenoiserWeights {
  DenoiserConfig config;
  ParamId time_table;  // T x d
  ParamId w_in, b_in;
  AttentionWeights cross;
  std::vector<FeedForwardWeights> ff;
  LayerNormWeights out_ln;
  ParamId w_out, b_out;
  ParamId null_text, null_graph;  // d x 1 each
};

inline DenoiserWeights init_denoiser(Parameters& p, const DenoiserConfig& cfg, std::size_t T,
                                     std::uint64_t seed, const std::string& prefix = "denoiser") {
  cfg.validate();
  Rng rng(derive_seed(seed, prefix));
  const std::size_t wide = cfg.d * cfg.tokens;
  DenoiserWeights w;
  w.config = cfg;
  w.time_table = p.add(prefix + ".time_table", gaussian_matrix(rng, T, cfg.d, 0.1));
  w.w_in = p.add(prefix + ".w_in", gaussian_matrix(rng, wide, cfg.d_z, 1.0 / std::sqrt(double(cfg.d_z))));
  w.b_in = p.add(prefix + ".b_in", Matrix(wide, 1));
  w.cross = make_attention(p, prefix + ".cross", cfg.d, cfg.heads, rng);
  for (std::size_t i = 0; i < cfg.ff_blocks; ++i)
    w.ff.push_back(make_feed_forward(p, prefix + ".ff" + std::to_string(i), cfg.d, rng));
  w.out_ln = make_layer_norm(p, prefix + ".out_ln", cfg.d);
  w.w_out = p.add(prefix + ".w_out", Matrix(cfg.d_z, wide));
  w.b_out = p.add(prefix + ".b_out", Matrix(cfg.d_z, 1));
  w.null_text = p.add(prefix + ".null_text", gaussian_matrix(rng, cfg.d, 1, 1.0 / std::sqrt(double(cfg.d))));
  w.null_graph = p.add(prefix + ".null_graph", gaussian_matrix(rng, cfg.d, 1, 1.0 / std::sqrt(double(cfg.d))));
  return w;
}

/// Predicted noise (d_z x 1) for latent z_t (d_z x 1) at step t in [1, T],
/// given conditioning tokens `context` (d x L).
inline Var denoise(Tape& t, const DenoiserWeights& w, Var z_t, std::size_t step, Var context) {
  const auto& c = w.config;
  if (t.value(z_t).rows() != c.d_z || t.value(z_t).cols() != 1)
    throw DimensionError("denoise: latent must be d_z x 1");
  if (t.value(context).rows() != c.d) throw DimensionError("denoise: context rows != d");
  if (step < 1 || step > t.parameters().value(w.time_table).rows())
    throw Error("denoise: step out of range");
  Var x = reshape(add_col(matmul(t.param(w.w_in), z_t), t.param(w.b_in)), c.d, c.tokens);
  x = add_col(x, row_as_column(t.param(w.time_table), step - 1));
  x = attention_block(t, w.cross, x, context);
  for (const auto& ff : w.ff) x = feed_forward_block(t, ff, x);
  Var h = reshape(layer_norm(t, x, w.out_ln.gain, w.out_ln.offset), c.d * c.tokens, 1);
  return add_col(matmul(t.param(w.w_out), h), t.param(w.b_out));
}

// ---------------------------------------------------------------------------
// Full model: Graph-QFormer (or the pooled baseline encoder) + denoiser.

enum class GraphEncoderKind { qformer, baseline };

inline std::string to_string(GraphEncoderKind k) {
  return k == GraphEncoderKind::qformer ? "qformer" : "baseline";
}
inline GraphEncoderKind parse_graph_encoder(const std::string& s) {
  if (s == "qformer") return GraphEncoderKind::qformer;
  if (s == "baseline") return GraphEncoderKind::baseline;
  throw ConfigError("unknown graph encoder '" + s + "'");
}

struct ModelConfig {
  std::size_t d = 16;
  std::size_t qformer_layers = 4;
  std::size_t heads = 2;
  std::size_t cross_period = 2;
  std::size_t latent_tokens = 4;
  std::size_t denoiser_ff_blocks = 1;
  std::size_t T = 100;
  double latent_scale = 4.0;  // latent = latent_scale * mean image column
  GraphEncoderKind encoder = GraphEncoderKind::qformer;
  std::uint64_t seed = 0;

  QFormerConfig qformer() const {
    return {d, qformer_layers, heads, cross_period, derive_seed(seed, "qformer")};
  }
  DenoiserConfig denoiser() const { return {d, d, latent_tokens, heads, denoiser_ff_blocks}; }

  void validate() const {
    qformer().validate();
    denoiser().validate();
    if (T < 2) throw ConfigError("model: T must be >= 2");
    if (!(latent_scale > 0.0)) throw ConfigError("model: latent_scale must be > 0");
  }

  void write(KeyValues& kv) const {
    kv.set("model.d", std::to_string(d));
    kv.set("model.qformer_layers", std::to_string(qformer_layers));
    kv.set("model.heads", std::to_string(heads));
    kv.set("model.cross_period", std::to_string(cross_period));
    kv.set("model.latent_tokens", std::to_string(latent_tokens));
    kv.set("model.denoiser_ff_blocks", std::to_string(denoiser_ff_blocks));
    kv.set("model.T", std::to_string(T));
    kv.set("model.latent_scale", KeyValues::format_double(latent_scale));
    kv.set("model.graph_encoder", to_string(encoder));
    kv.set("model.seed", std::to_string(seed));
  }
  static ModelConfig read(const KeyValues& kv) { return read(kv, ModelConfig()); }
  static ModelConfig read(const KeyValues& kv, ModelConfig c) {
    c.d = kv.get_size("model.d", c.d);
    c.qformer_layers = kv.get_size("model.qformer_layers", c.qformer_layers);
    c.heads = kv.get_size("model.heads", c.heads);
    c.cross_period = kv.get_size("model.cross_period", c.cross_period);
    c.latent_tokens = kv.get_size("model.latent_tokens", c.latent_tokens);
    c.denoiser_ff_blocks = kv.get_size("model.denoiser_ff_blocks", c.denoiser_ff_blocks);
    c.T = kv.get_size("model.T", c.T);
    c.latent_scale = kv.get("model.latent_scale", c.latent_scale);
    c.encoder = parse_graph_encoder(kv.get("model.graph_encoder", to_string(c.encoder)));
    c.seed = kv.get("model.seed", c.seed);
    return c;
  }
};

struct Model {
  ModelConfig config;
  Parameters params;
  QFormerWeights qformer;
  DenoiserWeights denoiser;
  NoiseSchedule schedule;
};

inline Model init_model(const ModelConfig& cfg) {
  cfg.validate();
  Model m;
  m.config = cfg;
  m.qformer = init_qformer(m.params, cfg.qformer());
  m.denoiser = init_denoiser(m.params, cfg.denoiser(), cfg.T, derive_seed(cfg.seed, "denoiser"));
  m.schedule = make_schedule(cfg.T);
  return m;
}

/// Diffusion target for a node: latent_scale times its mean image column.
inline Vector node_latent(const NodeRecord& n, double latent_scale) {
  Vector z = column_mean(n.image_features);
  for (auto& v : z) v *= latent_scale;
  return z;
}

/// Graph tokens h_G on the tape; nullopt when there are none (baseline
/// encoder with an empty neighbor set).
inline std::optional<Var> graph_tokens(Tape& t, const Model& m, const Matrix& text_tokens,
                                       const Matrix& z) {
  if (m.config.encoder == GraphEncoderKind::baseline) {
    if (z.cols() == 0) return std::nullopt;
    return t.constant(baseline_encode(z));
  }
  std::optional<Var> zv;
  if (z.cols() > 0) zv = t.constant(z);
  return qformer_forward(t, m.qformer, t.constant(text_tokens), zv);
}

/// Conditioning tokens [h_T, h_G] with null tokens substituted for dropped
/// conditions.
inline Var conditioning_tokens(Tape& t, const Model& m, const Matrix& text_tokens,
                               const Matrix& z, bool drop_text, bool drop_graph) {
  Var h_text = drop_text ? t.param(m.denoiser.null_text) : t.constant(text_tokens);
  if (drop_graph) return hcat(h_text, t.param(m.denoiser.null_graph));
  auto h_graph = graph_tokens(t, m, text_tokens, z);
  return h_graph ? hcat(h_text, *h_graph) : h_text;
}

inline ConditioningBundle make_bundle(const Model& m, const Matrix& text_tokens, const Matrix& z,
                                      bool drop_text, bool drop_graph) {
  Tape t(m.params, false);
  Matrix h_text = drop_text ? m.params.value(m.denoiser.null_text) : text_tokens;
  Matrix h_graph;
  if (drop_graph) {
    h_graph = m.params.value(m.denoiser.null_graph);
  } else if (auto g = graph_tokens(t, m, text_tokens, z)) {
    h_graph = t.value(*g);
  }
  return build_conditioning(std::move(h_text), std::move(h_graph));
}

inline Vector denoise(const Model& m, std::span<const double> z_t, std::size_t step,
                      const ConditioningBundle& bundle) {
  Tape t(m.params, false);
  Var out = denoise(t, m.denoiser, t.constant(Matrix::column(z_t)), step,
                    t.constant(bundle.combined));
  return t.value(out).storage();
}

/// ||eps - eps_theta(z_t, t, h(c_T, c_G))||^2 for one example, on the tape.
inline Var example_loss(Tape& t, const Model& m, const Matrix& text_tokens, const Matrix& z,
                        std::span<const double> z0, std::size_t step, std::span<const double> eps,
                        bool drop_text, bool drop_graph) {
  const Vector z_t = forward_noise(z0, step, eps, m.schedule);
  Var ctx = conditioning_tokens(t, m, text_tokens, z, drop_text, drop_graph);
  Var pred = denoise(t, m.denoiser, t.constant(Matrix::column(z_t)), step, ctx);
  return squared_error(pred, Matrix::column(eps));
}

// ---------------------------------------------------------------------------
// Training.

enum class OptimizerKind { sgd, adamw };

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adamw") return OptimizerKind::adamw;
  throw ConfigError("unknown optimizer '" + s + "'");
}
inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adamw"; }

struct TrainConfig {
  std::size_t steps = 2000;  // gradient steps; 0 means derive from epochs
  std::size_t epochs = 0;
  std::size_t batch_size = 32;
  double learning_rate = 2e-3;
  OptimizerKind optimizer = OptimizerKind::adamw;
  double weight_decay = 0.0;
  double grad_clip = 1.0;
  double drop_text_prob = 0.1;
  double drop_graph_prob = 0.1;
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  void validate() const {
    if (steps == 0 && epochs == 0) throw ConfigError("train: steps or epochs must be positive");
    if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
    if (!(learning_rate >= 0.0)) throw ConfigError("train: learning_rate must be >= 0");
    if (!(grad_clip > 0.0)) throw ConfigError("train: grad_clip must be > 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("train: weight_decay must be >= 0");
    for (double p : {drop_text_prob, drop_graph_prob})
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("train: dropout probabilities must be in [0, 1]");
  }

  void write(KeyValues& kv) const {
    kv.set("train.steps", std::to_string(steps));
    kv.set("train.epochs", std::to_string(epochs));
    kv.set("train.batch_size", std::to_string(batch_size));
    kv.set("train.learning_rate", KeyValues::format_double(learning_rate));
    kv.set("train.optimizer", to_string(optimizer));
    kv.set("train.weight_decay", KeyValues::format_double(weight_decay));
    kv.set("train.grad_clip", KeyValues::format_double(grad_clip));
    kv.set("train.drop_text_prob", KeyValues::format_double(drop_text_prob));
    kv.set("train.drop_graph_prob", KeyValues::format_double(drop_graph_prob));
    kv.set("train.seed", std::to_string(seed));
  }
  static TrainConfig read(const KeyValues& kv) { return read(kv, TrainConfig()); }
  static TrainConfig read(const KeyValues& kv, TrainConfig c) {
    c.steps = kv.get_size("train.steps", c.steps);
    c.epochs = kv.get_size("train.epochs", c.epochs);
    c.batch_size = kv.get_size("train.batch_size", c.batch_size);
    c.learning_rate = kv.get("train.learning_rate", c.learning_rate);
    c.optimizer = parse_optimizer(kv.get("train.optimizer", to_string(c.optimizer)));
    c.weight_decay = kv.get("train.weight_decay", c.weight_decay);
    c.grad_clip = kv.get("train.grad_clip", c.grad_clip);
    c.drop_text_prob = kv.get("train.drop_text_prob", c.drop_text_prob);
    c.drop_graph_prob = kv.get("train.drop_graph_prob", c.drop_graph_prob);
    c.seed = kv.get("train.seed", c.seed);
    return c;
  }
};

struct TrainResult {
  std::vector<double> loss_trace;  // mean example loss per step
  std::size_t train_nodes = 0;
};

/// Gradient descent on the Graph-QFormer and denoiser jointly. Nodes in
/// sampler.exclude (the masked test nodes) are neither trained on nor
/// selected as neighbors. All randomness is drawn on the calling thread, and
/// per-example gradients are summed in batch order, so the result does not
/// depend on cfg.workers.
inline TrainResult train(Model& m, const MultimodalGraph& g, const SamplerConfig& sampler,
                         const TrainConfig& cfg,
                         const std::function<void(std::size_t, double)>& progress = {}) {
  cfg.validate();
  sampler.validate();
  if (g.dim() != m.config.d) throw DimensionError("train: graph dimension differs from model d");
  std::vector<NodeId> train_ids;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!sampler.exclude.count(static_cast<NodeId>(i))) train_ids.push_back(static_cast<NodeId>(i));
  if (train_ids.empty()) throw Error("train: empty training set");

  const auto adj = normalize_adjacency(g);
  const auto conditions = sample_neighbors_batch(g, adj, train_ids, sampler, cfg.workers);
  std::vector<Vector> latents;
  for (NodeId id : train_ids) latents.push_back(node_latent(g.node(id), m.config.latent_scale));

  const std::size_t steps =
      cfg.steps ? cfg.steps
                : cfg.epochs * ((train_ids.size() + cfg.batch_size - 1) / cfg.batch_size);
  Rng rng(derive_seed(cfg.seed, "train"));
  Gradients moment1(m.params), moment2(m.params);
  TrainResult result;
  result.train_nodes = train_ids.size();

  struct Example {
    std::size_t index, step;
    Vector eps;
    bool drop_text, drop_graph;
  };
  std::vector<Example> batch(cfg.batch_size);
  std::vector<Gradients> grads(cfg.batch_size);
  std::vector<double> losses(cfg.batch_size);

  for (std::size_t it = 1; it <= steps; ++it) {
    for (auto& ex : batch) {
      ex.index = rng.index(0, train_ids.size() - 1);
      ex.step = rng.index(1, m.config.T);
      ex.eps = rng.normal_vector(m.config.d);
      ex.drop_text = rng.bernoulli(cfg.drop_text_prob);
      ex.drop_graph = rng.bernoulli(cfg.drop_graph_prob);
    }
    parallel_for(batch.size(), cfg.workers, [&](std::size_t b) {
      const auto& ex = batch[b];
      const NodeId id = train_ids[ex.index];
      Tape t(m.params);
      Var loss = example_loss(t, m, g.node(id).text_tokens, conditions[ex.index].z,
                              latents[ex.index], ex.step, ex.eps, ex.drop_text, ex.drop_graph);
      t.backward(loss, Matrix(1, 1, 1.0));
      losses[b] = t.value(loss)(0, 0);
      grads[b] = std::move(t.gradients());
    });
    Gradients total(m.params);
    double loss = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      total += grads[b];
      loss += losses[b];
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    total.scale(inv);
    loss *= inv;
    result.loss_trace.push_back(loss);

    const double norm = total.norm();
    if (norm > cfg.grad_clip) total.scale(cfg.grad_clip / norm);

    if (cfg.learning_rate > 0.0) {
      if (cfg.optimizer == OptimizerKind::sgd) {
        for (ParamId p = 0; p < m.params.size(); ++p) {
          Matrix& w = m.params.mutable_value(p);
          for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg.learning_rate * total[p][i];
        }
      } else {
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(it));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(it));
        for (ParamId p = 0; p < m.params.size(); ++p) {
          Matrix& w = m.params.mutable_value(p);
          for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = total[p][i];
            moment1[p][i] = b1 * moment1[p][i] + (1.0 - b1) * gi;
            moment2[p][i] = b2 * moment2[p][i] + (1.0 - b2) * gi * gi;
            const double step = (moment1[p][i] / c1) / (std::sqrt(moment2[p][i] / c2) + eps);
            w[i] -= cfg.learning_rate * (step + cfg.weight_decay * w[i]);
          }
        }
      }
      m.params.round_to_storage();
    }
    if (progress) progress(it, loss);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Guided ancestral sampling.

/// DDPM ancestral sampling from z_T ~ N(0, I). Every step evaluates the
/// denoiser M + 2 times (unconditional, text-only, each graph condition with
/// text) and combines the predictions with compose_multi. Graph tokens are
/// encoded once up front.
inline Vector sample(const Model& m, const Matrix& text_tokens, const GuidanceSpec& spec,
                     std::uint64_t seed) {
  spec.validate();
  std::vector<Matrix> contexts;
  contexts.push_back(make_bundle(m, text_tokens, Matrix(), true, true).combined);
  contexts.push_back(make_bundle(m, text_tokens, Matrix(), false, true).combined);
  std::vector<double> scales;
  for (const auto& term : spec.graph_terms) {
    contexts.push_back(make_bundle(m, text_tokens, term.condition.z, false, false).combined);
    scales.push_back(term.scale);
  }

  const auto& s = m.schedule;
  Rng rng(derive_seed(seed, "sample"));
  Vector z = rng.normal_vector(m.config.d);
  std::vector<Vector> preds(contexts.size());
  for (std::size_t step = s.T; step >= 1; --step) {
    for (std::size_t c = 0; c < contexts.size(); ++c) {
      Tape t(m.params, false);
      preds[c] = t.value(denoise(t, m.denoiser, t.constant(Matrix::column(z)), step,
                                 t.constant(contexts[c])))
                     .storage();
    }
    ScoreTriple triple{preds[0], preds[1], {preds.begin() + 2, preds.end()}};
    const Vector eps = compose_multi(triple, spec.s_text, scales);
    const double beta = s.beta[step - 1], alpha = s.alpha[step - 1];
    const double ab = s.alpha_bar_at(step), ab_prev = s.alpha_bar_at(step - 1);
    const double coef = beta / std::sqrt(1.0 - ab);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = (z[i] - coef * eps[i]) / std::sqrt(alpha);
    if (step > 1) {
      const double sigma = std::sqrt(beta * (1.0 - ab_prev) / (1.0 - ab));
      for (auto& v : z) v += sigma * rng.normal();
    }
  }
  return z;
}

}  // namespace ig2i
