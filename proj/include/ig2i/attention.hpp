#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "ig2i/autodiff.hpp"
#include "ig2i/error.hpp"
#include "ig2i/rng.hpp"

namespace ig2i {

/// Multi-head attention parameters. wq/wk/wv are d x d with head h owning
/// rows [h*d_head, (h+1)*d_head); wo is the d x d output projection. The
/// layer-norm pair belongs to the pre-LN residual block around it.
struct AttentionWeights {
  std::size_t d = 0;
  std::size_t heads = 1;
  ParamId wq, wk, wv, wo;
  ParamId bq, bk, bv, bo;
  ParamId ln_gain, ln_offset;

  std::size_t head_dim() const { return d / heads; }
};

struct FeedForwardWeights {
  ParamId ln_gain, ln_offset;
  ParamId w1, b1, w2, b2;  // d -> 4d -> d
};

struct LayerNormWeights {
  ParamId gain, offset;
};

inline Matrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols, double sd) {
  Matrix m(rows, cols);
  for (auto& v : m.values()) v = sd * rng.normal();
  return m;
}

inline LayerNormWeights make_layer_norm(Parameters& p, const std::string& prefix,
                                        std::size_t d) {
  return {p.add(prefix + ".gain", Matrix(d, 1, 1.0)), p.add(prefix + ".offset", Matrix(d, 1))};
}

/// Scaled-Gaussian init (sd = 1/sqrt(fan_in)). With zero_output the output
/// projection starts at zero so the residual block is initially identity.
inline AttentionWeights make_attention(Parameters& p, const std::string& prefix, std::size_t d,
                                       std::size_t heads, Rng& rng, bool zero_output = true) {
  if (heads == 0 || d % heads != 0)
    throw ConfigError("attention: heads * d_head must equal d");
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  AttentionWeights w;
  w.d = d;
  w.heads = heads;
  w.wq = p.add(prefix + ".wq", gaussian_matrix(rng, d, d, sd));
  w.wk = p.add(prefix + ".wk", gaussian_matrix(rng, d, d, sd));
  w.wv = p.add(prefix + ".wv", gaussian_matrix(rng, d, d, sd));
  w.wo = p.add(prefix + ".wo", zero_output ? Matrix(d, d) : gaussian_matrix(rng, d, d, sd));
  w.bq = p.add(prefix + ".bq", Matrix(d, 1));
  w.bk = p.add(prefix + ".bk", Matrix(d, 1));
  w.bv = p.add(prefix + ".bv", Matrix(d, 1));
  w.bo = p.add(prefix + ".bo", Matrix(d, 1));
  const auto ln = make_layer_norm(p, prefix + ".ln", d);
  w.ln_gain = ln.gain;
  w.ln_offset = ln.offset;
  return w;
}

inline FeedForwardWeights make_feed_forward(Parameters& p, const std::string& prefix,
                                            std::size_t d, Rng& rng, bool zero_output = true) {
  const std::size_t h = 4 * d;
  FeedForwardWeights w;
  const auto ln = make_layer_norm(p, prefix + ".ln", d);
  w.ln_gain = ln.gain;
  w.ln_offset = ln.offset;
  w.w1 = p.add(prefix + ".w1", gaussian_matrix(rng, h, d, 1.0 / std::sqrt(double(d))));
  w.b1 = p.add(prefix + ".b1", Matrix(h, 1));
  w.w2 = p.add(prefix + ".w2",
               zero_output ? Matrix(d, h) : gaussian_matrix(rng, d, h, 1.0 / std::sqrt(double(h))));
  w.b2 = p.add(prefix + ".b2", Matrix(d, 1));
  return w;
}

inline Var layer_norm(Tape& t, Var x, ParamId gain, ParamId offset) {
  return layer_norm_cols(x, t.param(gain), t.param(offset));
}

/// Multi-head scaled dot-product attention with token columns:
/// q is d x Lq, k and v are d x Lk; returns the output-projected d x Lq.
/// If `weights_out` is given, each head's Lq x Lk attention matrix is
/// appended to it.
inline Var multi_head_attention(Tape& t, const AttentionWeights& w, Var q, Var k, Var v,
                                std::vector<Matrix>* weights_out = nullptr) {
  const std::size_t d = w.d;
  if (t.value(q).rows() != d || t.value(k).rows() != d || t.value(v).rows() != d)
    throw DimensionError("attention input rows must equal d");
  if (t.value(k).cols() != t.value(v).cols())
    throw DimensionError("attention keys and values differ in length");
  if (t.value(k).cols() == 0) throw DimensionError("attention over an empty key set");
  const std::size_t dh = w.head_dim();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  Var qp = add_col(matmul(t.param(w.wq), q), t.param(w.bq));
  Var kp = add_col(matmul(t.param(w.wk), k), t.param(w.bk));
  Var vp = add_col(matmul(t.param(w.wv), v), t.param(w.bv));
  std::vector<Var> heads;
  heads.reserve(w.heads);
  for (std::size_t h = 0; h < w.heads; ++h) {
    Var qh = slice_rows(qp, h * dh, (h + 1) * dh);
    Var kh = slice_rows(kp, h * dh, (h + 1) * dh);
    Var vh = slice_rows(vp, h * dh, (h + 1) * dh);
    Var scores = scale(matmul(transpose(qh), kh), inv_sqrt);  // Lq x Lk
    Var attn = softmax_rows(scores);
    if (weights_out) weights_out->push_back(t.value(attn));
    heads.push_back(matmul(vh, transpose(attn)));  // dh x Lq
  }
  Var merged = w.heads == 1 ? heads[0] : vcat(heads);
  return add_col(matmul(t.param(w.wo), merged), t.param(w.bo));
}

/// Pre-LN residual attention block: x + MHA(LN(x), kv, kv), where kv is
/// LN(x) for self-attention or the given context for cross-attention.
inline Var attention_block(Tape& t, const AttentionWeights& w, Var x,
                           std::optional<Var> context = std::nullopt,
                           std::vector<Matrix>* weights_out = nullptr) {
  Var h = layer_norm(t, x, w.ln_gain, w.ln_offset);
  Var kv = context ? *context : h;
  return add(x, multi_head_attention(t, w, h, kv, kv, weights_out));
}

/// Pre-LN residual feed-forward block: x + W2 gelu(W1 LN(x) + b1) + b2.
inline Var feed_forward_block(Tape& t, const FeedForwardWeights& w, Var x) {
  Var h = layer_norm(t, x, w.ln_gain, w.ln_offset);
  Var a = gelu(add_col(matmul(t.param(w.w1), h), t.param(w.b1)));
  return add(x, add_col(matmul(t.param(w.w2), a), t.param(w.b2)));
}

}  // namespace ig2i
