#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ig2i/error.hpp"
#include "ig2i/matrix.hpp"

namespace ig2i {

using ParamId = std::size_t;

/// Ordered registry of named parameter matrices. Stored values are always
/// representable in 32-bit floats so checkpoints round-trip exactly;
/// arithmetic runs in 64-bit.
class Parameters {
 public:
  ParamId add(std::string name, Matrix value) {
    if (index_.count(name)) throw Error("duplicate parameter name " + name);
    round_to_storage(value);
    index_.emplace(name, names_.size());
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
    return values_.size() - 1;
  }

  std::size_t size() const noexcept { return values_.size(); }
  const Matrix& value(ParamId id) const { return values_.at(id); }
  /// Direct access for optimizers and finite-difference probes. Callers that
  /// intend to persist a value should call round_to_storage() afterwards.
  Matrix& mutable_value(ParamId id) { return values_.at(id); }
  const std::string& name(ParamId id) const { return names_.at(id); }
  std::optional<ParamId> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
  }

  static void round_to_storage(Matrix& m) {
    for (auto& x : m.values()) x = static_cast<double>(static_cast<float>(x));
  }
  void round_to_storage() {
    for (auto& v : values_) round_to_storage(v);
  }

  friend bool operator==(const Parameters& a, const Parameters& b) {
    return a.names_ == b.names_ && a.values_ == b.values_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::unordered_map<std::string, ParamId> index_;
};

/// Gradient buffers shaped like a Parameters registry.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const Parameters& p) {
    grads_.reserve(p.size());
    for (ParamId i = 0; i < p.size(); ++i)
      grads_.emplace_back(p.value(i).rows(), p.value(i).cols());
  }
  std::size_t size() const noexcept { return grads_.size(); }
  Matrix& operator[](ParamId i) { return grads_[i]; }
  const Matrix& operator[](ParamId i) const { return grads_[i]; }

  void zero() {
    for (auto& g : grads_) g.fill(0.0);
  }
  Gradients& operator+=(const Gradients& o) {
    if (o.size() != size()) throw DimensionError("gradient registry mismatch");
    for (std::size_t i = 0; i < size(); ++i) grads_[i] += o.grads_[i];
    return *this;
  }
  void scale(double s) {
    for (auto& g : grads_) g *= s;
  }
  double norm() const {
    double s = 0.0;
    for (const auto& g : grads_)
      for (double v : g.values()) s += v * v;
    return std::sqrt(s);
  }

 private:
  std::vector<Matrix> grads_;
};

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;
};

/// Records forward operations and replays them in reverse. One tape per
/// forward evaluation; a tape built with record=false only computes values.
class Tape {
 public:
  explicit Tape(const Parameters& params, bool record = true)
      : params_(&params), record_(record), param_nodes_(params.size(), kNone) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  const Parameters& parameters() const noexcept { return *params_; }
  bool recording() const noexcept { return record_; }
  std::size_t node_count() const noexcept { return nodes_.size(); }

  Var constant(Matrix value) { return push(std::move(value), {}); }

  Var param(ParamId id) {
    if (param_nodes_.at(id) == kNone) {
      Var v = push(params_->value(id), {});
      nodes_[v.id].param = id;
      param_nodes_[id] = v.id;
    }
    return {this, param_nodes_[id]};
  }

  const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
  const Matrix& grad(Var v) const { return nodes_.at(v.id).grad; }

  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Var push(Matrix value, BackwardFn back) {
    if (!value.all_finite()) throw Error("non-finite value produced in forward pass");
    Node n;
    n.value = std::move(value);
    if (record_) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  /// Adds `delta` to the gradient of node `id`.
  void accumulate(std::size_t id, const Matrix& delta) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
    n.grad += delta;
  }
  const Matrix& node_grad(std::size_t id) const { return nodes_[id].grad; }
  const Matrix& node_value(std::size_t id) const { return nodes_[id].value; }

  /// Reverse pass from `out` seeded with `seed` (same shape as out). Adds
  /// the resulting parameter gradients into gradients().
  void backward(Var out, const Matrix& seed) {
    if (!record_) throw Error("backward on a tape that did not record");
    if (out.tape != this || out.id >= nodes_.size() || nodes_.empty())
      throw Error("backward without a recorded forward pass");
    if (!seed.same_shape(nodes_[out.id].value))
      throw DimensionError("loss gradient shape does not match output");
    for (auto& n : nodes_) n.grad = Matrix();
    accumulate(out.id, seed);
    for (std::size_t i = out.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty()) continue;
      if (n.back) n.back(*this, i);
    }
    if (grads_.size() != params_->size()) grads_ = Gradients(*params_);
    for (const auto& n : nodes_)
      if (n.param != kNone && !n.grad.empty()) grads_[n.param] += n.grad;
  }

  Gradients& gradients() {
    if (grads_.size() != params_->size()) grads_ = Gradients(*params_);
    return grads_;
  }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn back;
    std::size_t param = kNone;
  };

  const Parameters* params_;
  bool record_;
  std::vector<Node> nodes_;
  std::vector<std::size_t> param_nodes_;
  Gradients grads_;
};

inline void backward(Tape& tape, Var out, const Matrix& seed) { tape.backward(out, seed); }

// ---------------------------------------------------------------------------
// Differentiable operations.

inline Var matmul(Var a, Var b) {
  Tape& t = *a.tape;
  return t.push(matmul(t.value(a), t.value(b)), [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.node_grad(self);
    t.accumulate(a.id, matmul(g, transpose(t.node_value(b.id))));
    t.accumulate(b.id, matmul(transpose(t.node_value(a.id)), g));
  });
}

inline Var add(Var a, Var b) {
  Tape& t = *a.tape;
  return t.push(t.value(a) + t.value(b), [a, b](Tape& t, std::size_t self) {
    t.accumulate(a.id, t.node_grad(self));
    t.accumulate(b.id, t.node_grad(self));
  });
}

inline Var sub(Var a, Var b) {
  Tape& t = *a.tape;
  return t.push(t.value(a) - t.value(b), [a, b](Tape& t, std::size_t self) {
    t.accumulate(a.id, t.node_grad(self));
    t.accumulate(b.id, t.node_grad(self) * -1.0);
  });
}

inline Var scale(Var a, double s) {
  Tape& t = *a.tape;
  return t.push(t.value(a) * s, [a, s](Tape& t, std::size_t self) {
    t.accumulate(a.id, t.node_grad(self) * s);
  });
}

/// x (r x c) plus column vector b (r x 1) broadcast over columns.
inline Var add_col(Var x, Var b) {
  Tape& t = *x.tape;
  const Matrix& xv = t.value(x);
  const Matrix& bv = t.value(b);
  if (bv.rows() != xv.rows() || bv.cols() != 1) throw DimensionError("add_col shape");
  Matrix out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv(r, 0);
  return t.push(std::move(out), [x, b](Tape& t, std::size_t self) {
    const Matrix& g = t.node_grad(self);
    t.accumulate(x.id, g);
    Matrix gb(g.rows(), 1);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) gb(r, 0) += g(r, c);
    t.accumulate(b.id, gb);
  });
}

inline Var transpose(Var a) {
  Tape& t = *a.tape;
  return t.push(transpose(t.value(a)), [a](Tape& t, std::size_t self) {
    t.accumulate(a.id, transpose(t.node_grad(self)));
  });
}

inline Var hcat(Var a, Var b) {
  Tape& t = *a.tape;
  const std::size_t ca = t.value(a).cols();
  return t.push(hcat(t.value(a), t.value(b)), [a, b, ca](Tape& t, std::size_t self) {
    const Matrix& g = t.node_grad(self);
    Matrix ga(g.rows(), ca), gb(g.rows(), g.cols() - ca);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (std::size_t c = 0; c < ca; ++c) ga(r, c) = g(r, c);
      for (std::size_t c = ca; c < g.cols(); ++c) gb(r, c - ca) = g(r, c);
    }
    if (ga.cols()) t.accumulate(a.id, ga);
    if (gb.cols()) t.accumulate(b.id, gb);
  });
}

/// Rows [lo, hi) of a.
inline Var slice_rows(Var a, std::size_t lo, std::size_t hi) {
  Tape& t = *a.tape;
  const Matrix& av = t.value(a);
  if (lo > hi || hi > av.rows()) throw DimensionError("slice_rows range");
  Matrix out(hi - lo, av.cols());
  for (std::size_t r = lo; r < hi; ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) out(r - lo, c) = av(r, c);
  return t.push(std::move(out), [a, lo](Tape& t, std::size_t self) {
    const Matrix& g = t.node_grad(self);
    const Matrix& av = t.node_value(a.id);
    Matrix ga(av.rows(), av.cols());
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) ga(r + lo, c) = g(r, c);
    t.accumulate(a.id, ga);
  });
}

/// Vertical stack of equal-width blocks.
inline Var vcat(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("vcat of nothing");
  Tape& t = *parts[0].tape;
  const std::size_t cols = t.value(parts[0]).cols();
  std::size_t rows = 0;
  for (Var p : parts) {
    if (t.value(p).cols() != cols) throw DimensionError("vcat width mismatch");
    rows += t.value(p).rows();
  }
  Matrix out(rows, cols);
  std::size_t r0 = 0;
  for (Var p : parts) {
    const Matrix& pv = t.value(p);
    for (std::size_t r = 0; r < pv.rows(); ++r)
      for (std::size_t c = 0; c < cols; ++c) out(r0 + r, c) = pv(r, c);
    r0 += pv.rows();
  }
  return t.push(std::move(out), [parts](Tape& t, std::size_t self) {
    const Matrix& g = t.node_grad(self);
    std::size_t r0 = 0;
    for (Var p : parts) {
      const Matrix& pv = t.node_value(p.id);
      Matrix gp(pv.rows(), pv.cols());
      for (std::size_t r = 0; r < pv.rows(); ++r)
        for (std::size_t c = 0; c < pv.cols(); ++c) gp(r, c) = g(r0 + r, c);
      t.accumulate(p.id, gp);
      r0 += pv.rows();
    }
  });
}

/// Row-major reinterpretation to a new shape with the same element count.
inline Var reshape(Var a, std::size_t rows, std::size_t cols) {
  Tape& t = *a.tape;
  const Matrix& av = t.value(a);
  if (rows * cols != av.size()) throw DimensionError("reshape element count");
  return t.push(Matrix(rows, cols, av.storage()), [a](Tape& t, std::size_t self) {
    const Matrix& av = t.node_value(a.id);
    t.accumulate(a.id, Matrix(av.rows(), av.cols(), t.node_grad(self).storage()));
  });
}

/// Row `r` of a table, returned as a column vector.
inline Var row_as_column(Var table, std::size_t r) {
  Tape& t = *table.tape;
  const Matrix& tv = t.value(table);
  if (r >= tv.rows()) throw DimensionError("row_as_column index");
  Matrix out(tv.cols(), 1);
  for (std::size_t c = 0; c < tv.cols(); ++c) out(c, 0) = tv(r, c);
  return t.push(std::move(out), [table, r](Tape& t, std::size_t self) {
    const Matrix& tv = t.node_value(table.id);
    const Matrix& g = t.node_grad(self);
    Matrix gt(tv.rows(), tv.cols());
    for (std::size_t c = 0; c < tv.cols(); ++c) gt(r, c) = g(c, 0);
    t.accumulate(table.id, gt);
  });
}

inline Var softmax_rows(Var x) {
  Tape& t = *x.tape;
  return t.push(softmax_rows(t.value(x)), [x](Tape& t, std::size_t self) {
    const Matrix& y = t.node_value(self);
    const Matrix& g = t.node_grad(self);
    Matrix gx(y.rows(), y.cols());
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) s += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) gx(r, c) = y(r, c) * (g(r, c) - s);
    }
    t.accumulate(x.id, gx);
  });
}

/// Normalizes every column over its rows, then applies per-row gain and
/// offset (both r x 1).
inline Var layer_norm_cols(Var x, Var gain, Var offset, double eps = 1e-5) {
  Tape& t = *x.tape;
  const Matrix& xv = t.value(x);
  const Matrix& gv = t.value(gain);
  const Matrix& ov = t.value(offset);
  const std::size_t d = xv.rows(), n = xv.cols();
  if (gv.rows() != d || ov.rows() != d || gv.cols() != 1 || ov.cols() != 1)
    throw DimensionError("layer_norm_cols parameter shape");
  Matrix xhat(d, n), out(d, n);
  std::vector<double> inv_std(n);
  for (std::size_t c = 0; c < n; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < d; ++r) mean += xv(r, c);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t r = 0; r < d; ++r) var += (xv(r, c) - mean) * (xv(r, c) - mean);
    var /= static_cast<double>(d);
    inv_std[c] = 1.0 / std::sqrt(var + eps);
    for (std::size_t r = 0; r < d; ++r) {
      xhat(r, c) = (xv(r, c) - mean) * inv_std[c];
      out(r, c) = gv(r, 0) * xhat(r, c) + ov(r, 0);
    }
  }
  return t.push(std::move(out), [x, gain, offset, xhat = std::move(xhat),
                                 inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
    const Matrix& g = t.node_grad(self);
    const Matrix& gv = t.node_value(gain.id);
    const std::size_t d = g.rows(), n = g.cols();
    Matrix gx(d, n), gg(d, 1), go(d, 1);
    for (std::size_t c = 0; c < n; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t r = 0; r < d; ++r) {
        const double dy = g(r, c) * gv(r, 0);
        sum_dy += dy;
        sum_dy_xhat += dy * xhat(r, c);
        gg(r, 0) += g(r, c) * xhat(r, c);
        go(r, 0) += g(r, c);
      }
      for (std::size_t r = 0; r < d; ++r) {
        const double dy = g(r, c) * gv(r, 0);
        gx(r, c) = inv_std[c] / static_cast<double>(d) *
                   (static_cast<double>(d) * dy - sum_dy - xhat(r, c) * sum_dy_xhat);
      }
    }
    t.accumulate(x.id, gx);
    t.accumulate(gain.id, gg);
    t.accumulate(offset.id, go);
  });
}

/// tanh-approximated GELU.
inline Var gelu(Var x) {
  constexpr double k = 0.7978845608028654;  // sqrt(2 / pi)
  Tape& t = *x.tape;
  Matrix out = t.value(x);
  for (auto& v : out.values()) v = 0.5 * v * (1.0 + std::tanh(k * (v + 0.044715 * v * v * v)));
  return t.push(std::move(out), [x](Tape& t, std::size_t self) {
    const Matrix& xv = t.node_value(x.id);
    Matrix gx = t.node_grad(self);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double v = xv[i];
      const double u = k * (v + 0.044715 * v * v * v);
      const double th = std::tanh(u);
      const double du = k * (1.0 + 3.0 * 0.044715 * v * v);
      gx[i] *= 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du;
    }
    t.accumulate(x.id, gx);
  });
}

/// Sum of squared differences between a and a constant target, as 1 x 1.
inline Var squared_error(Var a, const Matrix& target) {
  Tape& t = *a.tape;
  const Matrix& av = t.value(a);
  if (!av.same_shape(target)) throw DimensionError("squared_error shape");
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += (av[i] - target[i]) * (av[i] - target[i]);
  return t.push(Matrix(1, 1, s), [a, target](Tape& t, std::size_t self) {
    const Matrix& av = t.node_value(a.id);
    const double g = t.node_grad(self)(0, 0);
    Matrix ga(av.rows(), av.cols());
    for (std::size_t i = 0; i < av.size(); ++i) ga[i] = 2.0 * g * (av[i] - target[i]);
    t.accumulate(a.id, ga);
  });
}

}  // namespace ig2i
