#include <atomic>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace ig2i;
using ig2i::testing::gradcheck;
using ig2i::testing::randomize;
using ig2i::testing::worst;

namespace {

constexpr double kGradTol = 1e-4;

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double sd = 1.0) {
  return Matrix(r, c, rng.normal_vector(r * c, sd));
}

// Weighted sum of every output entry, so each entry gets a distinct seed.
Var reduce(Var y, std::uint64_t seed) {
  Tape& t = *y.tape;
  Rng rng(seed);
  const Matrix& v = t.value(y);
  Matrix w = random_matrix(rng, v.cols(), 1);
  Matrix u = random_matrix(rng, 1, v.rows());
  return matmul(t.constant(u), matmul(y, t.constant(w)));
}

}  // namespace

TEST(Matrix, BasicAlgebra) {
  const Matrix a{{1, 2}, {3, 4}};
  const Matrix b{{0, 1}, {1, 0}};
  EXPECT_EQ(matmul(a, b), (Matrix{{2, 1}, {4, 3}}));
  EXPECT_EQ(transpose(a), (Matrix{{1, 3}, {2, 4}}));
  EXPECT_EQ(hcat(a, b), (Matrix{{1, 2, 0, 1}, {3, 4, 1, 0}}));
  EXPECT_EQ(hcat(Matrix(), a), a);
  EXPECT_EQ(column_mean(a), (Vector{1.5, 3.5}));
  EXPECT_THROW(matmul(a, Matrix(3, 1)), DimensionError);
}

TEST(Softmax, Examples) {
  EXPECT_EQ(softmax_rows(Matrix{{0, 0}}), (Matrix{{0.5, 0.5}}));
  const Matrix big = softmax_rows(Matrix{{1000, 0}});
  EXPECT_EQ(big(0, 0), 1.0);
  EXPECT_NEAR(big(0, 1), 0.0, 1e-300);
  EXPECT_TRUE(big.all_finite());
  EXPECT_EQ(softmax_rows(Matrix(3, 1, 7.0)), Matrix(3, 1, 1.0));
}

TEST(Softmax, RowsAreDistributions) {
  Rng rng(1);
  const Matrix s = softmax_rows(random_matrix(rng, 6, 9, 5.0));
  for (std::size_t r = 0; r < 6; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 9; ++c) {
      EXPECT_GE(s(r, c), 0.0);
      sum += s(r, c);
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Autodiff, LinearLayerHandDerivation) {
  Parameters p;
  const ParamId w = p.add("w", Matrix{{1, 2, 3}, {-1, 0.5, 2}});
  const Matrix x = Matrix::column(Vector{0.5, -1, 2});
  Tape t(p);
  Var y = matmul(t.param(w), t.constant(x));
  Var loss = scale(squared_error(y, Matrix(2, 1)), 0.5);
  t.backward(loss, Matrix(1, 1, 1.0));
  const Matrix yv = t.value(y);
  EXPECT_EQ(t.gradients()[w], matmul(yv, transpose(x)));
}

TEST(Autodiff, ZeroSeedGivesZeroGradients) {
  Parameters p;
  Rng rng(3);
  const ParamId w = p.add("w", random_matrix(rng, 3, 3));
  Tape t(p);
  Var y = gelu(matmul(t.param(w), t.param(w)));
  t.backward(y, Matrix(3, 3));
  for (double g : t.gradients()[w].values()) EXPECT_EQ(g, 0.0);
}

TEST(Autodiff, BackwardErrors) {
  Parameters p;
  p.add("w", Matrix(2, 2, 1.0));
  Tape empty(p);
  EXPECT_THROW(empty.backward(Var{&empty, 0}, Matrix(1, 1, 1.0)), Error);
  Tape t(p);
  Var y = t.param(0);
  EXPECT_THROW(t.backward(y, Matrix(1, 1, 1.0)), DimensionError);
  Tape frozen(p, false);
  Var z = frozen.param(0);
  EXPECT_THROW(frozen.backward(z, Matrix(2, 2, 1.0)), Error);
  Tape other(p);
  EXPECT_THROW(other.backward(y, Matrix(2, 2, 1.0)), Error);
}

TEST(Autodiff, NonFiniteForwardIsAnError) {
  Parameters p;
  p.add("w", Matrix(1, 1, 1e300));
  Tape t(p);
  EXPECT_THROW(matmul(t.param(0), t.param(0)), Error);
}

TEST(Autodiff, ParameterStorageIsFloat) {
  Parameters p;
  const ParamId id = p.add("w", Matrix(1, 1, 0.1));
  EXPECT_EQ(p.value(id)(0, 0), double(0.1f));
  EXPECT_THROW(p.add("w", Matrix(1, 1)), Error);
  EXPECT_EQ(p.find("w"), std::optional<ParamId>(id));
  EXPECT_FALSE(p.find("v"));
}

// One gradcheck per primitive, inputs registered as parameters.
TEST(Gradcheck, Primitives) {
  Rng rng(7);
  Parameters p;
  const ParamId a = p.add("a", random_matrix(rng, 3, 4));
  const ParamId b = p.add("b", random_matrix(rng, 4, 2));
  const ParamId c = p.add("c", random_matrix(rng, 3, 4));
  const ParamId col = p.add("col", random_matrix(rng, 3, 1));
  const ParamId table = p.add("table", random_matrix(rng, 5, 3));
  const ParamId gain = p.add("gain", random_matrix(rng, 3, 1));
  const ParamId off = p.add("off", random_matrix(rng, 3, 1));

  const std::vector<std::pair<std::string, ig2i::testing::ScalarLoss>> cases = {
      {"matmul", [&](Tape& t) { return reduce(matmul(t.param(a), t.param(b)), 1); }},
      {"add_sub", [&](Tape& t) { return reduce(sub(add(t.param(a), t.param(c)), scale(t.param(c), 3.0)), 2); }},
      {"add_col", [&](Tape& t) { return reduce(add_col(t.param(a), t.param(col)), 3); }},
      {"transpose", [&](Tape& t) { return reduce(matmul(transpose(t.param(a)), t.param(c)), 4); }},
      {"hcat", [&](Tape& t) { return reduce(hcat(t.param(a), t.param(col)), 5); }},
      {"slices", [&](Tape& t) {
         Var x = t.param(a);
         return reduce(vcat({slice_rows(x, 2, 3), slice_rows(x, 0, 2), t.param(c)}), 6);
       }},
      {"reshape", [&](Tape& t) { return reduce(reshape(t.param(a), 6, 2), 7); }},
      {"row_as_column", [&](Tape& t) { return reduce(add_col(t.param(a), row_as_column(t.param(table), 3)), 8); }},
      {"softmax", [&](Tape& t) { return reduce(softmax_rows(scale(t.param(a), 2.0)), 9); }},
      {"layer_norm", [&](Tape& t) { return reduce(layer_norm_cols(t.param(a), t.param(gain), t.param(off)), 10); }},
      {"gelu", [&](Tape& t) { return reduce(gelu(scale(t.param(a), 2.0)), 11); }},
      {"squared_error", [&](Tape& t) { return squared_error(matmul(t.param(a), t.param(b)), Matrix(3, 2, 0.25)); }},
  };
  for (const auto& [name, loss] : cases) {
    const auto probes = gradcheck(p, loss, 20, 99);
    ASSERT_FALSE(probes.empty());
    EXPECT_LT(worst(probes), kGradTol) << name;
  }
}

TEST(Attention, SingleKeyReturnsProjectedValue) {
  Parameters p;
  Rng rng(4);
  const auto w = make_attention(p, "att", 8, 2, rng, false);
  randomize(p, 5);
  Tape t(p, false);
  const Matrix q = random_matrix(rng, 8, 3), kv = random_matrix(rng, 8, 1);
  std::vector<Matrix> weights;
  const Matrix out = t.value(multi_head_attention(t, w, t.constant(q), t.constant(kv), t.constant(kv), &weights));
  // Wo (Wv kv + bv) + bo for every query column
  const Matrix pv = matmul(p.value(w.wv), kv) + p.value(w.bv);
  const Matrix expect = matmul(p.value(w.wo), pv) + p.value(w.bo);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t r = 0; r < 8; ++r) EXPECT_NEAR(out(r, c), expect(r, 0), 1e-12);
  for (const auto& h : weights) EXPECT_EQ(h, Matrix(3, 1, 1.0));
}

TEST(Attention, ZeroScoresAverageValues) {
  Parameters p;
  Rng rng(4);
  const std::size_t d = 4;
  auto w = make_attention(p, "att", d, 1, rng);
  Matrix eye(d, d);
  for (std::size_t i = 0; i < d; ++i) eye(i, i) = 1.0;
  p.mutable_value(w.wq) = eye;
  p.mutable_value(w.wk) = eye;
  p.mutable_value(w.wv) = eye;
  p.mutable_value(w.wo) = eye;
  // queries on axes 0-1, keys on axes 2-3: every score is zero
  const Matrix q{{1, 0}, {0, 2}, {0, 0}, {0, 0}};
  const Matrix k{{0, 0, 0}, {0, 0, 0}, {1, 0, 3}, {0, 2, 1}};
  Tape t(p, false);
  const Matrix out = t.value(multi_head_attention(t, w, t.constant(q), t.constant(k), t.constant(k)));
  const Vector mean = column_mean(k);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t r = 0; r < d; ++r) EXPECT_NEAR(out(r, c), mean[r], 1e-15);
}

TEST(Attention, WeightsAreRowStochastic) {
  Parameters p;
  Rng rng(8);
  const auto w = make_attention(p, "att", 8, 2, rng);
  Tape t(p, false);
  std::vector<Matrix> weights;
  multi_head_attention(t, w, t.constant(random_matrix(rng, 8, 3)), t.constant(random_matrix(rng, 8, 5)),
                       t.constant(random_matrix(rng, 8, 5)), &weights);
  ASSERT_EQ(weights.size(), 2u);
  for (const auto& h : weights)
    for (std::size_t r = 0; r < h.rows(); ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < h.cols(); ++c) s += h(r, c);
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Attention, ShapeErrors) {
  Parameters p;
  Rng rng(8);
  const auto w = make_attention(p, "att", 8, 2, rng);
  Tape t(p, false);
  EXPECT_THROW(multi_head_attention(t, w, t.constant(Matrix(7, 2)), t.constant(Matrix(8, 2)),
                                    t.constant(Matrix(8, 2))),
               DimensionError);
  EXPECT_THROW(multi_head_attention(t, w, t.constant(Matrix(8, 2)), t.constant(Matrix(8, 0)),
                                    t.constant(Matrix(8, 0))),
               DimensionError);
  Parameters q;
  EXPECT_THROW(make_attention(q, "bad", 8, 3, rng), ConfigError);
}

TEST(Gradcheck, MultiHeadAttention) {
  Parameters p;
  Rng rng(12);
  const auto w = make_attention(p, "att", 8, 2, rng, false);
  randomize(p, 13);
  const Matrix q = random_matrix(rng, 8, 3), k = random_matrix(rng, 8, 5), v = random_matrix(rng, 8, 5);
  const auto probes = gradcheck(
      p, [&](Tape& t) { return reduce(multi_head_attention(t, w, t.constant(q), t.constant(k), t.constant(v)), 21); },
      20, 1);
  EXPECT_EQ(probes.size(), 20u * p.size());
  EXPECT_LT(worst(probes), kGradTol);
}

TEST(Gradcheck, Blocks) {
  Parameters p;
  Rng rng(14);
  const auto self = make_attention(p, "self", 8, 2, rng, false);
  const auto cross = make_attention(p, "cross", 8, 2, rng, false);
  const auto ff = make_feed_forward(p, "ff", 8, rng, false);
  randomize(p, 15, 0.2);
  const Matrix x = random_matrix(rng, 8, 3), ctx = random_matrix(rng, 8, 6);
  const auto probes = gradcheck(
      p,
      [&](Tape& t) {
        Var h = attention_block(t, self, t.constant(x));
        h = attention_block(t, cross, h, t.constant(ctx));
        return reduce(feed_forward_block(t, ff, h), 22);
      },
      20, 2);
  EXPECT_LT(worst(probes), kGradTol);
}

TEST(Autodiff, DeterministicForwardAndBackward) {
  auto run = [] {
    Parameters p;
    Rng rng(30);
    const auto w = make_attention(p, "att", 8, 2, rng, false);
    Tape t(p);
    Var out = reduce(attention_block(t, w, t.constant(random_matrix(rng, 8, 4))), 5);
    t.backward(out, Matrix(1, 1, 1.0));
    return std::make_pair(t.value(out), t.gradients()[w.wq]);
  };
  EXPECT_EQ(run(), run());
}

TEST(Parallel, CoversEveryIndexAndRethrows) {
  std::vector<std::atomic<int>> hits(103);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i]++; });
  for (auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) { if (i == 7) throw Error("boom"); }), Error);
}

TEST(Rng, SeedSplittingIsStableAndDistinct) {
  EXPECT_EQ(derive_seed(1, "a"), derive_seed(1, "a"));
  EXPECT_NE(derive_seed(1, "a"), derive_seed(1, "b"));
  EXPECT_NE(derive_seed(1, "a"), derive_seed(2, "a"));
  EXPECT_NE(derive_seed(1, std::uint64_t{0}), derive_seed(1, std::uint64_t{1}));
  Rng a(5), b(5);
  EXPECT_EQ(a.normal_vector(10), b.normal_vector(10));
}
