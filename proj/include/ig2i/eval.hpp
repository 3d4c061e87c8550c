#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "ig2i/error.hpp"
#include "ig2i/linalg.hpp"
#include "ig2i/matrix.hpp"

namespace ig2i {

/// Rows are samples, columns are feature dimensions.
using FeatureSet = Matrix;

inline FeatureSet feature_set(const std::vector<Vector>& rows) {
  if (rows.empty()) return {};
  FeatureSet f(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != f.cols()) throw DimensionError("ragged feature set");
    for (std::size_t j = 0; j < f.cols(); ++j) f(i, j) = rows[i][j];
  }
  return f;
}

/// Mean paired cosine similarity, times 100.
inline double cosine_score(const FeatureSet& gen, const FeatureSet& gt) {
  if (!gen.same_shape(gt) || gen.rows() == 0)
    throw DimensionError("cosine_score needs equally shaped non-empty sets");
  double total = 0.0;
  for (std::size_t i = 0; i < gen.rows(); ++i) {
    const std::span<const double> a(&gen(i, 0), gen.cols()), b(&gt(i, 0), gt.cols());
    if (norm2(a) == 0.0 || norm2(b) == 0.0)
      throw Error("cosine_score: zero vector in row " + std::to_string(i));
    total += cosine(a, b);
  }
  return 100.0 * total / static_cast<double>(gen.rows());
}

inline constexpr double kCovarianceRidge = 1e-6;

struct GaussianFit {
  Vector mean;
  Matrix cov;
};

/// Sample mean and unbiased covariance plus kCovarianceRidge on the diagonal.
inline GaussianFit fit_gaussian(const FeatureSet& x) {
  if (x.rows() < 2) throw Error("need at least two samples for a covariance");
  const std::size_t n = x.rows(), d = x.cols();
  GaussianFit g{Vector(d, 0.0), Matrix(d, d)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) g.mean[j] += x(i, j);
  for (auto& m : g.mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b)
        g.cov(a, b) += (x(i, a) - g.mean[a]) * (x(i, b) - g.mean[b]);
  for (auto& v : g.cov.values()) v /= static_cast<double>(n - 1);
  for (std::size_t a = 0; a < d; ++a) g.cov(a, a) += kCovarianceRidge;
  return g;
}

/// ||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2) between
/// Gaussians fitted to two feature sets; square roots by symmetric
/// eigendecomposition with eigenvalues clamped at zero.
inline double frechet_distance(const FeatureSet& a, const FeatureSet& b) {
  if (a.cols() != b.cols()) throw DimensionError("frechet_distance: dimension mismatch");
  const auto ga = fit_gaussian(a), gb = fit_gaussian(b);
  double mean_term = 0.0;
  for (std::size_t j = 0; j < ga.mean.size(); ++j)
    mean_term += (ga.mean[j] - gb.mean[j]) * (ga.mean[j] - gb.mean[j]);
  const Matrix root_a = sqrtm_psd(ga.cov);
  Matrix inner = matmul(matmul(root_a, gb.cov), root_a);
  const Matrix inner_t = transpose(inner);
  for (std::size_t i = 0; i < inner.size(); ++i) inner[i] = 0.5 * (inner[i] + inner_t[i]);
  const Matrix cross = sqrtm_psd(inner);
  double trace = 0.0;
  for (std::size_t j = 0; j < ga.mean.size(); ++j)
    trace += ga.cov(j, j) + gb.cov(j, j) - 2.0 * cross(j, j);
  const double fd = mean_term + trace;
  if (!std::isfinite(fd)) throw Error("frechet_distance: non-finite result");
  return std::max(0.0, fd);
}

/// Ranks starting at 1; ties share their average rank.
inline std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return x[i] < x[j]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

/// Spearman rank correlation (Pearson correlation of average ranks).
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw DimensionError("spearman needs paired samples");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace ig2i
