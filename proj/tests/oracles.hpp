#pragma once

// Reference implementations on Eigen, kept independent of the library code
// they check.

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include <ig2i/ig2i.hpp>

namespace ig2i::testing {

// Independent of the library: builds the transition matrix straight from the
// edge list, empty rows send their mass to the target.
inline Eigen::VectorXd eigen_ppr(std::size_t n, const std::vector<std::pair<NodeId, NodeId>>& edges,
                                 NodeId target, double beta) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(long(n), long(n));
  for (auto [i, j] : edges) a(i, j) = a(j, i) = 1.0;
  for (long i = 0; i < long(n); ++i) {
    const double deg = a.row(i).sum();
    if (deg == 0.0)
      a(i, target) = 1.0;
    else
      a.row(i) /= deg;
  }
  const Eigen::MatrixXd m = Eigen::MatrixXd::Identity(long(n), long(n)) - beta * a.transpose();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(long(n));
  b(target) = 1.0 - beta;
  return m.fullPivLu().solve(b);
}

// Reference Frechet distance built on Eigen's self-adjoint solver.
inline double eigen_frechet(const Matrix& a, const Matrix& b) {
  auto fit = [](const Matrix& x, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
    Eigen::MatrixXd m(long(x.rows()), long(x.cols()));
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) m(long(i), long(j)) = x(i, j);
    mu = m.colwise().mean().transpose();
    const Eigen::MatrixXd c = m.rowwise() - mu.transpose();
    cov = c.transpose() * c / double(x.rows() - 1);
    cov += 1e-6 * Eigen::MatrixXd::Identity(cov.rows(), cov.cols());
  };
  auto sqrtm = [](const Eigen::MatrixXd& s) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return Eigen::MatrixXd(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
  };
  Eigen::VectorXd ma, mb;
  Eigen::MatrixXd ca, cb;
  fit(a, ma, ca);
  fit(b, mb, cb);
  const Eigen::MatrixXd ra = sqrtm(ca);
  Eigen::MatrixXd inner = ra * cb * ra;
  inner = 0.5 * (inner + inner.transpose());
  return (ma - mb).squaredNorm() + (ca + cb - 2.0 * sqrtm(inner)).trace();
}

/// n samples of a randomly correlated d-dimensional Gaussian shifted by `shift`.
inline Matrix gaussian_set(Rng& rng, std::size_t n, std::size_t d, double shift) {
  Matrix l(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j <= i; ++j) l(i, j) = rng.normal() * 0.7 + (i == j ? 1.0 : 0.0);
  Matrix x(n, d);
  for (std::size_t s = 0; s < n; ++s) {
    const Vector g = rng.normal_vector(d);
    for (std::size_t i = 0; i < d; ++i) {
      double v = shift;
      for (std::size_t j = 0; j < d; ++j) v += l(i, j) * g[j];
      x(s, i) = v;
    }
  }
  return x;
}

}  // namespace ig2i::testing
