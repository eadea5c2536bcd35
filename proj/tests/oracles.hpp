#pragma once

// Independent reference computations used only by tests.

#include <cstdint>
#include <vector>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "tokgeo/linalg.hpp"

namespace tokgeo::testing {

// Explicit double loop over ordered pairs i != j.
inline double brute_force_correlator(const Matrix& t) {
  const auto n = t.rows();
  double pairs = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) {
        double dot = 0.0;
        for (Eigen::Index c = 0; c < t.cols(); ++c) dot += t(i, c) * t(j, c);
        pairs += dot;
      }
  double norms = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index c = 0; c < t.cols(); ++c) norms += t(i, c) * t(i, c);
  const double nd = static_cast<double>(n);
  return (pairs / (nd * (nd - 1.0))) / (norms / nd);
}

inline double brute_force_mean_cosine(const Matrix& t) {
  const auto n = t.rows();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) sum += t.row(i).dot(t.row(j)) / (t.row(i).norm() * t.row(j).norm());
  return sum / (static_cast<double>(n) * static_cast<double>(n - 1));
}

// Numerical rank from singular values of the token matrix itself (no Gram).
inline int svd_rank(const Matrix& t, double rel_tol = 1e-10) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(t);
  const auto& s = svd.singularValues();
  int rank = 0;
  for (Eigen::Index k = 0; k < s.size(); ++k)
    if (s(k) > rel_tol * s(0)) ++rank;
  return rank;
}

// Squared singular values of t, descending: the nonzero Gram eigenvalues.
inline std::vector<double> squared_singular_values(const Matrix& t) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(t);
  std::vector<double> out;
  for (Eigen::Index k = 0; k < svd.singularValues().size(); ++k)
    out.push_back(svd.singularValues()(k) * svd.singularValues()(k));
  return out;
}

inline Eigen::MatrixXd random_orthogonal(int dim, Rng& rng) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian_matrix(dim, dim, rng));
  return qr.householderQ();
}

inline Matrix random_matrix(int rows, int cols, Rng& rng) { return gaussian_matrix(cols, rows, rng).transpose(); }

}  // namespace tokgeo::testing
