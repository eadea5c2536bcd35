#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "tokgeo/actdump.hpp"
#include "tokgeo/errors.hpp"
#include "tokgeo/linalg.hpp"

namespace tokgeo {

struct CorrelatorSeries {
  std::vector<double> values;  // E per layer
  std::vector<double> cosine;  // mean pairwise cosine similarity per layer
  int argmin_layer = 0;
  double e_model = 0.0;  // series minimum
  double e_final = 0.0;  // last layer
};

struct SpectrumReport {
  std::vector<double> eigenvalues;      // clipped, descending
  std::vector<double> raw_eigenvalues;  // before clipping, descending
  double clip_threshold = 1e-8;
  double condition_number = 1.0;
  int num_clipped = 0;
};

inline constexpr double default_clip_threshold = 1e-8;

namespace detail {

struct RowSums {
  Vector sum;          // sum of retained rows
  double sum_sq = 0;   // sum of squared row norms
  Eigen::Index count = 0;
};

// Sequential accumulation over rows keeps the reduction order fixed.
template <typename RowFn>
RowSums accumulate_rows(const Matrix& vectors, const std::vector<Eigen::Index>& rows, RowFn&& row_of) {
  RowSums s;
  s.sum = Vector::Zero(vectors.cols());
  for (auto r : rows) {
    const Vector t = row_of(r);
    s.sum += t;
    s.sum_sq += t.squaredNorm();
  }
  s.count = static_cast<Eigen::Index>(rows.size());
  return s;
}

inline std::vector<Eigen::Index> checked_rows(const Matrix& vectors, const std::vector<int>& excluded) {
  auto rows = retained_rows(vectors.rows(), excluded);
  if (rows.size() < 2) throw DegenerateInput("fewer than 2 token rows remain after exclusion");
  return rows;
}

}  // namespace detail

// Mean pairwise dot product over i != j divided by the mean squared norm,
// evaluated as ((|sum t|^2 - sum |t|^2) / (n (n-1))) / (sum |t|^2 / n).
inline double correlator(const Matrix& vectors, const std::vector<int>& excluded = {}) {
  const auto rows = detail::checked_rows(vectors, excluded);
  const auto s = detail::accumulate_rows(vectors, rows, [&](Eigen::Index r) { return Vector(vectors.row(r)); });
  if (!(s.sum_sq > 0.0)) throw DegenerateInput("all retained token rows are zero");
  const double n = static_cast<double>(s.count);
  const double pair_mean = (s.sum.squaredNorm() - s.sum_sq) / (n * (n - 1.0));
  return pair_mean / (s.sum_sq / n);
}

// Mean over i != j of the cosine similarity of rows i and j.
inline double mean_cosine_similarity(const Matrix& vectors, const std::vector<int>& excluded = {}) {
  const auto rows = detail::checked_rows(vectors, excluded);
  for (auto r : rows)
    if (!(vectors.row(r).squaredNorm() > 0.0))
      throw DegenerateInput("token row " + std::to_string(r) + " has zero norm");
  const auto s = detail::accumulate_rows(vectors, rows, [&](Eigen::Index r) {
    const Vector t = vectors.row(r);
    return Vector(t / t.norm());
  });
  const double n = static_cast<double>(s.count);
  const double value = (s.sum.squaredNorm() - s.sum_sq) / (n * (n - 1.0));
  return std::clamp(value, -1.0, 1.0);
}

// Eigenvalues of the N x N Gram matrix G_ij = t_i . t_j. Values below the
// threshold (including numerically negative ones) are replaced by it.
inline SpectrumReport gram_spectrum(const Matrix& vectors, double clip_threshold = default_clip_threshold) {
  if (vectors.rows() < 1) throw DegenerateInput("gram_spectrum needs at least one row");
  if (!(clip_threshold > 0.0)) throw SpecError("clip threshold must be positive");
  if (!vectors.allFinite()) throw DataError("gram_spectrum input contains non-finite values");

  const Eigen::MatrixXd gram = vectors * vectors.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw DegenerateInput("Gram eigendecomposition did not converge");

  SpectrumReport report;
  report.clip_threshold = clip_threshold;
  const auto& ev = solver.eigenvalues();  // ascending
  report.raw_eigenvalues.assign(ev.data(), ev.data() + ev.size());
  std::reverse(report.raw_eigenvalues.begin(), report.raw_eigenvalues.end());
  report.eigenvalues.reserve(report.raw_eigenvalues.size());
  for (double v : report.raw_eigenvalues) {
    if (v < clip_threshold) {
      report.eigenvalues.push_back(clip_threshold);
      ++report.num_clipped;
    } else {
      report.eigenvalues.push_back(v);
    }
  }
  report.condition_number = report.eigenvalues.front() / report.eigenvalues.back();
  return report;
}

inline Matrix select_rows(const Matrix& vectors, const std::vector<int>& excluded) {
  const auto rows = retained_rows(vectors.rows(), excluded);
  Matrix out(static_cast<Eigen::Index>(rows.size()), vectors.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = vectors.row(rows[k]);
  return out;
}

// Argmin with ties broken toward the smallest index.
inline int argmin_first(const std::vector<double>& values) {
  return static_cast<int>(std::min_element(values.begin(), values.end()) - values.begin());
}

inline CorrelatorSeries correlator_series(const ActivationTrace& trace) {
  CorrelatorSeries series;
  const auto& excluded = trace.manifest.excluded_token_positions;
  for (const auto& layer : trace.layers) {
    const auto tag = [&](const std::string& what) { return "layer " + std::to_string(layer.layer_index) + ": " + what; };
    try {
      series.values.push_back(correlator(layer.values, excluded));
      series.cosine.push_back(mean_cosine_similarity(layer.values, excluded));
    } catch (const DegenerateInput& e) {
      throw DegenerateInput(tag(e.what()));
    } catch (const DataError& e) {
      throw DataError(tag(e.what()));
    }
  }
  if (series.values.empty()) throw FormatError("trace has no layers");
  series.argmin_layer = argmin_first(series.values);
  series.e_model = series.values[static_cast<std::size_t>(series.argmin_layer)];
  series.e_final = series.values.back();
  return series;
}

}  // namespace tokgeo
