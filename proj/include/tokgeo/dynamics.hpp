#pragma once

// Synthetic projection dynamics: per-token normal sampling, the projector
// that removes a token's components along its normals, multi-step cascades
// that track the correlator against the (d-1)/(d-1+dd) law, and a Monte
// Carlo oracle for <cos^2> of a uniform direction against a fixed axis.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/QR>

#include "tokgeo/errors.hpp"
#include "tokgeo/geometry.hpp"
#include "tokgeo/linalg.hpp"

namespace tokgeo {

struct ProjectionStep {
  int d_before = 0;
  int d_after = 0;

  int delta() const { return d_after - d_before; }
  int normals_per_token() const { return d_before - d_after; }
};

// Which directions a token's normals must avoid. All modes also avoid the
// token's own previously removed normals, so its occupied dimension shrinks
// by exactly the removed count.
enum class NormalConstraint {
  others_span,    // orthogonal to every other token (n . t_j = 0 for all j != i)
  others_sum,     // orthogonal to the sum of the other tokens (batch-averaged form)
  unconstrained,  // fully random directions
};

inline std::string to_string(NormalConstraint c) {
  switch (c) {
    case NormalConstraint::others_span: return "others_span";
    case NormalConstraint::others_sum: return "others_sum";
    case NormalConstraint::unconstrained: return "unconstrained";
  }
  return "unknown";
}

inline NormalConstraint normal_constraint_from_string(const std::string& s) {
  if (s == "others_span") return NormalConstraint::others_span;
  if (s == "others_sum") return NormalConstraint::others_sum;
  if (s == "unconstrained") return NormalConstraint::unconstrained;
  throw SpecError("unknown normal constraint '" + s + "'");
}

namespace detail {

inline Eigen::MatrixXd thin_q(const Eigen::MatrixXd& a) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = Eigen::MatrixXd::Identity(a.rows(), a.cols());
  q.applyOnTheLeft(qr.householderQ());
  return q;
}

// Removes the span of an orthonormal basis from the columns of m.
inline void project_out(Eigen::MatrixXd& m, const Eigen::MatrixXd& basis, int passes = 2) {
  if (basis.cols() == 0) return;
  for (int pass = 0; pass < passes; ++pass) m.noalias() -= basis * (basis.transpose() * m);
}

}  // namespace detail

// Orthonormal basis of span(basis, extra) where basis is already orthonormal.
// Directions of extra whose residual falls below rel_tol times its largest
// column norm are treated as already spanned.
inline Eigen::MatrixXd extend_basis(const Eigen::MatrixXd& basis, Eigen::MatrixXd extra, double rel_tol = 1e-10) {
  if (extra.cols() == 0) return basis;
  const double scale = extra.colwise().norm().maxCoeff();
  detail::project_out(extra, basis);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(extra);
  const Eigen::MatrixXd& r = qr.matrixR();
  Eigen::Index rank = 0;
  const auto diag = std::min(r.rows(), r.cols());
  while (rank < diag && std::abs(r(rank, rank)) > rel_tol * scale) ++rank;
  Eigen::MatrixXd out(basis.rows(), basis.cols() + rank);
  out.leftCols(basis.cols()) = basis;
  if (rank > 0) {
    Eigen::MatrixXd q = Eigen::MatrixXd::Identity(extra.rows(), rank);
    q.applyOnTheLeft(qr.householderQ());
    detail::project_out(q, basis);
    out.rightCols(rank) = detail::thin_q(q);
  }
  return out;
}

// count orthonormal directions drawn uniformly from the orthogonal complement
// of an orthonormal basis (dim x r). Returned as dim x count columns.
inline Eigen::MatrixXd sample_complement_normals(const Eigen::MatrixXd& avoid, int dim, int count, Rng& rng) {
  const auto available = dim - avoid.cols();
  if (count < 0) throw GeometryError("normal count must be non-negative");
  if (count > available)
    throw GeometryError("orthogonal complement has dimension " + std::to_string(available) + ", cannot hold " +
                        std::to_string(count) + " normals");
  if (count == 0) return Eigen::MatrixXd(dim, 0);
  // Project, orthonormalize, then one more projection pass to clean up the
  // rounding left by the first.
  Eigen::MatrixXd g = gaussian_matrix(dim, count, rng);
  detail::project_out(g, avoid, 1);
  Eigen::MatrixXd q = detail::thin_q(g);
  detail::project_out(q, avoid, 1);
  return detail::thin_q(q);
}

// Normals for one token, orthogonal to every row of others (tokens are rows).
inline Eigen::MatrixXd sample_normals(const Vector& token, const Matrix& others, int count, std::uint64_t seed) {
  const int dim = static_cast<int>(token.size());
  if (others.cols() != 0 && others.cols() != dim) throw GeometryError("others must share the token dimension");
  const Eigen::MatrixXd avoid = extend_basis(Eigen::MatrixXd(dim, 0), Eigen::MatrixXd(others.transpose()));
  auto rng = make_rng(seed, {0x6e6f726du});
  return sample_complement_normals(avoid, dim, count, rng);
}

// t - |t| sum_a (t_hat . n_a) n_a, which is the orthogonal removal of the
// components of t along the (orthonormal) normals.
inline Vector project_token(const Vector& token, const Eigen::MatrixXd& normals) {
  if (!(token.squaredNorm() > 0.0)) throw DegenerateInput("cannot project a zero-norm token");
  if (normals.cols() == 0) return token;
  return token - normals * (normals.transpose() * token);
}

// (d-1)/(d-1+dd).
inline double predicted_correlator_ratio(int d, int delta) {
  const int denom = d - 1 + delta;
  if (denom <= 0 || d - 1 <= 0)
    throw GeometryError("degenerate ratio for d=" + std::to_string(d) + ", dd=" + std::to_string(delta));
  return static_cast<double>(d - 1) / static_cast<double>(denom);
}

// Mean of t_i . t_j over ordered pairs i != j.
inline double mean_pairwise_dot(const Matrix& vectors) {
  const double n = static_cast<double>(vectors.rows());
  Vector sum = Vector::Zero(vectors.cols());
  double sum_sq = 0.0;
  for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
    sum += vectors.row(r).transpose();
    sum_sq += vectors.row(r).squaredNorm();
  }
  return (sum.squaredNorm() - sum_sq) / (n * (n - 1.0));
}

struct CascadeOptions {
  NormalConstraint constraint = NormalConstraint::others_span;
  bool keep_states = false;
};

struct CascadeResult {
  int ambient_dim = 0;
  std::vector<ProjectionStep> schedule;
  std::vector<double> e_series;             // steps + 1
  std::vector<double> predicted_ratios;     // (d-1)/(d-1+dd)
  std::vector<double> measured_ratios;      // E(k+1)/E(k)
  std::vector<double> conservation_series;  // E(k) * (d_k - 1), steps + 1
  std::vector<double> numerator_series;     // mean pairwise dot, steps + 1
  // Token-averaged sum of cos^2 between t_hat and its own normals, next to
  // the ambient prediction -dd/(d-1) and the expectation for normals uniform
  // in the sampled complement (count * |P t_hat|^2 / dim(complement)).
  std::vector<double> cos2_measured;
  std::vector<double> cos2_predicted_ambient;
  std::vector<double> cos2_expected_complement;
  std::vector<int> min_complement_dims;
  std::vector<Matrix> states;  // steps + 1 when keep_states
};

// Projects the ensemble through the schedule of dimension changes
// (dd <= 0 per step). The effective dimension starts at the ambient
// dimension and drops by the removed count at every step.
inline CascadeResult run_cascade(const Matrix& initial, const std::vector<int>& schedule, std::uint64_t seed,
                                 const CascadeOptions& options = {}) {
  const auto n = initial.rows();
  const int dim = static_cast<int>(initial.cols());
  if (n < 2) throw GeometryError("cascade needs at least 2 tokens");
  if (!initial.allFinite()) throw DataError("cascade input contains non-finite values");
  const double e0 = correlator(initial);
  if (!(e0 > 0.0)) throw GeometryError("initial correlator must be positive, got " + std::to_string(e0));

  // Feasibility of every step before any work.
  const int fixed_rank = options.constraint == NormalConstraint::others_span  ? static_cast<int>(n) - 1
                         : options.constraint == NormalConstraint::others_sum ? 1
                                                                              : 0;
  {
    int d = dim;
    for (int delta : schedule) {
      if (delta > 0) throw GeometryError("projection steps cannot expand the dimension");
      const int count = -delta;
      if (count > 0 && count > d - fixed_rank)
        throw GeometryError("step " + std::to_string(d) + "->" + std::to_string(d - count) +
                            " exceeds the available complement for " + std::to_string(n) + " tokens");
      if (count > 0) (void)predicted_correlator_ratio(d, delta);
      d -= count;
    }
  }

  CascadeResult result;
  result.ambient_dim = dim;
  Matrix tokens = initial;
  std::vector<Eigen::MatrixXd> removed(static_cast<std::size_t>(n), Eigen::MatrixXd(dim, 0));
  int d = dim;
  result.e_series.push_back(e0);
  result.conservation_series.push_back(e0 * (d - 1));
  result.numerator_series.push_back(mean_pairwise_dot(tokens));
  if (options.keep_states) result.states.push_back(tokens);

  for (std::size_t step = 0; step < schedule.size(); ++step) {
    const int count = -schedule[step];
    ProjectionStep ps{d, d - count};
    Matrix next = tokens;
    double cos2_sum = 0.0;
    double cos2_complement = 0.0;
    int min_complement = dim;
    if (count > 0) {
      Vector total = Vector::Zero(dim);
      for (Eigen::Index i = 0; i < n; ++i) total += tokens.row(i).transpose();
      for (Eigen::Index i = 0; i < n; ++i) {
        const Vector t = tokens.row(i).transpose();
        auto& own = removed[static_cast<std::size_t>(i)];
        Eigen::MatrixXd avoid;
        switch (options.constraint) {
          case NormalConstraint::others_span: {
            Eigen::MatrixXd others(dim, n - 1);
            for (Eigen::Index j = 0, c = 0; j < n; ++j)
              if (j != i) others.col(c++) = tokens.row(j).transpose();
            avoid = extend_basis(own, std::move(others));
            break;
          }
          case NormalConstraint::others_sum:
            avoid = extend_basis(own, Eigen::MatrixXd(total - t));
            break;
          case NormalConstraint::unconstrained:
            avoid = own;
            break;
        }
        const int complement = dim - static_cast<int>(avoid.cols());
        min_complement = std::min(min_complement, complement);
        auto rng = make_rng(seed, {static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(i)});
        const Eigen::MatrixXd normals = sample_complement_normals(avoid, dim, count, rng);

        const Vector unit = t.normalized();
        cos2_sum += (normals.transpose() * unit).squaredNorm();
        Vector in_complement = unit;
        in_complement.noalias() -= avoid * (avoid.transpose() * unit);
        cos2_complement += count * in_complement.squaredNorm() / complement;

        next.row(i) = project_token(t, normals).transpose();
        Eigen::MatrixXd grown(dim, own.cols() + count);
        grown << own, normals;
        own = std::move(grown);
      }
      tokens = std::move(next);
    }
    d = ps.d_after;
    const double e = correlator(tokens);
    result.schedule.push_back(ps);
    result.measured_ratios.push_back(e / result.e_series.back());
    result.predicted_ratios.push_back(count == 0 ? 1.0 : predicted_correlator_ratio(ps.d_before, ps.delta()));
    result.e_series.push_back(e);
    result.conservation_series.push_back(e * (d - 1));
    result.numerator_series.push_back(mean_pairwise_dot(tokens));
    result.cos2_measured.push_back(cos2_sum / static_cast<double>(n));
    result.cos2_predicted_ambient.push_back(static_cast<double>(count) / (ps.d_before - 1));
    result.cos2_expected_complement.push_back(cos2_complement / static_cast<double>(n));
    result.min_complement_dims.push_back(count == 0 ? d - fixed_rank : min_complement);
    if (options.keep_states) result.states.push_back(tokens);
  }
  return result;
}

// Converts a decreasing list of dimensions (d_0, d_1, ...) into dd steps.
inline std::vector<int> schedule_from_dims(const std::vector<int>& dims) {
  std::vector<int> out;
  for (std::size_t k = 1; k < dims.size(); ++k) out.push_back(dims[k] - dims[k - 1]);
  return out;
}

struct MonteCarloEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
};

// Monte Carlo <cos^2 theta> between a uniform unit vector in R^d and a fixed
// axis. Exact value is 1/d. A Gaussian vector splits into its axis component
// z and an independent chi-square(d-1) remainder, so each sample costs two
// draws regardless of d.
inline MonteCarloEstimate mc_cos2_expectation(int d, long samples, std::uint64_t seed) {
  if (d < 2) throw SpecError("mc_cos2_expectation needs d >= 2");
  if (samples < 10000) throw SpecError("mc_cos2_expectation needs at least 1e4 samples");
  auto rng = make_rng(seed, {0x636f7332u, static_cast<std::uint64_t>(d)});
  std::normal_distribution<double> normal(0.0, 1.0);
  std::chi_squared_distribution<double> rest(static_cast<double>(d - 1));
  double sum = 0.0;
  double sum_sq = 0.0;
  for (long s = 0; s < samples; ++s) {
    const double axis = normal(rng);
    const double a2 = axis * axis;
    const double c2 = a2 / (a2 + rest(rng));
    sum += c2;
    sum_sq += c2 * c2;
  }
  const double count = static_cast<double>(samples);
  const double mean = sum / count;
  const double var = std::max(0.0, (sum_sq - count * mean * mean) / (count - 1.0));
  return {mean, std::sqrt(var / count)};
}

}  // namespace tokgeo
