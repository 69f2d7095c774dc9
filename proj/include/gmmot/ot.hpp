#pragma once

// Discrete optimal transport: exact transportation LP, log-domain Sinkhorn,
// barycentric projection.

#include "gmmot/core.hpp"

#include <filesystem>

namespace gmmot {

/// Nonnegative weights summing to one.
using Histogram = Vector;

Histogram uniform_histogram(Index n);
void validate_histogram(const Histogram& w, const char* name);

struct TransportPlan {
  Matrix gamma;
  double cost = 0.0;  // sum_ij gamma_ij C_ij, entropy excluded
  bool converged = true;
  double marginal_violation = 0.0;  // L1 row error + L1 column error
  int iterations = 0;

  Index n_positive() const { return (gamma.array() > 0.0).count(); }
};

double marginal_violation(const Matrix& gamma, const Histogram& p, const Histogram& q);

/// C_ij = |x_i - y_j|^2.
template <typename DerivedX, typename DerivedY>
Matrix squared_euclidean_cost(const Eigen::MatrixBase<DerivedX>& X,
                              const Eigen::MatrixBase<DerivedY>& Y) {
  require(X.cols() == Y.cols(), "squared_euclidean_cost: dimension mismatch");
  const Vector xn = X.rowwise().squaredNorm();
  const Vector yn = Y.rowwise().squaredNorm();
  Matrix C = (-2.0 * X * Y.transpose()).eval();
  C.colwise() += xn;
  C.rowwise() += yn.transpose();
  // Expansion roundoff can leave tiny negatives and a nonzero diagonal for X == Y.
  for (Index i = 0; i < C.rows(); ++i)
    for (Index j = 0; j < C.cols(); ++j) {
      if (C(i, j) < 0.0) C(i, j) = 0.0;
      if (C(i, j) <= 1e-12 * (xn(i) + yn(j)) && X.row(i) == Y.row(j)) C(i, j) = 0.0;
    }
  return C;
}

/// Exact optimal vertex of the transportation polytope by primal network
/// simplex. Zero-mass atoms are removed before solving and reinserted as
/// zero rows/columns. Throws when the total masses differ by more than 1e-9.
TransportPlan solve_exact(const Histogram& p, const Histogram& q, const Matrix& C);

struct SinkhornOptions {
  double epsilon = 1e-2;
  int max_iter = 100000;
  double tol = 1e-8;
  // Warm-start potentials through a geometric schedule of larger epsilons.
  bool epsilon_scaling = true;
};

/// Entropic OT in the log domain. A plan that misses tol within max_iter is
/// returned with converged = false and the achieved violation.
TransportPlan solve_sinkhorn(const Histogram& p, const Histogram& q, const Matrix& C,
                             const SinkhornOptions& opts);

/// Row i of the result is sum_j gamma_ij y_j / sum_j gamma_ij.
template <typename Derived>
Matrix barycentric_map(const Matrix& gamma, const Eigen::MatrixBase<Derived>& Y) {
  require(gamma.cols() == Y.rows(), "barycentric_map: plan columns must match target rows");
  const Vector mass = gamma.rowwise().sum();
  require((mass.array() > 0.0).all(), "barycentric_map: plan has a zero row");
  return mass.cwiseInverse().asDiagonal() * (gamma * Y);
}

/// sqrt of the exact OT cost between uniform empirical measures.
double w2_empirical(const Matrix& X, const Matrix& Y);

/// Dense CSV of gamma plus a <stem>.json with cost, n_positive_entries,
/// converged and marginal_violation.
void write_plan(const std::filesystem::path& csv_path, const TransportPlan& plan);

}  // namespace gmmot
