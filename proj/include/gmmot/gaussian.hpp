#pragma once

// Closed-form optimal transport between Gaussians under squared Euclidean
// cost: W2 distances and affine Monge maps, diagonal and full covariance.

#include "gmmot/core.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace gmmot {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar = double>
struct DiagGaussianT {
  VectorX<Scalar> mean;
  VectorX<Scalar> var;  // diagonal of the covariance

  Index dim() const { return mean.size(); }
};

template <typename Scalar = double>
struct FullGaussianT {
  VectorX<Scalar> mean;
  MatrixX<Scalar> cov;

  Index dim() const { return mean.size(); }
};

/// x -> A x + b
template <typename Scalar = double>
struct AffineMapT {
  MatrixX<Scalar> A;
  VectorX<Scalar> b;

  Index dim() const { return b.size(); }

  /// Applies the map to every row of X.
  template <typename Derived>
  MatrixX<Scalar> apply(const Eigen::MatrixBase<Derived>& X) const {
    require(X.cols() == A.cols(), "affine map dimension mismatch");
    return (X * A.transpose()).rowwise() + b.transpose();
  }
};

using DiagGaussian = DiagGaussianT<double>;
using FullGaussian = FullGaussianT<double>;
using AffineMap = AffineMapT<double>;

template <typename Scalar>
struct SymmetricEigen {
  VectorX<Scalar> values;
  MatrixX<Scalar> vectors;  // columns
  int sweeps = 0;
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Sweeps stop once
/// the off-diagonal Frobenius norm falls below threshold * ||M||_F.
template <typename Derived>
SymmetricEigen<typename Derived::Scalar> jacobi_eigen(const Eigen::MatrixBase<Derived>& M,
                                                      double threshold = 1e-12,
                                                      int max_sweeps = 100) {
  using Scalar = typename Derived::Scalar;
  const Index d = M.rows();
  require(M.cols() == d, "jacobi_eigen: matrix must be square");
  MatrixX<Scalar> a = M;
  MatrixX<Scalar> v = MatrixX<Scalar>::Identity(d, d);
  const Scalar scale = std::max<Scalar>(a.norm(), std::numeric_limits<Scalar>::min());

  auto off_norm = [&] {
    Scalar s = 0;
    for (Index p = 0; p < d; ++p)
      for (Index q = p + 1; q < d; ++q) s += 2 * a(p, q) * a(p, q);
    return std::sqrt(s);
  };

  int sweep = 0;
  for (; sweep < max_sweeps && off_norm() > threshold * scale; ++sweep) {
    for (Index p = 0; p < d - 1; ++p) {
      for (Index q = p + 1; q < d; ++q) {
        const Scalar apq = a(p, q);
        if (apq == Scalar(0)) continue;
        const Scalar theta = (a(q, q) - a(p, p)) / (2 * apq);
        const Scalar t = (theta >= 0 ? 1 : -1) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const Scalar c = 1 / std::sqrt(t * t + 1);
        const Scalar s = t * c;
        // A <- J^T A J with the rotation acting on rows/columns p and q.
        for (Index k = 0; k < d; ++k) {
          const Scalar akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Index k = 0; k < d; ++k) {
          const Scalar apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0;
        for (Index k = 0; k < d; ++k) {
          const Scalar vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  return {a.diagonal(), std::move(v), sweep};
}

namespace detail {

template <typename Derived>
void require_symmetric(const Eigen::MatrixBase<Derived>& M, double tol) {
  require(M.rows() == M.cols(), "matrix must be square");
  const double scale = std::max<double>(1.0, static_cast<double>(M.cwiseAbs().maxCoeff()));
  require(static_cast<double>((M - M.transpose()).cwiseAbs().maxCoeff()) <= tol * scale,
          "matrix is not symmetric");
}

// V f(L) V^T
template <typename Scalar, typename F>
MatrixX<Scalar> spectral_apply(const SymmetricEigen<Scalar>& eig, F&& f) {
  const VectorX<Scalar> fl = eig.values.unaryExpr(f);
  MatrixX<Scalar> out = eig.vectors * fl.asDiagonal() * eig.vectors.transpose();
  return (out + out.transpose()) / 2;
}

}  // namespace detail

/// Principal square root of a symmetric PSD matrix; eigenvalues below zero
/// are clamped to zero.
template <typename Derived>
MatrixX<typename Derived::Scalar> sym_sqrt(const Eigen::MatrixBase<Derived>& M) {
  using Scalar = typename Derived::Scalar;
  detail::require_symmetric(M, 1e-8);
  MatrixX<Scalar> sym = (M + M.transpose()) / 2;
  const auto eig = jacobi_eigen(sym);
  return detail::spectral_apply(eig, [](Scalar l) { return std::sqrt(std::max<Scalar>(l, 0)); });
}

/// Squared W2 between diagonal Gaussians:
/// |mu_p - mu_q|^2 + sum_l (sqrt(var_p_l) - sqrt(var_q_l))^2.
template <typename Scalar>
Scalar w2_diag_squared(const DiagGaussianT<Scalar>& p, const DiagGaussianT<Scalar>& q) {
  require(p.dim() == q.dim() && p.var.size() == p.dim() && q.var.size() == q.dim(),
          "w2_diag: dimension mismatch");
  return (p.mean - q.mean).squaredNorm() +
         (p.var.array().sqrt() - q.var.array().sqrt()).square().sum();
}

template <typename Scalar>
Scalar w2_diag(const DiagGaussianT<Scalar>& p, const DiagGaussianT<Scalar>& q) {
  return std::sqrt(w2_diag_squared(p, q));
}

/// A = diag(sqrt(var_q / var_p)), b = mu_q - A mu_p.
template <typename Scalar>
AffineMapT<Scalar> monge_map_diag(const DiagGaussianT<Scalar>& p, const DiagGaussianT<Scalar>& q) {
  require(p.dim() == q.dim(), "monge_map_diag: dimension mismatch");
  require((p.var.array() > 0).all(), "monge_map_diag: source variances must be positive");
  const VectorX<Scalar> scale = (q.var.array() / p.var.array()).sqrt();
  return {scale.asDiagonal().toDenseMatrix(), q.mean - scale.cwiseProduct(p.mean)};
}

template <typename Scalar>
Scalar default_ridge(const FullGaussianT<Scalar>& p, const FullGaussianT<Scalar>& q) {
  const Index d = p.dim();
  return Scalar(1e-6) * (p.cov.trace() + q.cov.trace()) / (2 * Scalar(d));
}

/// A = Sp^{-1/2} (Sp^{1/2} Sq Sp^{1/2})^{1/2} Sp^{-1/2}, b = mu_q - A mu_p,
/// with reg * I added to both covariances.
template <typename Scalar>
AffineMapT<Scalar> monge_map_full(const FullGaussianT<Scalar>& p, const FullGaussianT<Scalar>& q,
                                  Scalar reg) {
  const Index d = p.dim();
  require(q.dim() == d && p.cov.rows() == d && q.cov.rows() == d,
          "monge_map_full: dimension mismatch");
  require(reg >= 0, "monge_map_full: ridge must be nonnegative");
  detail::require_symmetric(p.cov, 1e-8);
  detail::require_symmetric(q.cov, 1e-8);
  const MatrixX<Scalar> id = MatrixX<Scalar>::Identity(d, d);
  const MatrixX<Scalar> sp = (p.cov + p.cov.transpose()) / 2 + reg * id;
  const MatrixX<Scalar> sq = (q.cov + q.cov.transpose()) / 2 + reg * id;

  const auto eig = jacobi_eigen(sp);
  const Scalar floor = std::numeric_limits<Scalar>::epsilon() * std::max<Scalar>(eig.values.cwiseAbs().maxCoeff(), 1);
  require(eig.values.minCoeff() > floor,
          "monge_map_full: source covariance is not positive definite after regularization");
  const MatrixX<Scalar> sp_half = detail::spectral_apply(eig, [](Scalar l) { return std::sqrt(l); });
  const MatrixX<Scalar> sp_inv_half =
      detail::spectral_apply(eig, [](Scalar l) { return 1 / std::sqrt(l); });

  const MatrixX<Scalar> cross = sp_half * sq * sp_half;
  MatrixX<Scalar> A = sp_inv_half * sym_sqrt((cross + cross.transpose()) / 2) * sp_inv_half;
  A = ((A + A.transpose()) / 2).eval();
  VectorX<Scalar> b = q.mean - A * p.mean;
  return {std::move(A), std::move(b)};
}

template <typename Scalar>
AffineMapT<Scalar> monge_map_full(const FullGaussianT<Scalar>& p, const FullGaussianT<Scalar>& q) {
  return monge_map_full(p, q, default_ridge(p, q));
}

/// |mu_p - mu_q|^2 + tr(Sp + Sq - 2 (Sp^{1/2} Sq Sp^{1/2})^{1/2}), square-rooted.
template <typename Scalar>
Scalar w2_full(const FullGaussianT<Scalar>& p, const FullGaussianT<Scalar>& q) {
  require(p.dim() == q.dim(), "w2_full: dimension mismatch");
  const MatrixX<Scalar> sp_half = sym_sqrt(p.cov);
  const MatrixX<Scalar> cross = sp_half * q.cov * sp_half;
  const Scalar tr = p.cov.trace() + q.cov.trace() - 2 * sym_sqrt((cross + cross.transpose()) / 2).trace();
  return std::sqrt(std::max<Scalar>((p.mean - q.mean).squaredNorm() + tr, 0));
}

template <typename Scalar>
FullGaussianT<Scalar> to_full(const DiagGaussianT<Scalar>& g) {
  return {g.mean, g.var.asDiagonal().toDenseMatrix()};
}

/// Empirical mean and unbiased covariance of the rows of X.
template <typename Derived>
FullGaussianT<typename Derived::Scalar> fit_full_gaussian(const Eigen::MatrixBase<Derived>& X) {
  using Scalar = typename Derived::Scalar;
  require(X.rows() >= 2, "fit_full_gaussian needs at least 2 samples");
  VectorX<Scalar> mu = X.colwise().mean().transpose();
  MatrixX<Scalar> centered = X.rowwise() - mu.transpose();
  MatrixX<Scalar> cov = centered.transpose() * centered / Scalar(X.rows() - 1);
  return {std::move(mu), (cov + cov.transpose()) / 2};
}

}  // namespace gmmot
