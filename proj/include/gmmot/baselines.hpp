#pragma once

// Empirical OT adaptation (exact or entropic plan followed by barycentric
// projection of the source samples) and the Gaussian linear Monge map.

#include "gmmot/gmm_otda.hpp"
#include "gmmot/ot.hpp"

#include <optional>

namespace gmmot {

enum class OtSolver { Exact, Sinkhorn };

struct EmpiricalOtConfig {
  OtSolver solver = OtSolver::Exact;
  std::optional<double> epsilon;  // Sinkhorn only; default 0.01 * mean(C)
  int sinkhorn_max_iter = 5000;
  double sinkhorn_tol = 1e-6;
  bool allow_large = false;  // lift the n*m <= 4e6 guard
};

inline constexpr double kMaxEmpiricalPlanEntries = 4e6;

AdaptationResult otda_empirical(const Matrix& X_src, const LabelVector& y_src, const Matrix& X_tgt,
                                const EmpiricalOtConfig& config = {});

/// Fits a full Gaussian to each domain and pushes the source through the
/// closed-form map. reg defaults to 1e-6 * mean covariance trace / d.
AdaptationResult otda_linear(const Matrix& X_src, const LabelVector& y_src, const Matrix& X_tgt,
                             std::optional<double> reg = std::nullopt);

}  // namespace gmmot
