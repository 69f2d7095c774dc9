#include "gmmot/baselines.hpp"

namespace gmmot {

AdaptationResult otda_empirical(const Matrix& X_src, const LabelVector& y_src, const Matrix& X_tgt,
                                const EmpiricalOtConfig& config) {
  require(X_src.rows() >= 1 && X_tgt.rows() >= 1, "otda: empty domain");
  require(X_src.cols() == X_tgt.cols(), "otda: domains have different dimensions");
  require(X_src.rows() == y_src.size(), "otda: label count does not match source points");
  require(config.allow_large ||
              static_cast<double>(X_src.rows()) * static_cast<double>(X_tgt.rows()) <= kMaxEmpiricalPlanEntries,
          "otda: plan would exceed 4e6 entries; subsample the domains or allow large problems");

  const Histogram p = uniform_histogram(X_src.rows());
  const Histogram q = uniform_histogram(X_tgt.rows());
  const Matrix C = squared_euclidean_cost(X_src, X_tgt);

  TransportPlan plan;
  AdaptationResult out;
  if (config.solver == OtSolver::Exact) {
    plan = solve_exact(p, q, C);
    out.diagnostics.strategy = "otda-emd";
  } else {
    SinkhornOptions opts;
    opts.epsilon = config.epsilon.value_or(0.01 * C.mean());
    if (opts.epsilon <= 0.0) opts.epsilon = 1e-3;  // all costs zero
    opts.max_iter = config.sinkhorn_max_iter;
    opts.tol = config.sinkhorn_tol;
    plan = solve_sinkhorn(p, q, C, opts);
    out.diagnostics.strategy = "otda-sinkhorn";
  }
  out.diagnostics.mw2 = std::sqrt(std::max(plan.cost, 0.0));
  out.diagnostics.plan_support = plan.n_positive();
  out.diagnostics.class_counts = count_classes(y_src, y_src.size() ? y_src.maxCoeff() + 1 : 0);
  out.transported = LabeledPoints{barycentric_map(plan.gamma, X_tgt), y_src};
  return out;
}

AdaptationResult otda_linear(const Matrix& X_src, const LabelVector& y_src, const Matrix& X_tgt,
                             std::optional<double> reg) {
  require(X_src.rows() >= 2 && X_tgt.rows() >= 2, "otda_linear needs at least 2 samples per domain");
  require(X_src.cols() == X_tgt.cols(), "otda_linear: domains have different dimensions");
  require(X_src.rows() == y_src.size(), "otda_linear: label count does not match source points");
  const FullGaussian p = fit_full_gaussian(X_src);
  const FullGaussian q = fit_full_gaussian(X_tgt);
  const AffineMap T = monge_map_full(p, q, reg.value_or(default_ridge(p, q)));

  AdaptationResult out;
  out.diagnostics.strategy = "otda-linear";
  out.diagnostics.mw2 = w2_full(p, q);
  out.diagnostics.class_counts = count_classes(y_src, y_src.size() ? y_src.maxCoeff() + 1 : 0);
  out.transported = LabeledPoints{T.apply(X_src), y_src};
  return out;
}

}  // namespace gmmot
