#include "gmmot/ot.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <vector>

namespace gmmot {

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Scalings are folded back into the potentials once they leave this range.
constexpr double kAbsorbBound = 1e30;

struct SinkhornState {
  Vector f, g;  // dual potentials
};

// Kernel relative to the current potentials: exp((f_i + g_j - C_ij) / eps).
Matrix stabilized_kernel(const RowMajorMatrix& C, const SinkhornState& s, double eps) {
  Matrix K = (-C).cast<double>();
  K.colwise() += s.f;
  K.rowwise() += s.g.transpose();
  return (K.array() / eps).exp().matrix();
}

double row_violation(const Matrix& K, const Vector& u, const Vector& v, const Vector& p) {
  return (u.cwiseProduct(K * v) - p).cwiseAbs().sum();
}

// Exact log-domain updates, used when a kernel row or column underflows.
void log_update_f(const RowMajorMatrix& C, const Vector& p, double eps, SinkhornState& s) {
  Matrix Z = -C;
  Z.rowwise() += s.g.transpose();
  const Vector mx = Z.rowwise().maxCoeff();
  const Vector lse = mx + ((Z.colwise() - mx).array() / eps).exp().rowwise().sum().log().matrix() * eps;
  s.f = eps * p.array().log().matrix() - lse;
}

void log_update_g(const RowMajorMatrix& C, const Vector& q, double eps, SinkhornState& s) {
  Matrix Z = -C;
  Z.colwise() += s.f;
  const Vector mx = Z.colwise().maxCoeff().transpose();
  const Vector lse =
      mx + ((Z.rowwise() - mx.transpose()).array() / eps).exp().colwise().sum().log().transpose().matrix() * eps;
  s.g = eps * q.array().log().matrix() - lse;
}

bool in_range(const Vector& x) {
  return x.allFinite() && x.maxCoeff() < kAbsorbBound && x.minCoeff() > 1.0 / kAbsorbBound;
}

// Scaling iterations on the stabilized kernel at a fixed epsilon until the
// row violation (columns are exact after each v update) drops below tol.
// Returns the violation of the plan defined by (f, g) on exit.
double sinkhorn_stage(const RowMajorMatrix& C, const Vector& p, const Vector& q, double eps, double tol,
                      int budget, SinkhornState& s, int& iterations) {
  const Index n = C.rows(), m = C.cols();
  Matrix K = stabilized_kernel(C, s, eps);
  Vector u = Vector::Ones(n), v = Vector::Ones(m);
  auto absorb = [&](const Vector& uu, const Vector& vv) {
    s.f += eps * uu.array().log().matrix();
    s.g += eps * vv.array().log().matrix();
    K = stabilized_kernel(C, s, eps);
    u.setOnes();
    v.setOnes();
  };

  for (int it = 0; it < budget; ++it) {
    Vector u_next = p.cwiseQuotient(K * v);
    if (!in_range(u_next)) {
      absorb(u, v);
      u_next = p.cwiseQuotient(K * v);
      if (!in_range(u_next)) {
        log_update_f(C, p, eps, s);
        K = stabilized_kernel(C, s, eps);
        u_next.setOnes();
      }
    }
    Vector v_next = q.cwiseQuotient(K.transpose() * u_next);
    if (!in_range(v_next)) {
      absorb(u_next, v);
      u_next = u;
      v_next = q.cwiseQuotient(K.transpose() * u);
      if (!in_range(v_next)) {
        log_update_g(C, q, eps, s);
        K = stabilized_kernel(C, s, eps);
        v_next.setOnes();
      }
    }
    u = std::move(u_next);
    v = std::move(v_next);
    ++iterations;
    if ((it % 10 == 9 || it + 1 == budget) && row_violation(K, u, v, p) < tol) break;
  }
  absorb(u, v);
  return row_violation(K, u, v, p);
}

}  // namespace

TransportPlan solve_sinkhorn(const Histogram& p, const Histogram& q, const Matrix& C,
                             const SinkhornOptions& opts) {
  validate_histogram(p, "source histogram");
  validate_histogram(q, "target histogram");
  require(opts.epsilon > 0.0, "solve_sinkhorn: epsilon must be positive");
  require(opts.max_iter >= 1, "solve_sinkhorn: max_iter must be >= 1");
  require(opts.tol > 0.0, "solve_sinkhorn: tol must be positive");
  require(C.rows() == p.size() && C.cols() == q.size(),
          "solve_sinkhorn: cost matrix shape does not match histograms");
  require(C.allFinite() && (C.array() >= 0.0).all(),
          "solve_sinkhorn: cost matrix must be finite and nonnegative");
  require(std::abs(p.sum() - q.sum()) <= 1e-9, "solve_sinkhorn: marginal masses differ by more than 1e-9");

  // Zero-mass atoms carry -inf log weights; solve on the support only.
  std::vector<Index> rows, cols;
  for (Index i = 0; i < p.size(); ++i)
    if (p(i) > 0.0) rows.push_back(i);
  for (Index j = 0; j < q.size(); ++j)
    if (q(j) > 0.0) cols.push_back(j);
  const Index n = static_cast<Index>(rows.size()), m = static_cast<Index>(cols.size());
  RowMajorMatrix Cs(n, m);
  Vector ps(n), qs(m);
  for (Index i = 0; i < n; ++i) ps(i) = p(rows[i]);
  for (Index j = 0; j < m; ++j) qs(j) = q(cols[j]);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j) Cs(i, j) = C(rows[i], cols[j]);

  SinkhornState state{Vector::Zero(n), Vector::Zero(m)};
  int iterations = 0;
  if (opts.epsilon_scaling) {
    const double top = std::max(Cs.size() ? Cs.maxCoeff() : 0.0, opts.epsilon);
    for (double eps = top; eps > opts.epsilon * 2.0 && iterations < opts.max_iter; eps *= 0.5) {
      sinkhorn_stage(Cs, ps, qs, eps, std::max(opts.tol, 1e-4),
                     std::min(1000, opts.max_iter - iterations), state, iterations);
    }
  }
  const double violation = sinkhorn_stage(Cs, ps, qs, opts.epsilon, opts.tol,
                                          std::max(1, opts.max_iter - iterations), state, iterations);

  TransportPlan plan;
  plan.gamma = Matrix::Zero(p.size(), q.size());
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j)
      plan.gamma(rows[i], cols[j]) = std::exp((state.f(i) + state.g(j) - Cs(i, j)) / opts.epsilon);
  plan.cost = (plan.gamma.array() * C.array()).sum();
  plan.marginal_violation = marginal_violation(plan.gamma, p, q);
  plan.converged = violation < opts.tol;
  plan.iterations = iterations;
  return plan;
}

void write_plan(const std::filesystem::path& csv_path, const TransportPlan& plan) {
  std::ofstream out(csv_path);
  if (!out) throw IoError("cannot write " + csv_path.string());
  out.precision(17);
  for (Index i = 0; i < plan.gamma.rows(); ++i) {
    for (Index j = 0; j < plan.gamma.cols(); ++j) out << (j ? "," : "") << plan.gamma(i, j);
    out << '\n';
  }
  nlohmann::ordered_json diag;
  diag["cost"] = plan.cost;
  diag["n_positive_entries"] = plan.n_positive();
  diag["converged"] = plan.converged;
  diag["marginal_violation"] = plan.marginal_violation;
  auto side = csv_path;
  side.replace_extension(".json");
  std::ofstream js(side);
  if (!js) throw IoError("cannot write " + side.string());
  js << diag.dump(2) << '\n';
}

}  // namespace gmmot
