#include "gmmot/ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace gmmot {

namespace {

// Primal network simplex for the uncapacitated transportation problem.
//
// Nodes 0..n-1 are supplies, n..n+m-1 demands and n+m an artificial root.
// Arc a = j*n + i runs supply i -> demand j, so real arcs follow the
// column-major cost matrix. Arc n*m + v is the artificial arc between node
// v and the root (v -> root for supplies, root -> v for demands) with a
// prohibitive cost. The spanning tree is kept strongly feasible by the
// last-blocking-arc rule, which rules out cycling. Only tree arcs carry
// flow, so flow is stored per node for the arc to its parent.
//
// Pricing is block search in arc order; within a block the most negative
// reduced cost enters, earliest arc first on ties.
class NetworkSimplex {
 public:
  // cost must outlive the solver.
  NetworkSimplex(const Vector& supply, const Vector& demand, const Matrix& cost)
      : n_(supply.size()),
        m_(demand.size()),
        nodes_(n_ + m_ + 1),
        root_(n_ + m_),
        real_arcs_(n_ * m_),
        arcs_(real_arcs_ + n_ + m_),
        cost_(cost.data()),
        in_tree_(static_cast<std::size_t>(arcs_), 0),
        parent_(static_cast<std::size_t>(nodes_), -1),
        pred_(static_cast<std::size_t>(nodes_), -1),
        dir_(static_cast<std::size_t>(nodes_), 0),
        depth_(static_cast<std::size_t>(nodes_), 0),
        first_child_(static_cast<std::size_t>(nodes_), -1),
        next_sib_(static_cast<std::size_t>(nodes_), -1),
        prev_sib_(static_cast<std::size_t>(nodes_), -1),
        flow_(static_cast<std::size_t>(nodes_), 0.0),
        pi_(static_cast<std::size_t>(nodes_), 0.0) {
    art_cost_ = (cost.cwiseAbs().maxCoeff() + 1.0) * static_cast<double>(nodes_);
    for (Index v = 0; v < root_; ++v) {
      const Index a = real_arcs_ + v;
      in_tree_[a] = 1;
      link(v, root_);
      pred_[v] = a;
      depth_[v] = 1;
      if (v < n_) {
        dir_[v] = kUp;
        flow_[v] = supply(v);
        pi_[v] = -art_cost_;
      } else {
        dir_[v] = kDown;
        flow_[v] = demand(v - n_);
        pi_[v] = art_cost_;
      }
    }
    pi_bound_ = std::max(1.0, art_cost_);
    block_ = std::max<Index>(10, static_cast<Index>(std::sqrt(static_cast<double>(arcs_))));
  }

  long long run() {
    // Each pivot either strictly improves the objective or is degenerate in
    // a strongly feasible basis, so termination is guaranteed; the cap only
    // guards against floating-point pathologies.
    const long long cap = 1000LL + 50LL * static_cast<long long>(arcs_);
    for (long long it = 0; it < cap; ++it) {
      const Index in = find_entering();
      if (in < 0) return it;
      pivot(in);
    }
    throw std::runtime_error("network simplex exceeded its pivot budget");
  }

  double artificial_flow() const {
    double s = 0.0;
    for (Index v = 0; v < root_; ++v)
      if (pred_[v] >= real_arcs_) s += flow_[v];
    return s;
  }

  // Calls f(i, j, flow) for every real tree arc.
  template <typename F>
  void for_each_flow(F&& f) const {
    for (Index v = 0; v < root_; ++v)
      if (pred_[v] < real_arcs_) f(pred_[v] % n_, pred_[v] / n_, flow_[v]);
  }

 private:
  static constexpr signed char kUp = 1;     // pred arc is child -> parent
  static constexpr signed char kDown = -1;  // pred arc is parent -> child

  Index source(Index a) const { return a < real_arcs_ ? a % n_ : (a - real_arcs_ < n_ ? a - real_arcs_ : root_); }
  Index target(Index a) const {
    if (a < real_arcs_) return n_ + a / n_;
    const Index v = a - real_arcs_;
    return v < n_ ? root_ : v;
  }
  double arc_cost(Index a) const { return a < real_arcs_ ? cost_[a] : art_cost_; }

  double reduced_cost(Index a) const { return arc_cost(a) + pi_[source(a)] - pi_[target(a)]; }

  // Reduced costs must fall below this to enter. Tree arcs sit at zero up
  // to rounding in the potentials, far above it.
  double eligibility_threshold() const { return -kEps * pi_bound_; }

  // Lowest reduced cost over arcs [a, a + len), a range inside either the
  // real or the artificial block; updates best and best_arc.
  void scan(Index a, Index len, double& best, Index& best_arc) const {
    if (a >= real_arcs_) {
      for (Index e = a; e < a + len; ++e) {
        if (in_tree_[e]) continue;
        const double rc = reduced_cost(e);
        if (rc < best) {
          best = rc;
          best_arc = e;
        }
      }
      return;
    }
    double low = best;
    Index low_arc = best_arc;
    Index i = a % n_, j = a / n_;
    while (len > 0) {
      const Index seg = std::min(len, n_ - i);
      const Index base = j * n_ + i;
      const Eigen::Map<const Vector> c(cost_ + base, seg);
      const Eigen::Map<const Vector> ps(pi_.data() + i, seg);
      const double pt = pi_[n_ + j];
      const double raw = (c + ps).minCoeff();
      if (raw - pt < low) {
        Index k = 0;
        while (k < seg && c[k] + ps[k] != raw) ++k;
        if (k < seg && !in_tree_[base + k]) {
          low = raw - pt;
          low_arc = base + k;
        } else {
          for (k = 0; k < seg; ++k) {
            const double rc = c[k] + ps[k] - pt;
            if (rc < low && !in_tree_[base + k]) {
              low = rc;
              low_arc = base + k;
            }
          }
        }
      }
      len -= seg;
      i = 0;
      ++j;
    }
    best = low;
    best_arc = low_arc;
  }

  Index find_entering() {
    double best = eligibility_threshold();
    Index best_arc = -1;
    Index start = next_arc_;
    Index scanned = 0;
    while (scanned < arcs_) {
      // One block, split where it crosses into the artificial range or wraps.
      Index remaining = std::min(block_, arcs_ - scanned);
      scanned += remaining;
      while (remaining > 0) {
        const Index limit = start < real_arcs_ ? real_arcs_ : arcs_;
        const Index len = std::min(remaining, limit - start);
        scan(start, len, best, best_arc);
        remaining -= len;
        start += len;
        if (start == arcs_) start = 0;
      }
      if (best_arc >= 0) {
        next_arc_ = start;
        return best_arc;
      }
    }
    return -1;
  }

  void link(Index child, Index parent) {
    parent_[child] = parent;
    prev_sib_[child] = -1;
    next_sib_[child] = first_child_[parent];
    if (first_child_[parent] >= 0) prev_sib_[first_child_[parent]] = child;
    first_child_[parent] = child;
  }

  void unlink(Index child) {
    const Index p = parent_[child];
    if (prev_sib_[child] >= 0)
      next_sib_[prev_sib_[child]] = next_sib_[child];
    else
      first_child_[p] = next_sib_[child];
    if (next_sib_[child] >= 0) prev_sib_[next_sib_[child]] = prev_sib_[child];
    parent_[child] = -1;
    next_sib_[child] = prev_sib_[child] = -1;
  }

  void pivot(Index in) {
    const Index s = source(in), t = target(in);

    Index u = s, v = t;
    while (u != v) {
      if (depth_[u] > depth_[v]) {
        u = parent_[u];
      } else if (depth_[v] > depth_[u]) {
        v = parent_[v];
      } else {
        u = parent_[u];
        v = parent_[v];
      }
    }
    const Index join = u;

    // Flow pushed along s -> t, back up to join, and down to s.
    double delta = std::numeric_limits<double>::infinity();
    Index u_out = -1;
    int side = 0;
    for (Index w = s; w != join; w = parent_[w]) {
      if (dir_[w] == kUp && flow_[w] < delta) {
        delta = flow_[w];
        u_out = w;
        side = 1;
      }
    }
    for (Index w = t; w != join; w = parent_[w]) {
      if (dir_[w] == kDown && flow_[w] <= delta) {
        delta = flow_[w];
        u_out = w;
        side = 2;
      }
    }
    if (u_out < 0) throw std::runtime_error("network simplex: unbounded pivot");

    if (delta > 0.0) {
      for (Index w = s; w != join; w = parent_[w]) flow_[w] -= dir_[w] * delta;
      for (Index w = t; w != join; w = parent_[w]) flow_[w] += dir_[w] * delta;
    }
    in_tree_[pred_[u_out]] = 0;
    in_tree_[in] = 1;

    // Re-hang the subtree cut at u_out from u_in, reversing the path between.
    // Each node on the path inherits the arc and flow of the node below it.
    const Index u_in = side == 1 ? s : t;
    const Index v_in = side == 1 ? t : s;
    Index carried_arc = in;
    double carried_flow = delta;
    Index new_parent = v_in;
    for (Index w = u_in;;) {
      const Index next = parent_[w];
      const Index old_arc = pred_[w];
      const double old_flow = flow_[w];
      unlink(w);
      link(w, new_parent);
      pred_[w] = carried_arc;
      flow_[w] = carried_flow;
      dir_[w] = source(carried_arc) == w ? kUp : kDown;
      if (w == u_out) break;
      carried_arc = old_arc;
      carried_flow = old_flow;
      new_parent = w;
      w = next;
    }

    // Potentials and depths below u_in.
    stack_.clear();
    stack_.push_back(u_in);
    while (!stack_.empty()) {
      const Index w = stack_.back();
      stack_.pop_back();
      const Index p = parent_[w];
      depth_[w] = depth_[p] + 1;
      pi_[w] = dir_[w] == kUp ? pi_[p] - arc_cost(pred_[w]) : pi_[p] + arc_cost(pred_[w]);
      pi_bound_ = std::max(pi_bound_, std::abs(pi_[w]));
      for (Index c = first_child_[w]; c >= 0; c = next_sib_[c]) stack_.push_back(c);
    }
  }

  static constexpr double kEps = 64.0 * std::numeric_limits<double>::epsilon();

  Index n_, m_, nodes_, root_, real_arcs_, arcs_;
  const double* cost_;
  double art_cost_ = 0.0;
  double pi_bound_ = 1.0;  // running max of |potential|, at least 1
  Index block_ = 10;
  Index next_arc_ = 0;
  std::vector<signed char> in_tree_;
  std::vector<Index> parent_, pred_;
  std::vector<signed char> dir_;
  std::vector<Index> depth_, first_child_, next_sib_, prev_sib_;
  std::vector<double> flow_;  // on the arc from each node to its parent
  std::vector<double> pi_;
  std::vector<Index> stack_;
};

std::vector<Index> positive_support(const Histogram& w) {
  std::vector<Index> idx;
  for (Index i = 0; i < w.size(); ++i)
    if (w(i) > 0.0) idx.push_back(i);
  return idx;
}

}  // namespace

Histogram uniform_histogram(Index n) {
  require(n >= 1, "uniform_histogram needs n >= 1");
  return Histogram::Constant(n, 1.0 / static_cast<double>(n));
}

void validate_histogram(const Histogram& w, const char* name) {
  require(w.size() >= 1, std::string(name) + " is empty");
  require(w.allFinite(), std::string(name) + " has non-finite entries");
  require((w.array() >= 0.0).all(), std::string(name) + " has negative entries");
  require(w.sum() > 0.0, std::string(name) + " has zero total mass");
}

double marginal_violation(const Matrix& gamma, const Histogram& p, const Histogram& q) {
  return (gamma.rowwise().sum() - p).lpNorm<1>() + (gamma.colwise().sum().transpose() - q).lpNorm<1>();
}

TransportPlan solve_exact(const Histogram& p, const Histogram& q, const Matrix& C) {
  validate_histogram(p, "source histogram");
  validate_histogram(q, "target histogram");
  require(C.rows() == p.size() && C.cols() == q.size(),
          "solve_exact: cost matrix shape does not match histograms");
  require(C.allFinite() && (C.array() >= 0.0).all(),
          "solve_exact: cost matrix must be finite and nonnegative");
  const double ps = p.sum(), qs = q.sum();
  require(std::abs(ps - qs) <= 1e-9, "solve_exact: marginal masses differ by more than 1e-9");

  const auto rows = positive_support(p);
  const auto cols = positive_support(q);
  const Index n = static_cast<Index>(rows.size()), m = static_cast<Index>(cols.size());
  Vector supply(n), demand(m);
  for (Index i = 0; i < n; ++i) supply(i) = p(rows[i]);
  for (Index j = 0; j < m; ++j) demand(j) = q(cols[j]) * (ps / qs);
  const bool full = n == p.size() && m == q.size();
  Matrix reduced;
  if (!full) {
    reduced.resize(n, m);
    for (Index j = 0; j < m; ++j)
      for (Index i = 0; i < n; ++i) reduced(i, j) = C(rows[i], cols[j]);
  }

  NetworkSimplex ns(supply, demand, full ? C : reduced);
  const long long pivots = ns.run();
  if (ns.artificial_flow() > 1e-9 * std::max(1.0, ps))
    throw std::runtime_error("solve_exact: artificial flow remains at optimum");

  TransportPlan plan;
  plan.gamma = Matrix::Zero(p.size(), q.size());
  const double snap = 1e-14 * ps;
  ns.for_each_flow([&](Index i, Index j, double f) {
    if (f > snap) plan.gamma(rows[i], cols[j]) = f;
  });
  plan.cost = (plan.gamma.array() * C.array()).sum();
  plan.marginal_violation = marginal_violation(plan.gamma, p, q);
  plan.converged = true;
  plan.iterations = static_cast<int>(pivots);
  return plan;
}

double w2_empirical(const Matrix& X, const Matrix& Y) {
  require(X.rows() >= 1 && Y.rows() >= 1, "w2_empirical: empty point cloud");
  const TransportPlan plan =
      solve_exact(uniform_histogram(X.rows()), uniform_histogram(Y.rows()), squared_euclidean_cost(X, Y));
  return std::sqrt(std::max(plan.cost, 0.0));
}

}  // namespace gmmot
