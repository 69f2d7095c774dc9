#include "gmmot/gmm.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace gmmot {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

Vector row_logsumexp(const Matrix& L) {
  Vector out(L.rows());
  for (Index i = 0; i < L.rows(); ++i) {
    const double mx = L.row(i).maxCoeff();
    if (!std::isfinite(mx)) {
      out(i) = mx;
      continue;
    }
    out(i) = mx + std::log((L.row(i).array() - mx).exp().sum());
  }
  return out;
}

Matrix normalize_rows(Matrix M) {
  const Vector s = M.rowwise().sum();
  return s.cwiseInverse().asDiagonal() * M;
}

// Diagonal M-step: the constrained maximizer with var >= floor.
void m_step(const Matrix& X, const Matrix& resp, const Vector& floor, Gmm& g) {
  const Index n = X.rows(), K = resp.cols();
  const Vector nk = resp.colwise().sum().transpose();
  for (Index k = 0; k < K; ++k) {
    g.weights(k) = nk(k) / static_cast<double>(n);
    if (nk(k) <= 0.0) continue;
    const RowVector mu = (resp.col(k).transpose() * X) / nk(k);
    const RowVector var =
        (resp.col(k).transpose() * (X.rowwise() - mu).array().square().matrix()) / nk(k);
    g.means.row(k) = mu;
    g.vars.row(k) = var.cwiseMax(floor.transpose());
  }
  g.weights /= g.weights.sum();
}

}  // namespace

void Gmm::validate() const {
  const Index K = weights.size();
  require(K >= 1, "mixture needs at least one component");
  require(means.rows() == K && vars.rows() == K, "mixture parameter shapes disagree");
  require(means.cols() >= 1 && vars.cols() == means.cols(), "mixture components must share d");
  require(weights.allFinite() && (weights.array() >= 0.0).all(), "mixture weights must be nonnegative");
  require(std::abs(weights.sum() - 1.0) <= 1e-12 * std::max<double>(1.0, static_cast<double>(K)),
          "mixture weights must sum to 1");
  require(means.allFinite() && vars.allFinite(), "mixture parameters must be finite");
  require((vars.array() > 0.0).all(), "mixture variances must be positive");
  if (label_dist) {
    require(label_dist->rows() == K && label_dist->cols() >= 1, "label_dist shape mismatch");
    require((label_dist->array() >= 0.0).all() && (label_dist->array() <= 1.0).all(),
            "label_dist entries must lie in [0, 1]");
    require(((label_dist->rowwise().sum().array() - 1.0).abs() <= 1e-9).all(),
            "label_dist rows must sum to 1");
  }
}

Vector variance_floor(const Matrix& X) {
  const RowVector mu = X.colwise().mean();
  const Vector var = (X.rowwise() - mu).array().square().colwise().mean().transpose();
  return (1e-6 * var).cwiseMax(1e-12);
}

Gmm kmeans_pp_init(const Dataset& data, Index K, std::uint64_t seed) {
  data.validate();
  const Matrix& X = data.features;
  const Index n = X.rows(), d = X.cols();
  require(K >= 1, "number of components must be >= 1");
  require(K <= n, "number of components exceeds number of samples");

  std::mt19937_64 rng(seed);
  std::vector<Index> chosen;
  chosen.push_back(std::uniform_int_distribution<Index>(0, n - 1)(rng));
  Vector d2 = (X.rowwise() - X.row(chosen[0])).rowwise().squaredNorm();
  std::vector<char> taken(static_cast<std::size_t>(n), 0);
  taken[chosen[0]] = 1;
  while (static_cast<Index>(chosen.size()) < K) {
    Index next = -1;
    const double total = d2.sum();
    if (total > 0.0) {
      const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      double cum = 0.0;
      for (Index i = 0; i < n && next < 0; ++i) {
        cum += d2(i);
        if (d2(i) > 0.0 && u < cum) next = i;
      }
      if (next < 0)  // u landed on the rounding tail
        for (Index i = n - 1; i >= 0 && next < 0; --i)
          if (d2(i) > 0.0) next = i;
    } else {
      for (Index i = 0; i < n && next < 0; ++i)
        if (!taken[i]) next = i;
    }
    chosen.push_back(next);
    taken[next] = 1;
    d2 = d2.cwiseMin((X.rowwise() - X.row(next)).rowwise().squaredNorm());
  }

  Matrix centers(K, d);
  for (Index k = 0; k < K; ++k) centers.row(k) = X.row(chosen[k]);

  Eigen::VectorXi assign = Eigen::VectorXi::Constant(n, -1);
  for (int iter = 0; iter < 25; ++iter) {
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      Index best = 0;
      (centers.rowwise() - X.row(i)).rowwise().squaredNorm().minCoeff(&best);
      if (assign(i) != best) {
        assign(i) = static_cast<int>(best);
        changed = true;
      }
    }
    if (!changed) break;
    Matrix sums = Matrix::Zero(K, d);
    Vector counts = Vector::Zero(K);
    for (Index i = 0; i < n; ++i) {
      sums.row(assign(i)) += X.row(i);
      counts(assign(i)) += 1.0;
    }
    for (Index k = 0; k < K; ++k)
      if (counts(k) > 0) centers.row(k) = sums.row(k) / counts(k);
  }

  const Vector floor = variance_floor(X);
  Gmm g;
  g.weights = Vector::Zero(K);
  g.means = centers;
  g.vars = Matrix(K, d);
  Matrix sq = Matrix::Zero(K, d);
  for (Index i = 0; i < n; ++i) {
    g.weights(assign(i)) += 1.0;
    sq.row(assign(i)) += (X.row(i) - centers.row(assign(i))).array().square().matrix();
  }
  for (Index k = 0; k < K; ++k) {
    const RowVector var = g.weights(k) > 0 ? RowVector(sq.row(k) / g.weights(k)) : RowVector(floor.transpose());
    g.vars.row(k) = var.cwiseMax(floor.transpose());
  }
  g.weights /= static_cast<double>(n);
  return g;
}

Matrix log_joint(const Gmm& gmm, const Matrix& X) {
  require(X.cols() == gmm.dim(), "mixture/data dimension mismatch");
  const Index K = gmm.n_components();
  Matrix L(X.rows(), K);
  for (Index k = 0; k < K; ++k) {
    const RowVector inv = gmm.vars.row(k).cwiseInverse();
    const double log_norm = -0.5 * (gmm.vars.row(k).array().log().sum() + kLog2Pi * gmm.dim());
    const double log_w = std::log(gmm.weights(k));
    L.col(k) = (-0.5 * ((X.rowwise() - gmm.means.row(k)).array().square().rowwise() * inv.array())
                           .rowwise()
                           .sum())
                   .matrix()
                   .array() +
               (log_norm + log_w);
  }
  return L;
}

Matrix responsibilities(const Gmm& gmm, const Matrix& X) {
  const Matrix L = log_joint(gmm, X);
  const Vector lse = row_logsumexp(L);
  Matrix R = (L.colwise() - lse).array().exp();
  return normalize_rows(std::move(R));
}

double log_likelihood(const Gmm& gmm, const Matrix& X) {
  require(X.rows() >= 1, "log_likelihood of an empty sample");
  return row_logsumexp(log_joint(gmm, X)).mean();
}

double bic(const Gmm& gmm, const Matrix& X) {
  const double n = static_cast<double>(X.rows());
  const double K = static_cast<double>(gmm.n_components());
  const double params = K - 1.0 + 2.0 * K * static_cast<double>(gmm.dim());
  return -2.0 * n * log_likelihood(gmm, X) + params * std::log(n);
}

EmResult em_fit(const Dataset& data, Index K, const EmConfig& config) {
  data.validate();
  require(K >= 1 && K <= data.size(), "number of components must be in [1, n]");
  require(config.max_iter >= 1, "max_iter must be >= 1");
  require(config.tol > 0.0, "tol must be positive");
  require(config.n_restarts >= 1, "n_restarts must be >= 1");

  const Matrix& X = data.features;
  const Vector floor = variance_floor(X);
  std::optional<EmResult> best;
  for (int r = 0; r < config.n_restarts; ++r) {
    EmResult run{kmeans_pp_init(data, K, config.seed + static_cast<std::uint64_t>(r)), {}, r};
    Matrix L = log_joint(run.gmm, X);
    Vector lse = row_logsumexp(L);
    run.trace.push_back(lse.mean());
    for (int it = 0; it < config.max_iter; ++it) {
      const Matrix resp = (L.colwise() - lse).array().exp();
      m_step(X, resp, floor, run.gmm);
      L = log_joint(run.gmm, X);
      lse = row_logsumexp(L);
      run.trace.push_back(lse.mean());
      if (std::abs(run.trace.back() - run.trace[run.trace.size() - 2]) < config.tol) break;
    }
    if (!best || run.trace.back() > best->trace.back()) best = std::move(run);
  }
  return std::move(*best);
}

ComponentLabeling label_components(const Gmm& gmm, const Dataset& data) {
  require(data.labeled(), "label_components needs labeled data");
  data.validate();
  const Matrix resp = responsibilities(gmm, data.features);
  const Matrix Y = one_hot(*data.labels, data.n_classes);
  const Vector global = class_frequencies(*data.labels, data.n_classes);
  const Vector mass = resp.colwise().sum().transpose();

  ComponentLabeling out{gmm, {}};
  Matrix dist = resp.transpose() * Y;
  for (Index k = 0; k < gmm.n_components(); ++k) {
    if (mass(k) < 1e-12) {
      dist.row(k) = global.transpose();
      out.fallback_components.push_back(k);
    } else {
      dist.row(k) /= dist.row(k).sum();
    }
  }
  out.gmm.label_dist = std::move(dist);
  return out;
}

Index draw_categorical(const Eigen::Ref<const Vector>& probs, std::mt19937_64& rng) {
  const double total = probs.sum();
  const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
  double cum = 0.0;
  Index last = 0;
  for (Index k = 0; k < probs.size(); ++k) {
    if (probs(k) <= 0.0) continue;
    cum += probs(k);
    last = k;
    if (u < cum) return k;
  }
  return last;
}

GmmSample sample(const Gmm& gmm, Index n, std::mt19937_64& rng) {
  require(n >= 1, "sample count must be >= 1");
  std::normal_distribution<double> normal(0.0, 1.0);
  GmmSample out{Matrix(n, gmm.dim()), Eigen::VectorXi(n)};
  const Matrix sd = gmm.vars.cwiseSqrt();
  for (Index i = 0; i < n; ++i) {
    const Index k = draw_categorical(gmm.weights, rng);
    out.component_ids(i) = static_cast<int>(k);
    for (Index j = 0; j < gmm.dim(); ++j) out.X(i, j) = gmm.means(k, j) + sd(k, j) * normal(rng);
  }
  return out;
}

GmmSample sample(const Gmm& gmm, Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample(gmm, n, rng);
}

Eigen::VectorXi argmax_rows(const Matrix& M) {
  Eigen::VectorXi out(M.rows());
  for (Index i = 0; i < M.rows(); ++i) {
    Index best = 0;
    for (Index j = 1; j < M.cols(); ++j)
      if (M(i, j) > M(i, best)) best = j;
    out(i) = static_cast<int>(best);
  }
  return out;
}

namespace {

nlohmann::ordered_json matrix_to_json(const Matrix& M) {
  auto arr = nlohmann::ordered_json::array();
  for (Index i = 0; i < M.rows(); ++i) {
    auto row = nlohmann::ordered_json::array();
    for (Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    arr.push_back(std::move(row));
  }
  return arr;
}

Matrix matrix_from_json(const nlohmann::ordered_json& j, const char* name) {
  require(j.is_array() && !j.empty(), std::string("gmm json: '") + name + "' must be a non-empty array");
  const Index rows = static_cast<Index>(j.size());
  const Index cols = static_cast<Index>(j[0].size());
  Matrix M(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    require(j[r].is_array() && static_cast<Index>(j[r].size()) == cols,
            std::string("gmm json: ragged '") + name + "'");
    for (Index c = 0; c < cols; ++c) M(r, c) = j[r][c].get<double>();
  }
  return M;
}

}  // namespace

nlohmann::ordered_json to_json(const Gmm& gmm) {
  nlohmann::ordered_json j;
  j["weights"] = std::vector<double>(gmm.weights.data(), gmm.weights.data() + gmm.weights.size());
  j["means"] = matrix_to_json(gmm.means);
  j["vars"] = matrix_to_json(gmm.vars);
  if (gmm.label_dist) j["label_dist"] = matrix_to_json(*gmm.label_dist);
  return j;
}

Gmm gmm_from_json(const nlohmann::ordered_json& j) {
  try {
    Gmm g;
    const auto w = j.at("weights").get<std::vector<double>>();
    g.weights = Eigen::Map<const Vector>(w.data(), static_cast<Index>(w.size()));
    g.means = matrix_from_json(j.at("means"), "means");
    g.vars = matrix_from_json(j.at("vars"), "vars");
    if (j.contains("label_dist")) g.label_dist = matrix_from_json(j.at("label_dist"), "label_dist");
    g.validate();
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("gmm json: ") + e.what());
  }
}

void save_gmm(const std::filesystem::path& path, const Gmm& gmm) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json(gmm).dump(2) << '\n';
}

Gmm load_gmm(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return gmm_from_json(j);
}

}  // namespace gmmot
