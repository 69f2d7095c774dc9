#pragma once

#include "gmmot/data.hpp"
#include "gmmot/gaussian.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace gmmot {

/// Diagonal-covariance Gaussian mixture. Row k of means/vars describes
/// component k; label_dist, when present, is the K x n_classes matrix
/// P(Y | K = k).
struct Gmm {
  Vector weights;
  Matrix means;
  Matrix vars;
  std::optional<Matrix> label_dist;

  Index n_components() const { return weights.size(); }
  Index dim() const { return means.cols(); }
  DiagGaussian component(Index k) const {
    return {means.row(k).transpose(), vars.row(k).transpose()};
  }

  void validate() const;
};

/// Per-dimension floor on component variances: 1e-6 times the data
/// variance, never below 1e-12.
Vector variance_floor(const Matrix& X);

/// k-means++ seeding followed by up to 25 Lloyd iterations.
Gmm kmeans_pp_init(const Dataset& data, Index K, std::uint64_t seed);

struct EmConfig {
  int max_iter = 300;
  double tol = 1e-5;  // on the mean log-likelihood
  std::uint64_t seed = 0;
  int n_restarts = 3;
};

struct EmResult {
  Gmm gmm;
  std::vector<double> trace;  // mean log-likelihood, trace[0] at initialization
  int restart = 0;            // index of the winning restart
};

EmResult em_fit(const Dataset& data, Index K, const EmConfig& config = {});

/// log(pi_k N(x_i | mu_k, diag var_k)), n x K.
Matrix log_joint(const Gmm& gmm, const Matrix& X);

/// Posterior component probabilities, computed with log-sum-exp.
Matrix responsibilities(const Gmm& gmm, const Matrix& X);

/// Mean log density of the rows of X.
double log_likelihood(const Gmm& gmm, const Matrix& X);

/// -2 n loglik + (K - 1 + 2 K d) log n.
double bic(const Gmm& gmm, const Matrix& X);

struct ComponentLabeling {
  Gmm gmm;
  // Components that got the global label frequency because they carried
  // (almost) no mass.
  std::vector<Index> fallback_components;
};

/// P(Y | K = k) proportional to sum_i resp(i, k) onehot(y_i).
ComponentLabeling label_components(const Gmm& gmm, const Dataset& data);

struct GmmSample {
  Matrix X;
  Eigen::VectorXi component_ids;
};

GmmSample sample(const Gmm& gmm, Index n, std::uint64_t seed);
GmmSample sample(const Gmm& gmm, Index n, std::mt19937_64& rng);

/// Index drawn from a discrete distribution by inverse CDF.
Index draw_categorical(const Eigen::Ref<const Vector>& probs, std::mt19937_64& rng);

/// Lowest index among the maxima of each row.
Eigen::VectorXi argmax_rows(const Matrix& M);

nlohmann::ordered_json to_json(const Gmm& gmm);
Gmm gmm_from_json(const nlohmann::ordered_json& j);
void save_gmm(const std::filesystem::path& path, const Gmm& gmm);
Gmm load_gmm(const std::filesystem::path& path);

}  // namespace gmmot
