#pragma once

// Domain adaptation through optimal transport between Gaussian mixtures.
//
// The mixture-level problem couples component weights with ground cost
// W2(P_i, Q_j)^2 between diagonal Gaussians. Its solution labels target
// components and defines a pointwise transport map. Three strategies use
// it: MAP labeling of target points (adapt_map), labeled sampling from the
// target mixture (adapt_sample) and transport of labeled source points
// (adapt_transport).

#include "gmmot/gmm.hpp"
#include "gmmot/ot.hpp"

#include <nlohmann/json_fwd.hpp>

#include <optional>
#include <string>
#include <vector>

namespace gmmot {

struct ComponentMap {
  Index source;
  Index target;
  double mass;  // gamma(source, target) > 0
  AffineMap map;
};

struct MixturePlan {
  Matrix gamma;  // K1 x K2, marginals are the mixture weights
  Matrix cost;   // W2(P_i, Q_j)^2
  double mw2_squared = 0.0;
  std::vector<ComponentMap> component_maps;  // support of gamma in row-major order

  Index support_size() const { return static_cast<Index>(component_maps.size()); }
};

struct LabeledPoints {
  Matrix X;
  LabelVector y;
};

struct AdaptationDiagnostics {
  std::string strategy;
  double mw2 = 0.0;
  Index plan_support = 0;
  std::vector<Index> class_counts;
  std::vector<Index> fallback_components;
};

/// Exactly one of predicted_labels / transported is set.
struct AdaptationResult {
  std::optional<LabelVector> predicted_labels;
  std::optional<LabeledPoints> transported;
  AdaptationDiagnostics diagnostics;
};

MixturePlan mixture_plan(const Gmm& src, const Gmm& tgt);

double mw2_distance(const Gmm& src, const Gmm& tgt);

/// Q(y | K = j) = sum_i gamma_ij P(y | K = i) / sum_i gamma_ij. A target
/// component with no incoming mass gets the source class marginal.
ComponentLabeling transfer_component_labels(const MixturePlan& plan, const Gmm& src, const Gmm& tgt);

/// argmax_y sum_k resp(x, k) Q(y | K = k), ties to the lowest class.
AdaptationResult adapt_map(const Gmm& tgt, const Matrix& X_target);

/// n labeled draws from the target mixture; each label is drawn from the
/// label distribution of the component that produced the point.
AdaptationResult adapt_sample(const Gmm& tgt, Index n, std::uint64_t seed);

/// x -> sum_ij resp(x, i) (gamma_ij / pi_i) T_ij(x) on labeled source points.
AdaptationResult adapt_transport(const MixturePlan& plan, const Gmm& src, const Matrix& X_source,
                                 const LabelVector& y_source);

std::vector<Index> count_classes(const LabelVector& y, int n_classes);

nlohmann::ordered_json to_json(const AdaptationDiagnostics& d);

/// Points and labels as CSV (or index,label for predictions) plus a
/// <stem>.json diagnostics sidecar.
void write_adaptation(const std::filesystem::path& csv_path, const AdaptationResult& result);

}  // namespace gmmot
