#include "gmmot/gmm_otda.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <random>

namespace gmmot {

MixturePlan mixture_plan(const Gmm& src, const Gmm& tgt) {
  require(src.dim() == tgt.dim(), "mixture_plan: mixtures live in different dimensions");
  const Index K1 = src.n_components(), K2 = tgt.n_components();
  MixturePlan out;
  out.cost.resize(K1, K2);
  for (Index i = 0; i < K1; ++i) {
    const DiagGaussian p = src.component(i);
    for (Index j = 0; j < K2; ++j) out.cost(i, j) = w2_diag_squared(p, tgt.component(j));
  }
  const TransportPlan plan = solve_exact(src.weights, tgt.weights, out.cost);
  out.gamma = plan.gamma;
  out.mw2_squared = plan.cost;
  for (Index i = 0; i < K1; ++i)
    for (Index j = 0; j < K2; ++j)
      if (out.gamma(i, j) > 0.0)
        out.component_maps.push_back({i, j, out.gamma(i, j), monge_map_diag(src.component(i), tgt.component(j))});
  return out;
}

double mw2_distance(const Gmm& src, const Gmm& tgt) {
  return std::sqrt(std::max(mixture_plan(src, tgt).mw2_squared, 0.0));
}

ComponentLabeling transfer_component_labels(const MixturePlan& plan, const Gmm& src, const Gmm& tgt) {
  require(src.label_dist.has_value(), "transfer_component_labels: source mixture is not labeled");
  require(plan.gamma.rows() == src.n_components() && plan.gamma.cols() == tgt.n_components(),
          "transfer_component_labels: plan shape does not match mixtures");
  const Matrix& P = *src.label_dist;
  const RowVector class_mass = src.weights.transpose() * P;
  const Vector incoming = plan.gamma.colwise().sum().transpose();

  ComponentLabeling out{tgt, {}};
  Matrix Q = plan.gamma.transpose() * P;
  for (Index j = 0; j < Q.rows(); ++j) {
    if (incoming(j) <= 0.0) {
      Q.row(j) = class_mass / class_mass.sum();
      out.fallback_components.push_back(j);
    } else {
      Q.row(j) /= Q.row(j).sum();
    }
  }
  out.gmm.label_dist = std::move(Q);
  return out;
}

std::vector<Index> count_classes(const LabelVector& y, int n_classes) {
  std::vector<Index> counts(static_cast<std::size_t>(std::max(n_classes, 0)), 0);
  for (Index i = 0; i < y.size(); ++i)
    if (y(i) >= 0 && y(i) < n_classes) ++counts[y(i)];
  return counts;
}

AdaptationResult adapt_map(const Gmm& tgt, const Matrix& X_target) {
  require(tgt.label_dist.has_value(), "adapt_map: target mixture is not labeled");
  const Matrix scores = responsibilities(tgt, X_target) * *tgt.label_dist;
  AdaptationResult out;
  out.predicted_labels = argmax_rows(scores);
  out.diagnostics.strategy = "gmm-otda-m";
  out.diagnostics.class_counts =
      count_classes(*out.predicted_labels, static_cast<int>(tgt.label_dist->cols()));
  return out;
}

AdaptationResult adapt_sample(const Gmm& tgt, Index n, std::uint64_t seed) {
  require(tgt.label_dist.has_value(), "adapt_sample: target mixture is not labeled");
  require(n >= 1, "adapt_sample: n must be >= 1");
  std::mt19937_64 rng(seed);
  GmmSample draw = sample(tgt, n, rng);
  LabelVector y(n);
  for (Index i = 0; i < n; ++i)
    y(i) = static_cast<int>(draw_categorical(tgt.label_dist->row(draw.component_ids(i)).transpose(), rng));

  AdaptationResult out;
  out.diagnostics.strategy = "gmm-otda-e";
  out.diagnostics.class_counts = count_classes(y, static_cast<int>(tgt.label_dist->cols()));
  out.transported = LabeledPoints{std::move(draw.X), std::move(y)};
  return out;
}

AdaptationResult adapt_transport(const MixturePlan& plan, const Gmm& src, const Matrix& X_source,
                                 const LabelVector& y_source) {
  require(plan.gamma.rows() == src.n_components(), "adapt_transport: plan does not match source mixture");
  require(X_source.rows() == y_source.size(), "adapt_transport: label count does not match points");
  const Matrix resp = responsibilities(src, X_source);
  const Index n = X_source.rows(), d = X_source.cols();

  // Mixture maps come from monge_map_diag, so A is diagonal.
  Matrix mapped = Matrix::Zero(n, d);
  Vector total = Vector::Zero(n);
  for (const ComponentMap& cm : plan.component_maps) {
    const double pi = src.weights(cm.source);
    if (pi <= 0.0) continue;
    const Vector w = resp.col(cm.source) * (cm.mass / pi);
    const RowVector scale = cm.map.A.diagonal().transpose();
    mapped += w.asDiagonal() *
              ((X_source.array().rowwise() * scale.array()).matrix().rowwise() + cm.map.b.transpose());
    total += w;
  }
  require((total.array() > 0.0).all(), "adapt_transport: a source point has no transport mass");
  mapped = total.cwiseInverse().asDiagonal() * mapped;

  AdaptationResult out;
  out.diagnostics.strategy = "gmm-otda-t";
  out.diagnostics.mw2 = std::sqrt(std::max(plan.mw2_squared, 0.0));
  out.diagnostics.plan_support = plan.support_size();
  out.diagnostics.class_counts = count_classes(y_source, y_source.size() ? y_source.maxCoeff() + 1 : 0);
  out.transported = LabeledPoints{std::move(mapped), y_source};
  return out;
}

nlohmann::ordered_json to_json(const AdaptationDiagnostics& d) {
  nlohmann::ordered_json j;
  j["strategy"] = d.strategy;
  j["mw2"] = d.mw2;
  j["plan_support"] = d.plan_support;
  j["class_counts"] = d.class_counts;
  j["fallback_components"] = d.fallback_components;
  return j;
}

void write_adaptation(const std::filesystem::path& csv_path, const AdaptationResult& result) {
  std::ofstream out(csv_path);
  if (!out) throw IoError("cannot write " + csv_path.string());
  out.precision(17);
  if (result.predicted_labels) {
    out << "index,label\n";
    for (Index i = 0; i < result.predicted_labels->size(); ++i) out << i << ',' << (*result.predicted_labels)(i) << '\n';
  } else if (result.transported) {
    const auto& pts = *result.transported;
    for (Index j = 0; j < pts.X.cols(); ++j) out << (j ? "," : "") << 'f' << j;
    out << ",label\n";
    for (Index i = 0; i < pts.X.rows(); ++i) {
      for (Index j = 0; j < pts.X.cols(); ++j) out << (j ? "," : "") << pts.X(i, j);
      out << ',' << pts.y(i) << '\n';
    }
  }
  if (!out) throw IoError("write failed: " + csv_path.string());
  auto side = csv_path;
  side.replace_extension(".json");
  std::ofstream js(side);
  if (!js) throw IoError("cannot write " + side.string());
  js << to_json(result.diagnostics).dump(2) << '\n';
}

}  // namespace gmmot
