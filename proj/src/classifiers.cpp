#include "gmmot/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

namespace gmmot {

ClassifierSpec ClassifierSpec::parse(std::string_view text) {
  ClassifierSpec spec;
  if (text == "logreg") {
    spec.kind = Kind::LogReg;
    return spec;
  }
  if (text == "knn") return spec;
  if (text.substr(0, 4) == "knn:") {
    const auto digits = text.substr(4);
    int k = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), k);
    require(ec == std::errc() && ptr == digits.data() + digits.size() && k >= 1,
            "classifier: bad neighbor count in '" + std::string(text) + "'");
    spec.k = k;
    return spec;
  }
  throw ValidationError("unknown classifier '" + std::string(text) + "' (expected knn, knn:<k> or logreg)");
}

std::string ClassifierSpec::name() const {
  return kind == Kind::LogReg ? "logreg" : "knn:" + std::to_string(k);
}

namespace {

LabelVector predict_knn(const KnnModel& m, const Matrix& X) {
  require(X.cols() == m.X.cols(), "knn: feature dimension mismatch");
  const Index n_train = m.X.rows();
  LabelVector out(X.rows());
  std::vector<Index> order(static_cast<std::size_t>(n_train));
  std::vector<int> votes(static_cast<std::size_t>(m.n_classes));
  for (Index i = 0; i < X.rows(); ++i) {
    const Vector d2 = (m.X.rowwise() - X.row(i)).rowwise().squaredNorm();
    std::iota(order.begin(), order.end(), Index{0});
    auto closer = [&](Index a, Index b) { return d2(a) < d2(b) || (d2(a) == d2(b) && a < b); };
    std::partial_sort(order.begin(), order.begin() + m.k, order.end(), closer);
    std::fill(votes.begin(), votes.end(), 0);
    for (int r = 0; r < m.k; ++r) ++votes[m.y(order[r])];
    out(i) = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  }
  return out;
}

Matrix softmax_rows(const Matrix& Z) {
  Matrix P = Z.colwise() - Z.rowwise().maxCoeff();
  P = P.array().exp();
  return P.rowwise().sum().cwiseInverse().asDiagonal() * P;
}

LabelVector predict_logreg(const LogRegModel& m, const Matrix& X) {
  const Matrix Z = (m.scaler.apply(X) * m.W).rowwise() + m.bias;
  return argmax_rows(Z);
}

}  // namespace

LabelVector Classifier::predict(const Matrix& X) const {
  return std::visit(
      [&](const auto& m) -> LabelVector {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, KnnModel>)
          return predict_knn(m, X);
        else
          return predict_logreg(m, X);
      },
      model_);
}

Classifier train_classifier(const Matrix& X, const LabelVector& y, int n_classes, const ClassifierSpec& spec,
                            std::uint64_t /*seed*/) {
  require(X.rows() >= 1, "classifier: empty training set");
  require(X.rows() == y.size(), "classifier: label count does not match samples");
  require(X.allFinite(), "classifier: non-finite training features");
  require(n_classes >= 1, "classifier: n_classes must be >= 1");
  require(y.minCoeff() >= 0 && y.maxCoeff() < n_classes, "classifier: label outside [0, n_classes)");

  if (spec.kind == ClassifierSpec::Kind::Knn) {
    require(spec.k >= 1 && spec.k <= X.rows(), "knn: k must lie in [1, n_train]");
    return Classifier(KnnModel{X, y, spec.k, n_classes});
  }

  constexpr int kSteps = 500;
  constexpr double kStep = 0.1;
  constexpr double kL2 = 1e-4;
  const Dataset train{X, std::nullopt, 0};
  LogRegModel m{standardize(train).params, Matrix::Zero(X.cols(), n_classes), RowVector::Zero(n_classes)};
  const Matrix Xs = m.scaler.apply(X);
  const Matrix Y = one_hot(y, n_classes);
  const double n = static_cast<double>(X.rows());
  for (int step = 0; step < kSteps; ++step) {
    const Matrix G = (softmax_rows((Xs * m.W).rowwise() + m.bias) - Y) / n;
    m.W -= kStep * (Xs.transpose() * G + kL2 * m.W);
    m.bias -= kStep * G.colwise().sum();
  }
  return Classifier(std::move(m));
}

double accuracy(const LabelVector& predicted, const LabelVector& truth) {
  require(predicted.size() == truth.size(), "accuracy: length mismatch");
  require(truth.size() > 0, "accuracy: empty label vectors");
  return static_cast<double>((predicted.array() == truth.array()).count()) / static_cast<double>(truth.size());
}

}  // namespace gmmot
