#include "gmmot/eval.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace gmmot {

namespace {

// Leading eigenvector of a symmetric PSD matrix.
Vector power_iteration(const Matrix& S, int steps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Vector v(S.rows());
  for (Index i = 0; i < v.size(); ++i) v(i) = normal(rng);
  v.normalize();
  for (int s = 0; s < steps; ++s) {
    Vector w = S * v;
    const double norm = w.norm();
    if (norm == 0.0) break;
    v = w / norm;
  }
  return v;
}

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

}  // namespace

Projection project_2d(const Matrix& X) {
  Projection out;
  if (X.cols() == 2 || X.rows() == 0) {
    out.xy = X.cols() == 2 ? X : Matrix(0, 2);
    return out;
  }
  require(X.cols() >= 1, "project_2d: no feature columns");
  const RowVector mu = X.colwise().mean();
  const Matrix Xc = X.rowwise() - mu;
  const Matrix S = Xc.transpose() * Xc / static_cast<double>(X.rows());
  out.projected = true;
  out.basis = Matrix::Zero(X.cols(), 2);
  if (X.cols() == 1) {
    out.basis(0, 0) = 1.0;
    out.xy = Xc * out.basis;
    return out;
  }
  const Vector v1 = power_iteration(S, 200, 1);
  const double l1 = v1.dot(S * v1);
  const Matrix deflated = S - l1 * v1 * v1.transpose();
  Vector v2 = power_iteration(deflated, 200, 2);
  v2 = (v2 - v2.dot(v1) * v1).normalized();
  const double l2 = v2.dot(S * v2);
  out.basis.col(0) = v1;
  out.basis.col(1) = v2;
  out.xy = Xc * out.basis;
  const double total = S.trace();
  out.variance_captured = total > 0.0 ? (l1 + l2) / total : 1.0;
  return out;
}

void emit_plot_data(const std::filesystem::path& csv_path, const std::vector<PointSet>& sets,
                    const std::optional<std::filesystem::path>& svg_path) {
  Index n = 0, d = -1;
  for (const auto& s : sets) {
    if (s.X.rows() == 0) continue;
    require(d < 0 || s.X.cols() == d, "plot data: point sets differ in dimension");
    d = s.X.cols();
    n += s.X.rows();
    require(!s.labels || s.labels->size() == s.X.rows(), "plot data: label count mismatch");
  }
  Matrix all(n, std::max<Index>(d, 0));
  std::vector<int> labels;
  std::vector<std::string> roles;
  Index row = 0;
  for (const auto& s : sets) {
    for (Index i = 0; i < s.X.rows(); ++i, ++row) {
      all.row(row) = s.X.row(i);
      labels.push_back(s.labels ? (*s.labels)(i) : -1);
      roles.push_back(s.role);
    }
  }
  Projection proj;
  proj.xy = Matrix(0, 2);
  if (n > 0) proj = project_2d(all);

  std::ostringstream csv;
  csv.precision(17);
  csv << "x,y,label,role\n";
  for (Index i = 0; i < n; ++i)
    csv << proj.xy(i, 0) << ',' << proj.xy(i, 1) << ',' << labels[i] << ',' << roles[i] << '\n';
  write_file_atomic(csv_path, csv.str());

  nlohmann::ordered_json meta;
  meta["n"] = n;
  meta["d"] = std::max<Index>(d, 0);
  meta["projected"] = proj.projected;
  meta["variance_captured"] = proj.variance_captured;
  write_file_atomic(sidecar_path(csv_path), meta.dump(2) + "\n");

  if (!svg_path) return;
  constexpr double kSize = 480.0, kPad = 20.0;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (n > 0) {
    x0 = proj.xy.col(0).minCoeff();
    x1 = proj.xy.col(0).maxCoeff();
    y0 = proj.xy.col(1).minCoeff();
    y1 = proj.xy.col(1).maxCoeff();
  }
  const double sx = (kSize - 2 * kPad) / std::max(x1 - x0, 1e-12);
  const double sy = (kSize - 2 * kPad) / std::max(y1 - y0, 1e-12);
  std::ostringstream svg;
  svg.precision(6);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\"" << kSize << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (Index i = 0; i < n; ++i) {
    const double cx = kPad + (proj.xy(i, 0) - x0) * sx;
    const double cy = kSize - kPad - (proj.xy(i, 1) - y0) * sy;
    const char* color = labels[i] < 0 ? "#000000" : kPalette[labels[i] % 10];
    if (roles[i] == "target") {
      svg << "<circle cx=\"" << cx << "\" cy=\"" << cy << "\" r=\"3\" fill=\"" << color
          << "\" fill-opacity=\"0.3\"/>\n";
    } else if (roles[i] == "transported") {
      svg << "<rect x=\"" << cx - 2.5 << "\" y=\"" << cy - 2.5 << "\" width=\"5\" height=\"5\" fill=\"" << color
          << "\"/>\n";
    } else {
      svg << "<circle cx=\"" << cx << "\" cy=\"" << cy << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    }
  }
  svg << "</svg>\n";
  write_file_atomic(*svg_path, svg.str());
}

}  // namespace gmmot
