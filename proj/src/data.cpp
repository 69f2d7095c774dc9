#include "gmmot/data.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace gmmot {

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\"");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\"");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> out;
  std::string_view rest(line);
  while (true) {
    auto pos = rest.find(',');
    out.push_back(trim(rest.substr(0, pos)));
    if (pos == std::string_view::npos) break;
    rest.remove_prefix(pos + 1);
  }
  return out;
}

std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const char* first = s.data();
  if (*first == '+') ++first;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

void Dataset::validate() const {
  require(features.rows() >= 1, "dataset has no samples");
  require(features.cols() >= 1, "dataset has no feature columns");
  require(features.allFinite(), "dataset contains non-finite feature values");
  if (labels) {
    require(labels->size() == features.rows(), "label count does not match sample count");
    require(n_classes >= 1, "labeled dataset needs n_classes >= 1");
    for (Index i = 0; i < labels->size(); ++i) {
      int y = (*labels)(i);
      require(y >= 0 && y < n_classes, "label " + std::to_string(y) + " outside [0, n_classes)");
    }
  }
}

Dataset make_dataset(Matrix features, std::optional<LabelVector> labels, int n_classes) {
  Dataset d{std::move(features), std::move(labels), n_classes};
  if (d.labels && d.n_classes == 0 && d.labels->size() > 0) d.n_classes = d.labels->maxCoeff() + 1;
  d.validate();
  return d;
}

Matrix one_hot(const LabelVector& labels, int n_classes) {
  Matrix Y = Matrix::Zero(labels.size(), n_classes);
  for (Index i = 0; i < labels.size(); ++i) {
    require(labels(i) >= 0 && labels(i) < n_classes, "label outside [0, n_classes)");
    Y(i, labels(i)) = 1.0;
  }
  return Y;
}

Vector class_frequencies(const LabelVector& labels, int n_classes) {
  require(labels.size() > 0, "class frequencies of an empty label vector");
  return one_hot(labels, n_classes).colwise().mean().transpose();
}

Dataset load_csv(const std::filesystem::path& path, const std::optional<std::string>& label_column,
                 LabelMode mode) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line) || trim(line).empty())
    throw ValidationError(path.string() + ": empty file (header row required)");
  const auto header = split_row(line);

  Index label_idx = -1;
  if (label_column) {
    auto it = std::find(header.begin(), header.end(), *label_column);
    if (it != header.end()) {
      label_idx = it - header.begin();
    } else if (mode == LabelMode::Read) {
      throw IoError(path.string() + ": label column '" + *label_column + "' not in header");
    }
  }
  const Index d = static_cast<Index>(header.size()) - (label_idx >= 0 ? 1 : 0);
  if (d < 1) throw ValidationError(path.string() + ": no feature columns");

  std::vector<double> values;
  std::vector<std::string> raw_labels;
  Index row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto cells = split_row(line);
    if (cells.size() != header.size())
      throw IoError(path.string() + ": row " + std::to_string(row) + " has " +
                    std::to_string(cells.size()) + " fields, expected " +
                    std::to_string(header.size()));
    for (Index c = 0; c < static_cast<Index>(cells.size()); ++c) {
      if (c == label_idx) {
        if (mode == LabelMode::Read) raw_labels.push_back(cells[c]);
        continue;
      }
      auto v = parse_double(cells[c]);
      if (!v)
        throw IoError(path.string() + ": row " + std::to_string(row) + ", column '" + header[c] +
                      "': cannot parse '" + cells[c] + "'");
      if (!std::isfinite(*v))
        throw ValidationError(path.string() + ": row " + std::to_string(row) + ", column '" +
                              header[c] + "': non-finite value");
      values.push_back(*v);
    }
  }
  if (row == 0) throw ValidationError(path.string() + ": no data rows");

  Matrix X(row, d);
  for (Index i = 0; i < row; ++i)
    for (Index j = 0; j < d; ++j) X(i, j) = values[i * d + j];

  if (label_idx < 0 || mode == LabelMode::Drop) return make_dataset(std::move(X));

  // Sorted order of the original values: numeric when every label parses.
  std::vector<std::string> uniq = raw_labels;
  bool numeric = std::all_of(uniq.begin(), uniq.end(),
                             [](const std::string& s) { return parse_double(s).has_value(); });
  auto less = [numeric](const std::string& a, const std::string& b) {
    return numeric ? *parse_double(a) < *parse_double(b) : a < b;
  };
  std::sort(uniq.begin(), uniq.end(), less);
  uniq.erase(std::unique(uniq.begin(), uniq.end(),
                         [&](const std::string& a, const std::string& b) {
                           return !less(a, b) && !less(b, a);
                         }),
             uniq.end());
  LabelVector y(row);
  for (Index i = 0; i < row; ++i) {
    auto it = std::lower_bound(uniq.begin(), uniq.end(), raw_labels[i], less);
    y(i) = static_cast<int>(it - uniq.begin());
  }
  return make_dataset(std::move(X), std::move(y), static_cast<int>(uniq.size()));
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".meta.json");
  return p;
}

void save_csv(const std::filesystem::path& path, const Dataset& data) {
  data.validate();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (Index j = 0; j < data.dim(); ++j) out << (j ? "," : "") << 'f' << j;
  if (data.labels) out << ",label";
  out << '\n';
  for (Index i = 0; i < data.size(); ++i) {
    for (Index j = 0; j < data.dim(); ++j) out << (j ? "," : "") << format_double(data.features(i, j));
    if (data.labels) out << ',' << (*data.labels)(i);
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());

  nlohmann::ordered_json meta;
  meta["n"] = data.size();
  meta["d"] = data.dim();
  meta["n_classes"] = data.labels ? data.n_classes : 0;
  std::ofstream side(sidecar_path(path));
  if (!side) throw IoError("cannot write " + sidecar_path(path).string());
  side << meta.dump(2) << '\n';
}

Matrix StandardizationParams::apply(const Matrix& X) const {
  require(X.cols() == mean.size(), "standardization dimension mismatch");
  return ((X.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array()).matrix();
}

Matrix StandardizationParams::invert(const Matrix& Z) const {
  require(Z.cols() == mean.size(), "standardization dimension mismatch");
  return ((Z.array().rowwise() * scale.transpose().array()).matrix().rowwise() + mean.transpose());
}

Standardized standardize(const Dataset& train, const std::vector<Dataset>& others) {
  train.validate();
  for (const auto& o : others)
    require(o.dim() == train.dim(), "standardize: dimension mismatch between datasets");

  StandardizationParams params;
  params.mean = train.features.colwise().mean().transpose();
  const Matrix centered = train.features.rowwise() - params.mean.transpose();
  params.scale = (centered.array().square().colwise().sum() / static_cast<double>(train.size()))
                     .sqrt()
                     .max(StandardizationParams::kScaleFloor)
                     .transpose();

  auto transform = [&](const Dataset& d) {
    return Dataset{params.apply(d.features), d.labels, d.n_classes};
  };
  Standardized out{params, transform(train), {}};
  out.others.reserve(others.size());
  for (const auto& o : others) out.others.push_back(transform(o));
  return out;
}

DomainPair make_shifted_blobs(const BlobsSpec& spec) {
  require(spec.n_per_class >= 1, "n_per_class must be >= 1");
  require(spec.n_classes >= 1, "n_classes must be >= 1");
  require(spec.dim >= 2, "dim must be >= 2");
  require(spec.spread > 0.0, "spread must be positive");
  Vector shift = spec.shift.size() == 0 ? Vector::Zero(spec.dim) : spec.shift;
  require(shift.size() == spec.dim, "shift length must equal dim");

  const double radius = 4.0 * spec.spread;
  Matrix means = Matrix::Zero(spec.n_classes, spec.dim);
  for (int c = 0; c < spec.n_classes; ++c) {
    const double angle = 2.0 * M_PI * c / spec.n_classes;
    means(c, 0) = radius * std::cos(angle);
    means(c, 1) = radius * std::sin(angle);
  }

  const Index n = static_cast<Index>(spec.n_per_class) * spec.n_classes;
  auto draw = [&](std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix X(n, spec.dim);
    LabelVector y(n);
    for (int c = 0; c < spec.n_classes; ++c) {
      for (int k = 0; k < spec.n_per_class; ++k) {
        const Index i = static_cast<Index>(c) * spec.n_per_class + k;
        y(i) = c;
        for (Index j = 0; j < spec.dim; ++j) X(i, j) = means(c, j) + spec.spread * normal(rng);
      }
    }
    return std::pair{X, y};
  };

  auto [Xs, ys] = draw(0);
  auto [Xt, yt] = draw(1);
  const double cs = std::cos(spec.rotation), sn = std::sin(spec.rotation);
  for (Index i = 0; i < n; ++i) {
    const double a = Xt(i, 0), b = Xt(i, 1);
    Xt(i, 0) = cs * a - sn * b;
    Xt(i, 1) = sn * a + cs * b;
  }
  Xt.rowwise() += shift.transpose();
  return {make_dataset(std::move(Xs), std::move(ys), spec.n_classes),
          make_dataset(std::move(Xt), std::move(yt), spec.n_classes)};
}

std::vector<Index> subsample_indices(Index n, Index max_rows, std::uint64_t seed) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  if (max_rows <= 0 || n <= max_rows) return idx;
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates, then restore the original order.
  for (Index i = 0; i < max_rows; ++i) {
    std::uniform_int_distribution<Index> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(static_cast<std::size_t>(max_rows));
  std::sort(idx.begin(), idx.end());
  return idx;
}

Dataset take_rows(const Dataset& data, const std::vector<Index>& rows) {
  Matrix X(static_cast<Index>(rows.size()), data.dim());
  std::optional<LabelVector> y;
  if (data.labels) y = LabelVector(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    X.row(r) = data.features.row(rows[r]);
    if (y) (*y)(r) = (*data.labels)(rows[r]);
  }
  return Dataset{std::move(X), std::move(y), data.n_classes};
}

}  // namespace gmmot
