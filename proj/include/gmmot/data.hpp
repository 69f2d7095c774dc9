#pragma once

#include "gmmot/core.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace gmmot {

/// Sample matrix (one row per sample) with optional integer class labels.
///
/// Labels are stored as contiguous indices in [0, n_classes). A one-hot view
/// is produced on demand by one_hot().
struct Dataset {
  Matrix features;
  std::optional<LabelVector> labels;
  int n_classes = 0;

  Index size() const { return features.rows(); }
  Index dim() const { return features.cols(); }
  bool labeled() const { return labels.has_value(); }

  // Throws ValidationError when an invariant is broken.
  void validate() const;
};

Dataset make_dataset(Matrix features, std::optional<LabelVector> labels = std::nullopt,
                     int n_classes = 0);

Matrix one_hot(const LabelVector& labels, int n_classes);

/// Class frequencies, length n_classes, summing to one.
Vector class_frequencies(const LabelVector& labels, int n_classes);

enum class LabelMode {
  Read,  // label column becomes Dataset::labels
  Drop,  // label column is skipped if present, never parsed
};

/// Reads a comma-separated file with a header row. When label_column is set
/// the column is either read as labels (remapped to sorted contiguous
/// indices) or dropped.
Dataset load_csv(const std::filesystem::path& path,
                 const std::optional<std::string>& label_column = std::nullopt,
                 LabelMode mode = LabelMode::Read);

/// Writes features as f0..f{d-1} plus a "label" column when labeled, and a
/// sidecar <stem>.meta.json with n, d, n_classes.
void save_csv(const std::filesystem::path& path, const Dataset& data);

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);

struct StandardizationParams {
  static constexpr double kScaleFloor = 1e-12;
  Vector mean;
  Vector scale;

  Matrix apply(const Matrix& X) const;
  Matrix invert(const Matrix& Z) const;
};

struct Standardized {
  StandardizationParams params;
  Dataset train;
  std::vector<Dataset> others;
};

/// Zero mean, unit population standard deviation per dimension on train;
/// the same affine map is applied to others.
Standardized standardize(const Dataset& train, const std::vector<Dataset>& others = {});

struct BlobsSpec {
  int n_per_class = 300;
  int n_classes = 3;
  int dim = 2;
  Vector shift;  // empty means zero
  double rotation = 0.0;
  double spread = 1.0;
  std::uint64_t seed = 0;
};

struct DomainPair {
  Dataset source;
  Dataset target;
};

/// Isotropic Gaussian class blobs with means evenly spaced on a circle of
/// radius 4*spread in the first two dimensions. The target is a fresh draw
/// rotated about the origin in dims (0, 1) and then translated by shift.
DomainPair make_shifted_blobs(const BlobsSpec& spec);

/// Deterministic subset of at most max_rows rows, kept in original order.
std::vector<Index> subsample_indices(Index n, Index max_rows, std::uint64_t seed);
Dataset take_rows(const Dataset& data, const std::vector<Index>& rows);

}  // namespace gmmot
