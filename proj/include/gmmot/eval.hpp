#pragma once

#include "gmmot/baselines.hpp"
#include "gmmot/data.hpp"
#include "gmmot/gmm.hpp"
#include "gmmot/gmm_otda.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace gmmot {

// ---------------------------------------------------------------------------
// Classifiers

struct ClassifierSpec {
  enum class Kind { Knn, LogReg };
  Kind kind = Kind::Knn;
  int k = 1;

  /// "knn", "knn:<k>" or "logreg".
  static ClassifierSpec parse(std::string_view text);
  std::string name() const;
};

struct KnnModel {
  Matrix X;
  LabelVector y;
  int k = 1;
  int n_classes = 0;
};

/// Multinomial logistic regression on internally standardized features.
struct LogRegModel {
  StandardizationParams scaler;
  Matrix W;  // d x n_classes
  RowVector bias;
};

class Classifier {
 public:
  explicit Classifier(std::variant<KnnModel, LogRegModel> model) : model_(std::move(model)) {}
  LabelVector predict(const Matrix& X) const;
  const std::variant<KnnModel, LogRegModel>& model() const { return model_; }

 private:
  std::variant<KnnModel, LogRegModel> model_;
};

/// k-NN: Euclidean, neighbor and vote ties go to the lowest index.
/// logreg: 500 full-batch gradient steps of size 0.1, L2 weight 1e-4.
/// Classes absent from y can never be predicted.
Classifier train_classifier(const Matrix& X, const LabelVector& y, int n_classes,
                            const ClassifierSpec& spec, std::uint64_t seed = 0);

double accuracy(const LabelVector& predicted, const LabelVector& truth);

// ---------------------------------------------------------------------------
// Experiments

enum class Method { SourceOnly, OtdaEmd, OtdaSinkhorn, OtdaLinear, GmmOtdaM, GmmOtdaE, GmmOtdaT };

inline constexpr std::array<Method, 7> kAllMethods = {
    Method::SourceOnly, Method::OtdaEmd,  Method::OtdaSinkhorn, Method::OtdaLinear,
    Method::GmmOtdaM,   Method::GmmOtdaE, Method::GmmOtdaT};

std::string_view method_name(Method m);
/// Throws ValidationError listing the accepted names.
Method parse_method(std::string_view name);
std::string method_list();

struct TaskSpec {
  std::string name;
  std::optional<BlobsSpec> blobs;  // synthetic task, or else the CSV pair
  std::filesystem::path source_csv;
  std::filesystem::path target_csv;
  std::string label_column = "label";
};

struct ExperimentConfig {
  TaskSpec task;
  Method method = Method::SourceOnly;
  Index k_src = 0;  // 0: number of classes
  Index k_tgt = 0;
  ClassifierSpec classifier;
  std::uint64_t seed = 0;
  bool standardize = true;
  std::optional<double> epsilon;
  Index subsample = 2000;  // per-domain cap for the empirical OT baselines
  bool allow_large = false;
  EmConfig em;
  int n_classes = 0;  // lower bound on the class count, e.g. from target labels
};

struct ExperimentReport {
  std::string task;
  std::string method;
  double accuracy = 0.0;
  std::uint64_t seed = 0;
  double wall_ms = 0.0;
  Index k_src = 0;
  Index k_tgt = 0;
  std::string classifier;
  Index n_source = 0;
  Index n_target = 0;
  AdaptationDiagnostics diagnostics;
};

struct LoadedTask {
  Dataset source;
  Dataset target;  // labels used only for scoring
};

LoadedTask load_task(const TaskSpec& task);

struct MethodRun {
  AdaptationResult result;  // in the working (standardized) coordinates
  Matrix X_tgt;             // target features in the same coordinates
  std::optional<StandardizationParams> scaler;
  int n_classes = 0;
  Index k_src = 0;
  Index k_tgt = 0;
};

/// Runs one adaptation method on a labeled source and unlabeled target.
MethodRun run_method(const ExperimentConfig& config, const Dataset& source, const Matrix& X_tgt);

ExperimentReport run_experiment(const ExperimentConfig& config);
ExperimentReport run_experiment(const ExperimentConfig& config, const LoadedTask& data);

struct GridConfig {
  int schema = 1;
  std::vector<TaskSpec> tasks;
  std::vector<Method> methods{kAllMethods.begin(), kAllMethods.end()};
  ExperimentConfig defaults;  // task and method are filled per cell
  bool record_wall_time = false;
};

/// Parses the JSON grid file. Relative CSV paths resolve against base_dir.
GridConfig parse_grid_config(const nlohmann::ordered_json& j, const std::filesystem::path& base_dir = {});
GridConfig load_grid_config(const std::filesystem::path& path);

struct GridReport {
  std::vector<ExperimentReport> cells;  // task-major, method-minor
  std::vector<std::string> methods;
  std::vector<double> mean_accuracy;  // per method, over tasks
};

GridReport run_grid(const GridConfig& config, int jobs = 1);

nlohmann::ordered_json to_json(const ExperimentReport& r, bool with_wall_time);

/// Long-format table: task, method, accuracy, seed, wall_ms, K_src, K_tgt, classifier.
void write_results_csv(const std::filesystem::path& path, const GridReport& report, bool with_wall_time);
/// Wide table: one row per task plus a "mean" row, one column per method.
void write_table_csv(const std::filesystem::path& path, const GridReport& report);
/// results.csv, table.csv and reports/<task>__<method>.json under out_dir.
void write_grid_outputs(const std::filesystem::path& out_dir, const GridReport& report, bool with_wall_time);

/// Writes through a temporary file in the same directory and renames.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

// ---------------------------------------------------------------------------
// Plot data

struct PointSet {
  std::string role;  // source | target | transported
  Matrix X;
  std::optional<LabelVector> labels;
};

struct Projection {
  Matrix xy;                      // n x 2
  bool projected = false;         // false when the input was already 2-D
  double variance_captured = 1.0; // fraction of total variance in the plane
  Matrix basis;                   // d x 2 principal axes when projected
};

/// Identity for 2-D data, else the top-2 principal plane by power iteration
/// (200 steps per axis).
Projection project_2d(const Matrix& X);

/// CSV x,y,label,role (+ <stem>.meta.json). An optional SVG scatter.
void emit_plot_data(const std::filesystem::path& csv_path, const std::vector<PointSet>& sets,
                    const std::optional<std::filesystem::path>& svg_path = std::nullopt);

}  // namespace gmmot
