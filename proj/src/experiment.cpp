#include "gmmot/eval.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <cctype>
#include <cmath>
#include <chrono>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

namespace gmmot {

namespace {

constexpr std::array<std::string_view, 7> kMethodNames = {
    "source-only", "otda-emd", "otda-sinkhorn", "otda-linear", "gmm-otda-m", "gmm-otda-e", "gmm-otda-t"};

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string_view method_name(Method m) { return kMethodNames[static_cast<std::size_t>(m)]; }

std::string method_list() {
  std::string out;
  for (auto name : kMethodNames) {
    if (!out.empty()) out += ", ";
    out += name;
  }
  return out;
}

Method parse_method(std::string_view name) {
  for (std::size_t i = 0; i < kMethodNames.size(); ++i)
    if (kMethodNames[i] == name) return static_cast<Method>(i);
  throw ValidationError("unknown method '" + std::string(name) + "'; expected one of: " + method_list());
}

LoadedTask load_task(const TaskSpec& task) {
  if (task.blobs) {
    auto pair = make_shifted_blobs(*task.blobs);
    return {std::move(pair.source), std::move(pair.target)};
  }
  LoadedTask out{load_csv(task.source_csv, task.label_column, LabelMode::Read),
                 load_csv(task.target_csv, task.label_column, LabelMode::Read)};
  require(out.source.dim() == out.target.dim(), "source and target feature dimensions differ");
  return out;
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  const LoadedTask data = in_stage("load", [&] { return load_task(config.task); });
  return run_experiment(config, data);
}

MethodRun run_method(const ExperimentConfig& config, const Dataset& source_in, const Matrix& X_tgt_in) {
  require(source_in.labeled(), "source domain must be labeled");
  MethodRun run;
  Dataset source = source_in;
  run.X_tgt = X_tgt_in;
  if (config.standardize) {
    auto st = in_stage("standardize", [&] {
      return standardize(source, {Dataset{run.X_tgt, std::nullopt, 0}});
    });
    source = std::move(st.train);
    run.X_tgt = std::move(st.others[0].features);
    run.scaler = std::move(st.params);
  }
  const int n_classes = std::max(source.n_classes, config.n_classes);
  source.n_classes = n_classes;
  run.n_classes = n_classes;
  const LabelVector& y_src = *source.labels;
  run.k_src = config.k_src > 0 ? config.k_src : n_classes;
  run.k_tgt = config.k_tgt > 0 ? config.k_tgt : n_classes;
  if (run.k_src < n_classes || run.k_tgt < n_classes)
    std::cerr << "warning: fewer mixture components than classes in task " << config.task.name << '\n';

  EmConfig em = config.em;
  em.seed = config.seed;
  const Matrix& X_tgt = run.X_tgt;
  AdaptationResult& res = run.result;

  switch (config.method) {
    case Method::SourceOnly:
      res.diagnostics.strategy = "source-only";
      res.diagnostics.class_counts = count_classes(y_src, n_classes);
      res.transported = LabeledPoints{source.features, y_src};
      break;

    case Method::OtdaEmd:
    case Method::OtdaSinkhorn: {
      const Dataset src = take_rows(source, subsample_indices(source.size(), config.subsample, config.seed));
      const auto tgt_rows = subsample_indices(X_tgt.rows(), config.subsample, config.seed + 1);
      Matrix Xt(static_cast<Index>(tgt_rows.size()), X_tgt.cols());
      for (std::size_t r = 0; r < tgt_rows.size(); ++r) Xt.row(r) = X_tgt.row(tgt_rows[r]);
      EmpiricalOtConfig ot;
      ot.solver = config.method == Method::OtdaEmd ? OtSolver::Exact : OtSolver::Sinkhorn;
      ot.epsilon = config.epsilon;
      ot.allow_large = config.allow_large;
      res = in_stage("adapt", [&] { return otda_empirical(src.features, *src.labels, Xt, ot); });
      break;
    }

    case Method::OtdaLinear:
      res = in_stage("adapt", [&] { return otda_linear(source.features, y_src, X_tgt); });
      break;

    case Method::GmmOtdaM:
    case Method::GmmOtdaE:
    case Method::GmmOtdaT: {
      const ComponentLabeling src_gmm = in_stage("fit-source", [&] {
        return label_components(em_fit(source, run.k_src, em).gmm, source);
      });
      const Gmm tgt_fit = in_stage("fit-target", [&] {
        return em_fit(Dataset{X_tgt, std::nullopt, 0}, run.k_tgt, em).gmm;
      });
      const MixturePlan plan = in_stage("mixture-plan", [&] { return mixture_plan(src_gmm.gmm, tgt_fit); });
      const ComponentLabeling tgt_gmm =
          in_stage("transfer-labels", [&] { return transfer_component_labels(plan, src_gmm.gmm, tgt_fit); });

      if (config.method == Method::GmmOtdaM) {
        res = in_stage("adapt", [&] { return adapt_map(tgt_gmm.gmm, X_tgt); });
      } else if (config.method == Method::GmmOtdaE) {
        res = in_stage("adapt", [&] { return adapt_sample(tgt_gmm.gmm, X_tgt.rows(), config.seed); });
      } else {
        res = in_stage("adapt", [&] { return adapt_transport(plan, src_gmm.gmm, source.features, y_src); });
      }
      res.diagnostics.mw2 = std::sqrt(std::max(plan.mw2_squared, 0.0));
      res.diagnostics.plan_support = plan.support_size();
      res.diagnostics.fallback_components = src_gmm.fallback_components;
      for (Index j : tgt_gmm.fallback_components) res.diagnostics.fallback_components.push_back(run.k_src + j);
      break;
    }
  }
  return run;
}

ExperimentReport run_experiment(const ExperimentConfig& config, const LoadedTask& data) {
  const auto start = std::chrono::steady_clock::now();
  require(data.target.labeled(), "target labels are needed for scoring");

  ExperimentConfig cfg = config;
  cfg.n_classes = std::max(cfg.n_classes, data.target.n_classes);
  // Methods only ever see the target features.
  const MethodRun run = run_method(cfg, data.source, data.target.features);
  const LabelVector& truth = *data.target.labels;

  ExperimentReport report;
  report.task = config.task.name;
  report.method = std::string(method_name(config.method));
  report.seed = config.seed;
  report.classifier = config.classifier.name();
  report.k_src = run.k_src;
  report.k_tgt = run.k_tgt;
  report.n_source = data.source.size();
  report.n_target = data.target.size();
  report.diagnostics = run.result.diagnostics;

  if (run.result.predicted_labels) {
    report.accuracy = accuracy(*run.result.predicted_labels, truth);
  } else {
    const LabeledPoints& pts = *run.result.transported;
    const Classifier clf = in_stage("classifier", [&] {
      return train_classifier(pts.X, pts.y, run.n_classes, config.classifier, config.seed);
    });
    report.accuracy = accuracy(clf.predict(run.X_tgt), truth);
  }

  report.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return report;
}

// ---------------------------------------------------------------------------

namespace {

BlobsSpec parse_blobs(const nlohmann::ordered_json& j) {
  BlobsSpec b;
  b.n_per_class = j.value("n_per_class", b.n_per_class);
  b.n_classes = j.value("n_classes", b.n_classes);
  b.dim = j.value("dim", b.dim);
  b.rotation = j.value("rotation", b.rotation);
  b.spread = j.value("spread", b.spread);
  b.seed = j.value("seed", b.seed);
  if (j.contains("shift")) {
    const auto v = j.at("shift").get<std::vector<double>>();
    b.shift = Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
  }
  return b;
}

}  // namespace

GridConfig parse_grid_config(const nlohmann::ordered_json& j, const std::filesystem::path& base_dir) {
  try {
    GridConfig g;
    g.schema = j.value("schema", 1);
    require(g.schema == 1, "unsupported config schema " + std::to_string(g.schema));
    auto& d = g.defaults;
    d.seed = j.value("seed", std::uint64_t{0});
    d.k_src = j.value("k_src", Index{0});
    d.k_tgt = j.value("k_tgt", Index{0});
    require(d.k_src >= 0 && d.k_tgt >= 0, "k_src and k_tgt must be >= 0");
    d.classifier = ClassifierSpec::parse(j.value("classifier", std::string("knn:1")));
    d.standardize = j.value("standardize", true);
    d.subsample = j.value("subsample", Index{2000});
    d.allow_large = j.value("allow_large", false);
    if (j.contains("epsilon") && !j.at("epsilon").is_null()) d.epsilon = j.at("epsilon").get<double>();
    if (j.contains("em")) {
      const auto& e = j.at("em");
      d.em.max_iter = e.value("max_iter", d.em.max_iter);
      d.em.tol = e.value("tol", d.em.tol);
      d.em.n_restarts = e.value("n_restarts", d.em.n_restarts);
    }
    g.record_wall_time = j.value("record_wall_time", false);
    if (j.contains("methods")) {
      g.methods.clear();
      for (const auto& m : j.at("methods")) g.methods.push_back(parse_method(m.get<std::string>()));
    }
    require(j.contains("tasks") && j.at("tasks").is_array() && !j.at("tasks").empty(),
            "config needs a non-empty 'tasks' array");
    for (const auto& t : j.at("tasks")) {
      TaskSpec task;
      task.name = t.at("name").get<std::string>();
      if (t.contains("blobs")) {
        task.blobs = parse_blobs(t.at("blobs"));
      } else {
        auto resolve = [&](const std::string& p) {
          std::filesystem::path path(p);
          return path.is_relative() ? base_dir / path : path;
        };
        task.source_csv = resolve(t.at("source_csv").get<std::string>());
        task.target_csv = resolve(t.at("target_csv").get<std::string>());
        task.label_column = t.value("label_column", task.label_column);
      }
      g.tasks.push_back(std::move(task));
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
}

GridConfig load_grid_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return parse_grid_config(j, path.parent_path());
}

GridReport run_grid(const GridConfig& config, int jobs) {
  require(!config.tasks.empty() && !config.methods.empty(), "grid has no cells");
  const std::size_t n_methods = config.methods.size();
  const std::size_t n_cells = config.tasks.size() * n_methods;

  std::vector<LoadedTask> data;
  for (const auto& t : config.tasks) data.push_back(in_stage("load " + t.name, [&] { return load_task(t); }));

  GridReport report;
  report.cells.resize(n_cells);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t c = next++; c < n_cells; c = next++) {
      try {
        ExperimentConfig cell = config.defaults;
        cell.task = config.tasks[c / n_methods];
        cell.method = config.methods[c % n_methods];
        report.cells[c] = run_experiment(cell, data[c / n_methods]);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(n_cells)));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (std::size_t m = 0; m < n_methods; ++m) {
    report.methods.emplace_back(method_name(config.methods[m]));
    double sum = 0.0;
    for (std::size_t t = 0; t < config.tasks.size(); ++t) sum += report.cells[t * n_methods + m].accuracy;
    report.mean_accuracy.push_back(sum / static_cast<double>(config.tasks.size()));
  }
  return report;
}

nlohmann::ordered_json to_json(const ExperimentReport& r, bool with_wall_time) {
  nlohmann::ordered_json j;
  j["schema"] = 1;
  j["task"] = r.task;
  j["method"] = r.method;
  j["accuracy"] = r.accuracy;
  j["seed"] = r.seed;
  if (with_wall_time) j["wall_ms"] = r.wall_ms;
  j["K_src"] = r.k_src;
  j["K_tgt"] = r.k_tgt;
  j["classifier"] = r.classifier;
  j["n_source"] = r.n_source;
  j["n_target"] = r.n_target;
  j["diagnostics"] = to_json(r.diagnostics);
  return j;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void write_results_csv(const std::filesystem::path& path, const GridReport& report, bool with_wall_time) {
  std::ostringstream os;
  os << "task,method,accuracy,seed,wall_ms,K_src,K_tgt,classifier\n";
  for (const auto& r : report.cells)
    os << r.task << ',' << r.method << ',' << format_number(r.accuracy) << ',' << r.seed << ','
       << (with_wall_time ? format_number(r.wall_ms) : std::string("0")) << ',' << r.k_src << ',' << r.k_tgt
       << ',' << r.classifier << '\n';
  write_file_atomic(path, os.str());
}

void write_table_csv(const std::filesystem::path& path, const GridReport& report) {
  std::ostringstream os;
  os << "task";
  for (const auto& m : report.methods) os << ',' << m;
  os << '\n';
  const std::size_t n_methods = report.methods.size();
  for (std::size_t c = 0; c < report.cells.size(); c += n_methods) {
    os << report.cells[c].task;
    for (std::size_t m = 0; m < n_methods; ++m) os << ',' << format_number(report.cells[c + m].accuracy);
    os << '\n';
  }
  os << "mean";
  for (double v : report.mean_accuracy) os << ',' << format_number(v);
  os << '\n';
  write_file_atomic(path, os.str());
}

void write_grid_outputs(const std::filesystem::path& out_dir, const GridReport& report, bool with_wall_time) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "reports", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "reports").string() + ": " + ec.message());
  write_results_csv(out_dir / "results.csv", report, with_wall_time);
  write_table_csv(out_dir / "table.csv", report);
  for (const auto& r : report.cells) {
    std::string stem = r.task + "__" + r.method;
    for (char& ch : stem)
      if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.')) ch = '_';
    write_file_atomic(out_dir / "reports" / (stem + ".json"), to_json(r, with_wall_time).dump(2) + "\n");
  }
}

}  // namespace gmmot
