#include "gmmot/gmmot.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <limits>
#include <string>

using namespace gmmot;

namespace {

constexpr double kQuarterTurn = 0.78539816339744830962;

struct GenArgs {
  int n_per_class = 300;
  int classes = 3;
  int dim = 2;
  std::vector<double> shift{5.0, 0.0};
  double rotate = kQuarterTurn;
  double spread = 1.0;
  std::uint64_t seed = 0;
  std::string out_src = "source.csv";
  std::string out_tgt = "target.csv";
};

struct FitArgs {
  std::string data;
  std::string label_column = "label";
  bool no_labels = false;
  int k = 0;
  std::string k_sweep;
  std::uint64_t seed = 0;
  int max_iter = EmConfig{}.max_iter;
  double tol = EmConfig{}.tol;
  int restarts = EmConfig{}.n_restarts;
  std::string out = "gmm.json";
};

struct AdaptArgs {
  std::string method;
  std::string src;
  std::string tgt;
  std::string label_column = "label";
  Index k_src = 0;
  Index k_tgt = 0;
  std::optional<double> epsilon;
  std::uint64_t seed = 0;
  bool no_standardize = false;
  Index subsample = 2000;
  bool allow_large = false;
  std::string out = "adapted.csv";
};

struct EvalArgs {
  std::string config;
  std::string out_dir = "results";
  int jobs = 1;
};

struct PlotArgs {
  std::string src;
  std::string tgt;
  std::string transported;
  std::string label_column = "label";
  std::string out = "plot.csv";
  std::string svg;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

int cmd_gen(const GenArgs& a) {
  BlobsSpec spec;
  spec.n_per_class = a.n_per_class;
  spec.n_classes = a.classes;
  spec.dim = a.dim;
  require(a.dim >= 1, "--dim must be >= 1");
  require(static_cast<int>(a.shift.size()) <= a.dim, "--shift has more entries than --dim");
  spec.shift = Vector::Zero(a.dim);
  for (std::size_t i = 0; i < a.shift.size(); ++i) spec.shift(static_cast<Index>(i)) = a.shift[i];
  spec.rotation = a.rotate;
  spec.spread = a.spread;
  spec.seed = a.seed;
  const DomainPair pair = in_stage("generate", [&] { return make_shifted_blobs(spec); });
  in_stage("write source", [&] { save_csv(a.out_src, pair.source); });
  in_stage("write target", [&] { save_csv(a.out_tgt, pair.target); });
  std::cout << "wrote " << a.out_src << " and " << a.out_tgt << " (" << pair.source.size() << " + "
            << pair.target.size() << " samples, d=" << a.dim << ")\n";
  return 0;
}

std::pair<int, int> parse_range(const std::string& text) {
  const auto dots = text.find("..");
  require(dots != std::string::npos, "--k-sweep expects min..max, got '" + text + "'");
  try {
    std::size_t used = 0;
    const int lo = std::stoi(text.substr(0, dots), &used);
    require(used == dots, "bad --k-sweep lower bound");
    const std::string hi_text = text.substr(dots + 2);
    const int hi = std::stoi(hi_text, &used);
    require(used == hi_text.size(), "bad --k-sweep upper bound");
    require(lo >= 1 && hi >= lo, "--k-sweep needs 1 <= min <= max");
    return {lo, hi};
  } catch (const std::logic_error& e) {
    if (dynamic_cast<const ValidationError*>(&e)) throw;
    throw ValidationError("--k-sweep expects min..max, got '" + text + "'");
  }
}

int cmd_fit(const FitArgs& a) {
  require(a.k > 0 || !a.k_sweep.empty(), "give --k >= 1 or --k-sweep min..max");
  const Dataset data = in_stage("load", [&] {
    return a.no_labels ? load_csv(a.data) : load_csv(a.data, a.label_column, LabelMode::Read);
  });
  EmConfig cfg;
  cfg.seed = a.seed;
  cfg.max_iter = a.max_iter;
  cfg.tol = a.tol;
  cfg.n_restarts = a.restarts;

  int k_lo = a.k, k_hi = a.k;
  if (!a.k_sweep.empty()) std::tie(k_lo, k_hi) = parse_range(a.k_sweep);
  Gmm best;
  double best_bic = std::numeric_limits<double>::infinity();
  int best_k = 0;
  for (int k = k_lo; k <= k_hi; ++k) {
    const EmResult r = in_stage("fit K=" + std::to_string(k), [&] { return em_fit(data, k, cfg); });
    const double b = bic(r.gmm, data.features);
    std::cout << "K=" << k << " loglik=" << fmt("%.6f", r.trace.back()) << " bic=" << fmt("%.4f", b) << '\n';
    if (b < best_bic) {
      best_bic = b;
      best = r.gmm;
      best_k = k;
    }
  }
  if (data.labeled()) best = in_stage("label components", [&] { return label_components(best, data).gmm; });
  in_stage("write", [&] { save_gmm(a.out, best); });
  std::cout << "wrote " << a.out << " (K=" << best_k << (k_lo != k_hi ? ", chosen by BIC" : "") << ")\n";
  return 0;
}

int cmd_adapt(const AdaptArgs& a) {
  ExperimentConfig cfg;
  cfg.task.name = "adapt";
  cfg.method = parse_method(a.method);
  cfg.k_src = a.k_src;
  cfg.k_tgt = a.k_tgt;
  cfg.epsilon = a.epsilon;
  cfg.seed = a.seed;
  cfg.standardize = !a.no_standardize;
  cfg.subsample = a.subsample;
  cfg.allow_large = a.allow_large;
  require(!a.epsilon || *a.epsilon > 0.0, "--epsilon must be positive");

  const Dataset source = in_stage("load source", [&] { return load_csv(a.src, a.label_column, LabelMode::Read); });
  // Target labels, when the file has them, are skipped unparsed.
  const Dataset target = in_stage("load target", [&] { return load_csv(a.tgt, a.label_column, LabelMode::Drop); });
  require(source.dim() == target.dim(), "source and target feature dimensions differ");

  MethodRun run = run_method(cfg, source, target.features);
  if (run.scaler && run.result.transported) run.result.transported->X = run.scaler->invert(run.result.transported->X);
  in_stage("write", [&] { write_adaptation(a.out, run.result); });
  std::cout << "wrote " << a.out << " (" << method_name(cfg.method);
  if (run.result.predicted_labels) std::cout << ", " << run.result.predicted_labels->size() << " target labels";
  if (run.result.transported) std::cout << ", " << run.result.transported->X.rows() << " labeled points";
  std::cout << ")\n";
  return 0;
}

int cmd_eval(const EvalArgs& a) {
  require(a.jobs >= 1, "--jobs must be >= 1");
  const GridConfig g = in_stage("config", [&] { return load_grid_config(a.config); });
  const GridReport rep = run_grid(g, a.jobs);
  in_stage("write", [&] { write_grid_outputs(a.out_dir, rep, g.record_wall_time); });

  std::cout << "task";
  for (const auto& m : rep.methods) std::cout << '\t' << m;
  std::cout << '\n';
  const std::size_t nm = rep.methods.size();
  for (std::size_t c = 0; c < rep.cells.size(); c += nm) {
    std::cout << rep.cells[c].task;
    for (std::size_t m = 0; m < nm; ++m) std::cout << '\t' << fmt("%.4f", rep.cells[c + m].accuracy);
    std::cout << '\n';
  }
  std::cout << "mean";
  for (double v : rep.mean_accuracy) std::cout << '\t' << fmt("%.4f", v);
  std::cout << "\nwrote " << a.out_dir << "/results.csv, table.csv, reports/\n";
  return 0;
}

int cmd_plot(const PlotArgs& a) {
  require(!a.src.empty() || !a.tgt.empty() || !a.transported.empty(),
          "give at least one of --src, --tgt, --transported");
  std::vector<PointSet> sets;
  auto add = [&](const std::string& path, const std::string& role, LabelMode mode) {
    if (path.empty()) return;
    const Dataset d = in_stage("load " + role, [&] { return load_csv(path, a.label_column, mode); });
    sets.push_back({role, d.features, d.labels});
  };
  add(a.src, "source", LabelMode::Read);
  add(a.tgt, "target", LabelMode::Drop);
  add(a.transported, "transported", LabelMode::Read);
  std::optional<std::filesystem::path> svg;
  if (!a.svg.empty()) svg = a.svg;
  in_stage("write", [&] { emit_plot_data(a.out, sets, svg); });
  std::cout << "wrote " << a.out << (svg ? " and " + a.svg : std::string()) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Domain adaptation with optimal transport between Gaussian mixtures"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a source/target pair of shifted Gaussian blobs");
  g->add_option("--n-per-class", gen.n_per_class, "Samples per class in each domain")->capture_default_str();
  g->add_option("--classes", gen.classes, "Number of classes")->capture_default_str();
  g->add_option("--dim", gen.dim, "Feature dimension")->capture_default_str();
  g->add_option("--shift", gen.shift, "Target translation, comma separated; missing entries are 0")
      ->delimiter(',')
      ->capture_default_str();
  g->add_option("--rotate", gen.rotate, "Target rotation in radians, first two dimensions")->capture_default_str();
  g->add_option("--spread", gen.spread, "Per-class standard deviation")->capture_default_str();
  g->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  g->add_option("--out-src", gen.out_src, "Source CSV path")->capture_default_str();
  g->add_option("--out-tgt", gen.out_tgt, "Target CSV path")->capture_default_str();

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "Fit a diagonal Gaussian mixture by EM and save it as JSON");
  f->add_option("--data", fit.data, "Input CSV")->required();
  f->add_option("--label-column", fit.label_column, "Label column used to label components")->capture_default_str();
  f->add_flag("--no-labels", fit.no_labels, "Treat every column as a feature");
  auto* k_opt = f->add_option("--k", fit.k, "Number of components");
  auto* sweep_opt = f->add_option("--k-sweep", fit.k_sweep, "Range min..max; keeps the K with the lowest BIC");
  k_opt->excludes(sweep_opt);
  f->add_option("--seed", fit.seed, "Random seed")->capture_default_str();
  f->add_option("--max-iter", fit.max_iter, "EM iterations per restart")->capture_default_str();
  f->add_option("--tol", fit.tol, "Stop when the mean log-likelihood gains less than this")->capture_default_str();
  f->add_option("--restarts", fit.restarts, "Number of k-means++ restarts")->capture_default_str();
  f->add_option("--out", fit.out, "Output JSON path")->capture_default_str();

  AdaptArgs ad;
  auto* a = app.add_subcommand("adapt", "Run one adaptation method on a source/target CSV pair");
  a->add_option("--method", ad.method, "One of: " + method_list())->required();
  a->add_option("--src", ad.src, "Labeled source CSV")->required();
  a->add_option("--tgt", ad.tgt, "Target CSV; a label column is ignored")->required();
  a->add_option("--label-column", ad.label_column, "Label column name")->capture_default_str();
  a->add_option("--k-src", ad.k_src, "Source mixture components (0: number of classes)")->capture_default_str();
  a->add_option("--k-tgt", ad.k_tgt, "Target mixture components (0: number of classes)")->capture_default_str();
  a->add_option("--epsilon", ad.epsilon, "Sinkhorn regularization (default 0.01 * mean cost)");
  a->add_option("--seed", ad.seed, "Random seed")->capture_default_str();
  a->add_flag("--no-standardize", ad.no_standardize, "Skip standardization with source statistics");
  a->add_option("--subsample", ad.subsample, "Per-domain sample cap for otda-emd and otda-sinkhorn")
      ->capture_default_str();
  a->add_flag("--allow-large", ad.allow_large, "Allow empirical plans above 4e6 entries");
  a->add_option("--out", ad.out, "Output CSV (points or index,label) plus a .json diagnostics file")
      ->capture_default_str();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Run an experiment grid from a JSON config");
  e->add_option("--config", ev.config, "Grid config JSON")->required();
  e->add_option("--out-dir", ev.out_dir, "Directory for results.csv, table.csv and reports/")->capture_default_str();
  e->add_option("--jobs", ev.jobs, "Grid cells run in parallel")->capture_default_str();

  PlotArgs pl;
  auto* p = app.add_subcommand("plot-data", "Write scatter data (2-D or PCA) as CSV and optionally SVG");
  p->add_option("--src", pl.src, "Source CSV");
  p->add_option("--tgt", pl.tgt, "Target CSV; labels are not read");
  p->add_option("--transported", pl.transported, "Adapted point CSV from 'adapt'");
  p->add_option("--label-column", pl.label_column, "Label column name")->capture_default_str();
  p->add_option("--out", pl.out, "Output CSV")->capture_default_str();
  p->add_option("--svg", pl.svg, "Optional SVG scatter path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 1;
  }

  std::string stage;
  try {
    if (*g) return stage = "gen", cmd_gen(gen);
    if (*f) return stage = "fit", cmd_fit(fit);
    if (*a) return stage = "adapt", cmd_adapt(ad);
    if (*e) return stage = "eval", cmd_eval(ev);
    if (*p) return stage = "plot-data", cmd_plot(pl);
  } catch (const ValidationError& err) {
    std::cerr << "gmmot " << stage << ": " << err.what() << '\n';
    return 1;
  } catch (const IoError& err) {
    std::cerr << "gmmot " << stage << ": " << err.what() << '\n';
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "gmmot " << stage << ": " << err.what() << '\n';
    return 2;
  }
  return 1;
}
