#include "gmmot/eval.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <random>
#include <sstream>

using namespace gmmot;

namespace {

struct Blobs2 {
  Matrix X;
  LabelVector y;
};

// Two isotropic blobs whose means are `gap` standard deviations apart.
Blobs2 two_blobs(Index n_per, double gap, std::mt19937_64& rng) {
  Blobs2 b{Matrix(2 * n_per, 2), LabelVector(2 * n_per)};
  b.X = oracle::random_normal(2 * n_per, 2, rng);
  for (Index i = 0; i < 2 * n_per; ++i) {
    b.y(i) = i < n_per ? 0 : 1;
    if (i >= n_per) b.X(i, 0) += gap;
  }
  return b;
}

ExperimentConfig blobs_config(Method m, double shift_x, double rotation) {
  ExperimentConfig cfg;
  cfg.task.name = "blobs";
  BlobsSpec b;
  b.rotation = rotation;
  b.shift = Vector::Zero(2);
  b.shift(0) = shift_x;
  cfg.task.blobs = b;
  cfg.method = m;
  return cfg;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("classifier spec parsing") {
  CHECK(ClassifierSpec::parse("knn").name() == "knn:1");
  CHECK(ClassifierSpec::parse("knn:5").k == 5);
  CHECK(ClassifierSpec::parse("knn:5").name() == "knn:5");
  CHECK(ClassifierSpec::parse("logreg").kind == ClassifierSpec::Kind::LogReg);
  CHECK(ClassifierSpec::parse("logreg").name() == "logreg");
  CHECK_THROWS_AS(ClassifierSpec::parse("svm"), ValidationError);
  CHECK_THROWS_AS(ClassifierSpec::parse("knn:0"), ValidationError);
  CHECK_THROWS_AS(ClassifierSpec::parse("knn:x"), ValidationError);
}

TEST_CASE("1-NN reproduces its training labels") {
  std::mt19937_64 rng(1);
  const Matrix X = oracle::random_normal(100, 3, rng);
  LabelVector y(100);
  for (Index i = 0; i < 100; ++i) y(i) = static_cast<int>(rng() % 4);
  const auto clf = train_classifier(X, y, 4, ClassifierSpec::parse("knn:1"));
  CHECK(accuracy(clf.predict(X), y) == 1.0);
}

TEST_CASE("k-NN against a brute-force vote") {
  std::mt19937_64 rng(2);
  const Matrix X = oracle::random_normal(60, 2, rng);
  LabelVector y(60);
  for (Index i = 0; i < 60; ++i) y(i) = static_cast<int>(rng() % 3);
  const Matrix Q = oracle::random_normal(40, 2, rng);
  const auto clf = train_classifier(X, y, 3, ClassifierSpec::parse("knn:5"));
  const LabelVector pred = clf.predict(Q);
  const Matrix D = oracle::sq_dist_loop(Q, X);
  for (Index q = 0; q < Q.rows(); ++q) {
    std::vector<Index> order(60);
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return D(q, a) < D(q, b); });
    std::vector<int> votes(3, 0);
    for (int k = 0; k < 5; ++k) ++votes[y(order[k])];
    const int expect = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    CHECK(pred(q) == expect);
  }
}

TEST_CASE("k-NN tie goes to the lowest class index") {
  Matrix X(2, 1);
  X << -1.0, 1.0;
  LabelVector y(2);
  y << 1, 0;
  const auto clf = train_classifier(X, y, 2, ClassifierSpec::parse("knn:2"));
  Matrix Q(1, 1);
  Q << 0.0;
  CHECK(clf.predict(Q)(0) == 0);
}

TEST_CASE("k larger than the training set is rejected") {
  const Matrix X = Matrix::Zero(3, 2);
  const LabelVector y = LabelVector::Zero(3);
  CHECK_THROWS_AS(train_classifier(X, y, 1, ClassifierSpec::parse("knn:4")), ValidationError);
  CHECK_NOTHROW(train_classifier(X, y, 1, ClassifierSpec::parse("knn:3")));
}

TEST_CASE("logistic regression separates 4-sigma blobs") {
  std::mt19937_64 rng(3);
  const Blobs2 b = two_blobs(200, 8.0, rng);  // margin of 4 sigma on each side of the midpoint
  const auto clf = train_classifier(b.X, b.y, 2, ClassifierSpec::parse("logreg"), 0);
  CHECK(accuracy(clf.predict(b.X), b.y) >= 0.99);
  const auto again = train_classifier(b.X, b.y, 2, ClassifierSpec::parse("logreg"), 0);
  CHECK(std::get<LogRegModel>(again.model()).W == std::get<LogRegModel>(clf.model()).W);
}

TEST_CASE("classes absent from training are never predicted") {
  std::mt19937_64 rng(4);
  const Blobs2 b = two_blobs(50, 6.0, rng);
  for (const char* spec : {"knn:3", "logreg"}) {
    const auto clf = train_classifier(b.X, b.y, 4, ClassifierSpec::parse(spec));
    const LabelVector pred = clf.predict(oracle::random_normal(200, 2, rng) * 10.0);
    CHECK(pred.maxCoeff() <= 1);
    CHECK(pred.minCoeff() >= 0);
  }
}

TEST_CASE("accuracy examples") {
  LabelVector a(4), b(4), c(4);
  a << 0, 1, 2, 3;
  b << 3, 2, 1, 0;
  c << 0, 1, 0, 0;
  CHECK(accuracy(a, a) == 1.0);
  CHECK(accuracy(a, b) == 0.0);
  CHECK(accuracy(a, c) == 0.5);
  CHECK_THROWS_AS(accuracy(a, LabelVector::Zero(3)), ValidationError);
}

TEST_CASE("method names") {
  for (Method m : kAllMethods) CHECK(parse_method(method_name(m)) == m);
  CHECK(method_list() ==
        "source-only, otda-emd, otda-sinkhorn, otda-linear, gmm-otda-m, gmm-otda-e, gmm-otda-t");
  try {
    parse_method("gmm-otda-x");
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("gmm-otda-t") != std::string::npos);
  }
}

TEST_CASE("run_experiment examples") {
  SUBCASE("source-only without shift") {
    const auto r = run_experiment(blobs_config(Method::SourceOnly, 0.0, 0.0));
    CHECK(r.accuracy >= 0.95);
    CHECK(r.method == "source-only");
    CHECK(r.n_source == 900);
    CHECK(r.n_target == 900);
  }
  SUBCASE("gmm-otda-m fixes the rotated and shifted task") {
    const auto adapted = run_experiment(blobs_config(Method::GmmOtdaM, 5.0, M_PI / 4));
    const auto baseline = run_experiment(blobs_config(Method::SourceOnly, 5.0, M_PI / 4));
    CHECK(adapted.accuracy >= 0.95);
    CHECK(baseline.accuracy <= 0.75);
    CHECK(adapted.k_src == 3);
    CHECK(adapted.k_tgt == 3);
    CHECK(adapted.diagnostics.plan_support >= 3);
  }
  SUBCASE("same config twice gives the same report") {
    for (Method m : {Method::GmmOtdaE, Method::OtdaSinkhorn}) {
      const auto cfg = blobs_config(m, 2.0, 0.3);
      CHECK(to_json(run_experiment(cfg), false).dump() == to_json(run_experiment(cfg), false).dump());
    }
  }
}

TEST_CASE("run_experiment rejects unlabeled domains with the stage name") {
  TempDir dir;
  write_text(dir / "s.csv", "a,b\n0,1\n1,0\n");
  ExperimentConfig cfg;
  cfg.task.name = "csv";
  cfg.task.source_csv = dir / "s.csv";
  cfg.task.target_csv = dir / "s.csv";
  try {
    run_experiment(cfg);
    FAIL("expected an error");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).rfind("load: ", 0) == 0);
  }
  cfg.task.source_csv = dir / "missing.csv";
  CHECK_THROWS_AS(run_experiment(cfg), IoError);
}

TEST_CASE("too few components only warns") {
  auto cfg = blobs_config(Method::GmmOtdaM, 0.0, 0.0);
  cfg.k_src = 2;
  cfg.k_tgt = 2;
  const auto r = run_experiment(cfg);
  CHECK(r.k_src == 2);
  CHECK(r.accuracy >= 0.0);
  CHECK(r.accuracy <= 1.0);
}

TEST_CASE("grid config parsing") {
  TempDir dir;
  const auto j = nlohmann::ordered_json::parse(R"({
    "schema": 1, "seed": 7, "classifier": "knn:3", "methods": ["source-only", "gmm-otda-t"],
    "em": {"n_restarts": 1},
    "tasks": [
      {"name": "b", "blobs": {"n_per_class": 20, "shift": [1, 2], "rotation": 0.5}},
      {"name": "c", "source_csv": "s.csv", "target_csv": "/abs/t.csv", "label_column": "y"}
    ]})");
  const GridConfig g = parse_grid_config(j, dir.path());
  CHECK(g.defaults.seed == 7);
  CHECK(g.defaults.classifier.name() == "knn:3");
  CHECK(g.defaults.em.n_restarts == 1);
  CHECK(g.methods == std::vector<Method>{Method::SourceOnly, Method::GmmOtdaT});
  REQUIRE(g.tasks.size() == 2);
  REQUIRE(g.tasks[0].blobs);
  CHECK(g.tasks[0].blobs->n_per_class == 20);
  CHECK(g.tasks[0].blobs->shift(1) == 2.0);
  CHECK(g.tasks[1].source_csv == dir.path() / "s.csv");
  CHECK(g.tasks[1].target_csv == std::filesystem::path("/abs/t.csv"));
  CHECK(g.tasks[1].label_column == "y");
  CHECK_FALSE(g.record_wall_time);

  CHECK_THROWS_AS(parse_grid_config(nlohmann::ordered_json::parse(R"({"tasks": []})")), ValidationError);
  CHECK_THROWS_AS(parse_grid_config(nlohmann::ordered_json::parse(R"({"schema": 2, "tasks": [{"name": "x"}]})")),
                  ValidationError);
  CHECK_THROWS_AS(
      parse_grid_config(nlohmann::ordered_json::parse(R"({"methods": ["nope"], "tasks": [{"name": "x"}]})")),
      ValidationError);
  CHECK_THROWS_AS(parse_grid_config(nlohmann::ordered_json::parse(R"({"tasks": [{"blobs": {}}]})")),
                  ValidationError);

  write_text(dir / "bad.json", "{ not json");
  CHECK_THROWS_AS(load_grid_config(dir / "bad.json"), IoError);
  CHECK_THROWS_AS(load_grid_config(dir / "none.json"), IoError);
}

TEST_CASE("grid outputs") {
  TempDir dir;
  GridConfig g = parse_grid_config(nlohmann::ordered_json::parse(R"({
    "methods": ["source-only", "otda-linear", "gmm-otda-m"],
    "tasks": [
      {"name": "flat", "blobs": {"n_per_class": 40}},
      {"name": "moved", "blobs": {"n_per_class": 40, "shift": [3, 0], "rotation": 0.4, "seed": 2}}
    ]})"));
  const GridReport rep = run_grid(g, 2);
  REQUIRE(rep.cells.size() == 6);
  CHECK(rep.cells[0].task == "flat");
  CHECK(rep.cells[4].method == "otda-linear");
  for (std::size_t m = 0; m < 3; ++m) {
    const double mean = (rep.cells[m].accuracy + rep.cells[3 + m].accuracy) / 2.0;
    CHECK(std::abs(rep.mean_accuracy[m] - mean) <= 1e-12);
  }
  // Threads do not change the numbers.
  const GridReport serial = run_grid(g, 1);
  for (std::size_t c = 0; c < 6; ++c) CHECK(serial.cells[c].accuracy == rep.cells[c].accuracy);

  write_grid_outputs(dir.path(), rep, false);
  const auto results = split_lines(read_text(dir / "results.csv"));
  REQUIRE(results.size() == 7);
  CHECK(results[0] == "task,method,accuracy,seed,wall_ms,K_src,K_tgt,classifier");
  CHECK(results[1].rfind("flat,source-only,", 0) == 0);
  CHECK(results[1].find(",0,0,3,3,knn:1") != std::string::npos);

  const auto table = split_lines(read_text(dir / "table.csv"));
  REQUIRE(table.size() == 4);
  CHECK(table[0] == "task,source-only,otda-linear,gmm-otda-m");
  CHECK(table[3].rfind("mean,", 0) == 0);
  // Mean row parses back to the arithmetic mean of the task rows.
  auto cells_of = [](const std::string& line) {
    std::vector<double> v;
    std::istringstream in(line.substr(line.find(',') + 1));
    for (std::string tok; std::getline(in, tok, ',');) v.push_back(std::stod(tok));
    return v;
  };
  const auto r1 = cells_of(table[1]), r2 = cells_of(table[2]), mean = cells_of(table[3]);
  for (std::size_t m = 0; m < 3; ++m) CHECK(std::abs(mean[m] - (r1[m] + r2[m]) / 2.0) <= 1e-12);

  const auto report = nlohmann::json::parse(read_text(dir / "reports" / "moved__gmm-otda-m.json"));
  CHECK(report["schema"] == 1);
  CHECK(report["method"] == "gmm-otda-m");
  CHECK_FALSE(report.contains("wall_ms"));
  CHECK(report["accuracy"].get<double>() == rep.cells[5].accuracy);

  write_grid_outputs(dir / "again", run_grid(g, 1), false);
  CHECK(read_text(dir / "results.csv") == read_text(dir / "again" / "results.csv"));
  CHECK(read_text(dir / "table.csv") == read_text(dir / "again" / "table.csv"));
}

TEST_CASE("grid errors carry the failing stage") {
  GridConfig g = parse_grid_config(nlohmann::ordered_json::parse(R"({
    "methods": ["source-only"],
    "tasks": [{"name": "broken", "source_csv": "/nonexistent/s.csv", "target_csv": "/nonexistent/t.csv"}]})"));
  try {
    run_grid(g);
    FAIL("expected an error");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).rfind("load broken: ", 0) == 0);
  }
}

TEST_CASE("project_2d passes 2-D data through") {
  std::mt19937_64 rng(5);
  const Matrix X = oracle::random_normal(30, 2, rng);
  const Projection p = project_2d(X);
  CHECK_FALSE(p.projected);
  CHECK(p.xy == X);
  CHECK(p.variance_captured == 1.0);
}

TEST_CASE("project_2d captures the leading principal plane") {
  std::mt19937_64 rng(6);
  Matrix X = oracle::random_normal(400, 5, rng);
  X.col(0) *= 5.0;
  X.col(3) *= 3.0;
  const Projection p = project_2d(X);
  REQUIRE(p.projected);

  const Matrix Xc = X.rowwise() - X.colwise().mean();
  const Matrix S = Xc.transpose() * Xc / 400.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(S);
  const Vector ev = es.eigenvalues();  // ascending
  const double expect = (ev(4) + ev(3)) / ev.sum();
  CHECK(p.variance_captured == doctest::Approx(expect).epsilon(1e-8));
  CHECK((p.basis.transpose() * p.basis - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-8);

  // Sum of squared pairwise distances shrinks by exactly the captured fraction.
  const double before = oracle::sq_dist_loop(X, X).sum();
  const double after = oracle::sq_dist_loop(p.xy, p.xy).sum();
  CHECK(after / before == doctest::Approx(p.variance_captured).epsilon(1e-8));
}

TEST_CASE("emit_plot_data files") {
  TempDir dir;
  SUBCASE("empty input") {
    emit_plot_data(dir / "empty.csv", {});
    CHECK(read_text(dir / "empty.csv") == "x,y,label,role\n");
    const auto meta = nlohmann::json::parse(read_text(dir / "empty.meta.json"));
    CHECK(meta["n"] == 0);
  }
  SUBCASE("two roles with svg") {
    Matrix A(2, 2), B(1, 2);
    A << 0, 1, 2, 3;
    B << 4, 5;
    LabelVector y(2);
    y << 0, 1;
    emit_plot_data(dir / "p.csv", {{"source", A, y}, {"target", B, std::nullopt}}, dir / "p.svg");
    const auto lines = split_lines(read_text(dir / "p.csv"));
    REQUIRE(lines.size() == 4);
    CHECK(lines[1] == "0,1,0,source");
    CHECK(lines[2] == "2,3,1,source");
    CHECK(lines[3] == "4,5,-1,target");
    const std::string svg = read_text(dir / "p.svg");
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
    const auto meta = nlohmann::json::parse(read_text(dir / "p.meta.json"));
    CHECK(meta["projected"] == false);
    CHECK(meta["n"] == 3);
  }
  SUBCASE("mismatched dimensions") {
    CHECK_THROWS_AS(emit_plot_data(dir / "x.csv", {{"source", Matrix::Zero(2, 2), std::nullopt},
                                                   {"target", Matrix::Zero(2, 3), std::nullopt}}),
                    ValidationError);
  }
}

TEST_CASE("write_file_atomic leaves no temporary") {
  TempDir dir;
  write_file_atomic(dir / "a.txt", "hello\n");
  CHECK(read_text(dir / "a.txt") == "hello\n");
  CHECK_FALSE(std::filesystem::exists(dir / "a.txt.tmp"));
  CHECK_THROWS_AS(write_file_atomic(dir / "no" / "such" / "a.txt", "x"), IoError);
}
