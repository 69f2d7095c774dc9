#include "gmmot/data.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cmath>

using namespace gmmot;

TEST_CASE("load_csv remaps labels by sorted order") {
  TempDir tmp;
  const auto p = write_text(tmp / "a.csv", "a,b,y\n1,2,5\n3,4,5\n5,6,9\n");
  const Dataset d = load_csv(p, "y");
  CHECK(d.size() == 3);
  CHECK(d.dim() == 2);
  REQUIRE(d.labeled());
  CHECK(d.n_classes == 2);
  CHECK((*d.labels)(0) == 0);
  CHECK((*d.labels)(1) == 0);
  CHECK((*d.labels)(2) == 1);
  CHECK(d.features(2, 1) == 6.0);

  SUBCASE("numeric order, not text order") {
    const auto q = write_text(tmp / "b.csv", "x,y\n0,10\n1,9\n2,100\n");
    const Dataset e = load_csv(q, "y");
    CHECK((*e.labels)(0) == 1);
    CHECK((*e.labels)(1) == 0);
    CHECK((*e.labels)(2) == 2);
  }
  SUBCASE("string labels sort lexicographically") {
    const auto q = write_text(tmp / "c.csv", "x,cls\n0,inner\n1,ball\n2,outer\n3,ball\n");
    const Dataset e = load_csv(q, "cls");
    CHECK(e.n_classes == 3);
    CHECK((*e.labels)(0) == 1);
    CHECK((*e.labels)(1) == 0);
    CHECK((*e.labels)(2) == 2);
    CHECK((*e.labels)(3) == 0);
  }
}

TEST_CASE("load_csv without a label column keeps every column as a feature") {
  TempDir tmp;
  const auto p = write_text(tmp / "a.csv", "a,b,y\n1,2,5\n3,4,5\n");
  const Dataset d = load_csv(p);
  CHECK_FALSE(d.labeled());
  CHECK(d.dim() == 3);

  const Dataset dropped = load_csv(p, "y", LabelMode::Drop);
  CHECK_FALSE(dropped.labeled());
  CHECK(dropped.dim() == 2);

  const auto unlabeled = write_text(tmp / "u.csv", "a,b\n1,2\n");
  CHECK(load_csv(unlabeled, "label", LabelMode::Drop).dim() == 2);
}

TEST_CASE("load_csv errors") {
  TempDir tmp;
  CHECK_THROWS_AS(load_csv(write_text(tmp / "nan.csv", "a,b\n1,NaN\n")), ValidationError);
  CHECK_THROWS_AS(load_csv(write_text(tmp / "inf.csv", "a,b\n1,inf\n")), ValidationError);
  CHECK_THROWS_AS(load_csv(write_text(tmp / "empty.csv", "")), ValidationError);
  CHECK_THROWS_AS(load_csv(write_text(tmp / "header.csv", "a,b\n")), ValidationError);
  CHECK_THROWS_AS(load_csv(tmp / "missing.csv"), IoError);
  CHECK_THROWS_AS(load_csv(write_text(tmp / "nolabel.csv", "a,b\n1,2\n"), "y"), IoError);
  CHECK_THROWS_AS(load_csv(write_text(tmp / "ragged.csv", "a,b\n1,2\n3\n")), IoError);

  try {
    load_csv(write_text(tmp / "bad.csv", "a,b\n1,2\n3,x4\n"));
    FAIL("expected an error");
  } catch (const IoError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 2") != std::string::npos);
    CHECK(msg.find("'b'") != std::string::npos);
  }
}

TEST_CASE("save_csv and load_csv round trip") {
  TempDir tmp;
  std::mt19937_64 rng(1);
  Matrix X = oracle::random_normal(25, 4, rng) * 1e3;
  X(0, 0) = 1e-300;
  X(1, 1) = -0.1;
  LabelVector y(25);
  for (Index i = 0; i < 25; ++i) y(i) = static_cast<int>(i % 3);
  const Dataset d = make_dataset(X, y, 3);
  const auto path = tmp / "rt.csv";
  save_csv(path, d);

  const Dataset back = load_csv(path, "label");
  CHECK((back.features - X).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(*back.labels == y);
  CHECK(back.n_classes == 3);

  const auto meta = nlohmann::json::parse(read_text(tmp / "rt.meta.json"));
  CHECK(meta["n"] == 25);
  CHECK(meta["d"] == 4);
  CHECK(meta["n_classes"] == 3);
}

TEST_CASE("standardize examples") {
  SUBCASE("two-point column") {
    Matrix X(2, 1);
    X << 1, 3;
    const auto s = standardize(make_dataset(X));
    CHECK(s.params.mean(0) == 2.0);
    CHECK(s.params.scale(0) == 1.0);
    CHECK(s.train.features(0, 0) == -1.0);
    CHECK(s.train.features(1, 0) == 1.0);
    CHECK(s.others.empty());
  }
  SUBCASE("constant column clamps the scale") {
    Matrix X(3, 2);
    X << 4, 1, 4, 2, 4, 3;
    const auto s = standardize(make_dataset(X));
    CHECK(s.params.scale(0) == StandardizationParams::kScaleFloor);
    CHECK(s.train.features.col(0).cwiseAbs().maxCoeff() == 0.0);
    // Population convention: var of {1,2,3} is 2/3.
    CHECK(s.params.scale(1) == doctest::Approx(std::sqrt(2.0 / 3.0)));
  }
  SUBCASE("others get the train map") {
    Matrix X(2, 1), Y(1, 1);
    X << 1, 3;
    Y << 5;
    const auto s = standardize(make_dataset(X), {make_dataset(Y)});
    REQUIRE(s.others.size() == 1);
    CHECK(s.others[0].features(0, 0) == 3.0);
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(standardize(make_dataset(Matrix::Ones(2, 2)), {make_dataset(Matrix::Ones(2, 3))}),
                    ValidationError);
  }
}

TEST_CASE("standardize properties") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 10; ++t) {
    Matrix X = oracle::random_normal(40, 5, rng);
    X.col(2) = X.col(2) * 250.0 + Vector::Constant(40, -17.0);
    const auto s = standardize(make_dataset(X));
    const Matrix& Z = s.train.features;
    CHECK(Z.colwise().mean().cwiseAbs().maxCoeff() < 1e-12);
    for (Index j = 0; j < 5; ++j) {
      double var = 0.0;
      for (Index i = 0; i < 40; ++i) var += Z(i, j) * Z(i, j);
      CHECK(var / 40.0 == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK((s.params.invert(Z) - X).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("make_shifted_blobs") {
  BlobsSpec spec;
  spec.n_per_class = 50;
  spec.seed = 4;

  SUBCASE("deterministic") {
    const auto a = make_shifted_blobs(spec), b = make_shifted_blobs(spec);
    CHECK(a.source.features == b.source.features);
    CHECK(a.target.features == b.target.features);
    CHECK(*a.target.labels == *b.target.labels);
    spec.seed = 5;
    CHECK(make_shifted_blobs(spec).source.features != a.source.features);
  }
  SUBCASE("shapes and labels") {
    spec.dim = 4;
    spec.n_classes = 5;
    const auto d = make_shifted_blobs(spec);
    CHECK(d.source.size() == 250);
    CHECK(d.target.dim() == 4);
    CHECK(d.source.n_classes == 5);
    CHECK(class_frequencies(*d.target.labels, 5).isApprox(Vector::Constant(5, 0.2)));
  }
  SUBCASE("identity shift gives matching class means") {
    spec.n_per_class = 2000;
    const auto d = make_shifted_blobs(spec);
    for (int c = 0; c < 3; ++c) {
      RowVector ms = RowVector::Zero(2), mt = RowVector::Zero(2);
      for (Index i = 0; i < d.source.size(); ++i)
        if ((*d.source.labels)(i) == c) ms += d.source.features.row(i);
      for (Index i = 0; i < d.target.size(); ++i)
        if ((*d.target.labels)(i) == c) mt += d.target.features.row(i);
      // Standard error per coordinate is sqrt(2/2000) ~ 0.032.
      CHECK((ms - mt).norm() / 2000.0 < 0.15);
      const double angle = 2.0 * M_PI * c / 3.0;
      CHECK(std::abs(ms(0) / 2000.0 - 4.0 * std::cos(angle)) < 0.1);
    }
  }
  SUBCASE("rotation by pi swaps two antipodal classes") {
    spec.n_classes = 2;
    spec.n_per_class = 2000;
    spec.rotation = M_PI;
    const auto d = make_shifted_blobs(spec);
    RowVector m0 = RowVector::Zero(2), t0 = RowVector::Zero(2);
    for (Index i = 0; i < d.source.size(); ++i)
      if ((*d.source.labels)(i) == 0) m0 += d.source.features.row(i) / 2000.0;
    for (Index i = 0; i < d.target.size(); ++i)
      if ((*d.target.labels)(i) == 0) t0 += d.target.features.row(i) / 2000.0;
    RowVector m1 = -m0;
    CHECK((t0 - m1).norm() < 0.15);
    CHECK((t0 + m0).norm() < 0.15);
  }
  SUBCASE("shift translates the target") {
    spec.n_per_class = 2000;
    spec.shift = Vector(2);
    spec.shift << 5, -1;
    const auto d = make_shifted_blobs(spec);
    const RowVector delta = d.target.features.colwise().mean() - d.source.features.colwise().mean();
    CHECK(delta(0) == doctest::Approx(5.0).epsilon(0.02));
    CHECK(delta(1) == doctest::Approx(-1.0).epsilon(0.1));
  }
  SUBCASE("invalid sizes") {
    spec.dim = 1;
    CHECK_THROWS_AS(make_shifted_blobs(spec), ValidationError);
    spec.dim = 2;
    spec.n_per_class = 0;
    CHECK_THROWS_AS(make_shifted_blobs(spec), ValidationError);
    spec.n_per_class = 3;
    spec.shift = Vector::Zero(3);
    CHECK_THROWS_AS(make_shifted_blobs(spec), ValidationError);
  }
}

TEST_CASE("subsample_indices") {
  const auto all = subsample_indices(10, 20, 0);
  CHECK(all.size() == 10);
  CHECK(all.front() == 0);
  CHECK(all.back() == 9);

  const auto some = subsample_indices(1000, 100, 7);
  CHECK(some.size() == 100);
  CHECK(std::is_sorted(some.begin(), some.end()));
  CHECK(std::adjacent_find(some.begin(), some.end()) == some.end());
  CHECK(some == subsample_indices(1000, 100, 7));
  CHECK(some != subsample_indices(1000, 100, 8));
}

TEST_CASE("one_hot and class frequencies") {
  LabelVector y(4);
  y << 0, 2, 2, 1;
  const Matrix Y = one_hot(y, 3);
  CHECK(Y.rowwise().sum().isOnes());
  CHECK(Y(1, 2) == 1.0);
  const Vector f = class_frequencies(y, 3);
  CHECK(f(2) == 0.5);
  CHECK(f.sum() == doctest::Approx(1.0));
  CHECK_THROWS_AS(one_hot(y, 2), ValidationError);
  CHECK_THROWS_AS(make_dataset(Matrix::Ones(4, 1), y, 2), ValidationError);
}
