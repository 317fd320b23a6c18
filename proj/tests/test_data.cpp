#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "dlgan/data.hpp"
#include "dlgan/errors.hpp"
#include "dlgan/rng.hpp"
#include "oracles.hpp"

using namespace dlgan;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& contents) {
  const fs::path dir = fs::temp_directory_path() / "dlgan_tests";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  std::ofstream(p) << contents;
  return p;
}

RawSeries series(const Matrix& values) {
  RawSeries s;
  s.values = values;
  for (Eigen::Index j = 0; j < values.cols(); ++j) s.feature_names.push_back("f" + std::to_string(j));
  return s;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::Io;
}

}  // namespace

TEST_CASE("load_csv reads named numeric columns") {
  const auto p = temp_file("three.csv", "a,b\n1,2\n3,4\n5,6\n");
  RawSeries s = load_csv(p.string());
  CHECK(s.length() == 3);
  CHECK(s.features() == 2);
  CHECK(s.feature_names == std::vector<std::string>{"a", "b"});
  CHECK(s.values(2, 1) == 6);
}

TEST_CASE("load_csv drops unparseable rows and skips text columns") {
  std::string text = "date,x,y\n";
  for (int i = 0; i < 100; ++i) {
    text += "2020-01-" + std::to_string(i) + "," + (i == 40 ? std::string("n/a") : std::to_string(i)) + "," +
            std::to_string(2 * i) + "\n";
  }
  RawSeries s = load_csv(temp_file("dropped.csv", text).string());
  CHECK(s.length() == 99);
  CHECK(s.dropped_rows == 1);
  CHECK(s.feature_names == std::vector<std::string>{"x", "y"});
  CHECK(s.values(40, 0) == 41);
}

TEST_CASE("load_csv errors") {
  CHECK(kind_of([] { load_csv("/nonexistent/file.csv"); }) == ErrorKind::FileNotFound);
  const auto text = temp_file("text.csv", "a,b\nx,y\nz,w\n");
  CHECK(kind_of([&] { load_csv(text.string()); }) == ErrorKind::NoNumericColumns);
  const auto few = temp_file("few.csv", "a\n1\n2\n");
  CHECK(kind_of([&] { load_csv(few.string(), {.min_rows = 24}); }) == ErrorKind::EmptyAfterCleaning);
}

TEST_CASE("load_csv explicit column selection") {
  const auto p = temp_file("select.csv", "a,b,c\n1,2,3\n4,5,6\n");
  RawSeries s = load_csv(p.string(), {.feature_columns = {"c", "a"}});
  CHECK(s.feature_names == std::vector<std::string>{"c", "a"});
  CHECK(s.values(1, 0) == 6);
  CHECK(s.values(1, 1) == 4);
}

TEST_CASE("normalization examples") {
  Matrix x(3, 2);
  x << 2, 5, 4, 5, 6, 5;
  RawSeries raw = series(x);
  NormStats st = fit_normalizer(raw);
  CHECK(st.min(0) == 2);
  CHECK(st.max(0) == 6);
  CHECK(st.is_constant(1));
  Matrix n = normalize(x, st);
  CHECK(n(0, 0) == 0);
  CHECK(n(1, 0) == 0.5);
  CHECK(n(2, 0) == 1);
  for (int i = 0; i < 3; ++i) CHECK(n(i, 1) == 0.5);
  Matrix back = denormalize(n, st);
  CHECK(back(1, 0) == 4);
  CHECK(back(0, 1) == 5);
}

TEST_CASE("normalization matches a column scan on random data") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const auto rows = static_cast<Eigen::Index>(2 + rng.below(40));
    const auto cols = static_cast<Eigen::Index>(1 + rng.below(5));
    Matrix x = rng.uniform_matrix(rows, cols, -50, 50);
    if (trial % 7 == 0) x.col(0).setConstant(3.25);
    NormStats st = fit_normalizer(series(x));
    Matrix n = normalize(x, st);
    CHECK(oracle::max_abs_diff(oracle::minmax(oracle::to_grid(x)), n) <= 1e-12);
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (st.is_constant(j)) continue;
      CHECK((denormalize(n, st).col(j) - x.col(j)).cwiseAbs().maxCoeff() <= 1e-9);
      CHECK((normalize(denormalize(n, st), st).col(j) - n.col(j)).cwiseAbs().maxCoeff() <= 1e-9);
    }
  }
}

TEST_CASE("normalize clamps unseen data and checks the feature count") {
  Matrix fit(2, 1);
  fit << 0, 10;
  NormStats st = fit_normalizer(series(fit));
  Matrix x(2, 1);
  x << -5, 20;
  Matrix n = normalize(x, st);
  CHECK(n(0, 0) == 0);
  CHECK(n(1, 0) == 1);
  CHECK(kind_of([&] { normalize(Matrix::Zero(2, 3), st); }) == ErrorKind::FeatureCountMismatch);
  CHECK(kind_of([&] { denormalize(Matrix::Zero(2, 3), st); }) == ErrorKind::FeatureCountMismatch);
}

TEST_CASE("window counts and contents") {
  RawSeries s = series(Matrix::Random(10, 2));
  CHECK(make_windows(s, 4, 1).size() == 7);
  auto w3 = make_windows(s, 4, 3);
  REQUIRE(w3.size() == 3);
  CHECK(w3[0].origin == 0);
  CHECK(w3[1].origin == 3);
  CHECK(w3[2].origin == 6);
  CHECK(kind_of([&] { make_windows(s, 11, 1); }) == ErrorKind::SeriesTooShort);

  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto len = static_cast<Eigen::Index>(2 + rng.below(60));
    const auto t = static_cast<Eigen::Index>(2 + rng.below(static_cast<std::uint64_t>(len - 1)));
    const auto stride = static_cast<Eigen::Index>(1 + rng.below(6));
    Matrix x = rng.uniform_matrix(len, 2, 0, 1);
    auto w = make_windows(series(x), t, stride);
    CHECK(static_cast<Eigen::Index>(w.size()) == (len - t) / stride + 1);
    auto ref = oracle::windows(oracle::to_grid(x), static_cast<std::size_t>(t), static_cast<std::size_t>(stride));
    REQUIRE(ref.size() == w.size());
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(oracle::max_abs_diff(ref[i], w[i].values) == 0);
  }
}

TEST_CASE("time-major stacking round trip") {
  Rng rng(3);
  std::vector<Matrix> ws;
  for (int i = 0; i < 4; ++i) ws.push_back(rng.uniform_matrix(5, 3, 0, 1));
  Matrix tm = to_time_major(ws);
  CHECK(tm.rows() == 20);
  CHECK(tm.row(2 * 4 + 1) == ws[1].row(2));
  auto back = from_time_major(tm, 5, 4);
  for (int i = 0; i < 4; ++i) CHECK(back[i] == ws[i]);
}

TEST_CASE("batch iterator is a seeded permutation") {
  BatchIterator a(103, 16, 9), b(103, 16, 9), c(103, 16, 10);
  std::vector<std::size_t> ia, ib, ic, all;
  a.start_epoch(0);
  b.start_epoch(0);
  c.start_epoch(0);
  bool differs = false;
  std::size_t batches = 0;
  while (a.next(ia)) {
    REQUIRE(b.next(ib));
    REQUIRE(c.next(ic));
    CHECK(ia == ib);
    differs = differs || ia != ic;
    all.insert(all.end(), ia.begin(), ia.end());
    ++batches;
  }
  CHECK(batches == a.batches_per_epoch());
  CHECK(differs);
  CHECK(all.size() == 103);
  CHECK(std::set<std::size_t>(all.begin(), all.end()).size() == 103);
  a.start_epoch(1);
  REQUIRE(a.next(ia));
  b.start_epoch(0);
  REQUIRE(b.next(ib));
  CHECK(ia != ib);
}

TEST_CASE("window CSV round trip is exact") {
  Rng rng(4);
  std::vector<Matrix> ws;
  for (int i = 0; i < 3; ++i) ws.push_back(rng.uniform_matrix(4, 2, -1e3, 1e3));
  const auto p = fs::temp_directory_path() / "dlgan_tests" / "windows.csv";
  write_windows_csv(p.string(), ws, {"u", "v"});
  std::vector<std::string> names;
  auto back = read_windows_csv(p.string(), &names);
  CHECK(names == std::vector<std::string>{"u", "v"});
  REQUIRE(back.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(back[i] == ws[i]);
}

TEST_CASE("sine fixture is seeded and bounded") {
  RawSeries a = make_sine(200, 3, 1);
  RawSeries b = make_sine(200, 3, 1);
  RawSeries c = make_sine(200, 3, 2);
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);
  CHECK(a.values.cwiseAbs().maxCoeff() <= 1.0);
  Dataset d = prepare_dataset(a, 24, 1);
  CHECK(d.windows.size() == 177);
  for (const auto& w : d.windows) {
    CHECK(w.values.minCoeff() >= 0);
    CHECK(w.values.maxCoeff() <= 1);
  }
}
