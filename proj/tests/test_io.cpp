#include <gtest/gtest.h>

#include <filesystem>
#include <functional>
#include <limits>
#include <random>

#include <unistd.h>

#include "oracles.hpp"
#include "sfofr/error.hpp"
#include "sfofr/io.hpp"

using namespace sfofr;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sfofr_io_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void expect_parse_error(const std::function<void()>& f, const std::string& fragment) {
  try {
    f();
    ADD_FAILURE() << "expected ParseError containing '" << fragment << "'";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

}  // namespace

TEST(Io, FormatDoubleRoundTrips) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(-1e6, 1e6);
  for (int k = 0; k < 1000; ++k) {
    const double x = U(rng) * std::pow(10.0, k % 40 - 20);
    EXPECT_EQ(std::stod(format_double(x)), x);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
}

TEST(Io, CurvesRoundTripIsLossless) {
  std::mt19937_64 rng(2);
  const Vector g = Vector::LinSpaced(17, 0.0, 1.0);
  const FunctionalDataset d(g, oracle::random_matrix(5, 17, rng), {"a", "b", "unit 3", "d", "e"});
  const std::string text = curves_to_csv(d);
  const FunctionalDataset back = curves_from_csv(text);
  EXPECT_EQ(back.grid(), d.grid());
  EXPECT_EQ(back.values(), d.values());
  EXPECT_EQ(back.ids(), d.ids());
  EXPECT_EQ(curves_to_csv(back), text);

  const fs::path dir = scratch_dir("curves");
  write_curves_csv(dir / "nested" / "Y.csv", d);
  EXPECT_EQ(read_curves_csv(dir / "nested" / "Y.csv").values(), d.values());
  // No temporary files left behind.
  std::size_t count = 0;
  for (const auto& e : fs::directory_iterator(dir / "nested")) {
    ++count;
    EXPECT_EQ(e.path().filename(), "Y.csv");
  }
  EXPECT_EQ(count, 1u);
  fs::remove_all(dir);
}

TEST(Io, SingleCurveRoundTrip) {
  const Vector g = Vector::LinSpaced(6, 0.0, 1.0);
  const Vector v = g.array().sin();
  const auto [g2, v2] = curve_from_csv(curve_to_csv(g, v, "mean"));
  EXPECT_EQ(g2, g);
  EXPECT_EQ(v2, v);
  EXPECT_THROW(curve_from_csv("t,0,1\na,1,2\nb,3,4\n"), ParseError);
}

TEST(Io, CurveParseErrorsCarryLineNumbers) {
  expect_parse_error([] { curves_from_csv("", "Y.csv"); }, "Y.csv");
  expect_parse_error([] { curves_from_csv("x,0,0.5,1,1\n", "Y.csv"); }, "Y.csv:1:");
  expect_parse_error([] { curves_from_csv("t,0,0.3,0.6,1\n1,1,2,3,4\n2,1,2,3\n", "Y.csv"); }, "Y.csv:3:");
  expect_parse_error([] { curves_from_csv("t,0,0.3,0.6,1\n1,1,2,abc,4\n2,1,2,3,4\n", "Y.csv"); }, "Y.csv:2:");
  // Blank lines keep the physical line numbering.
  expect_parse_error([] { curves_from_csv("t,0,0.3,0.6,1\n\n1,1,2,3,4\n2,1,2,3,x\n", "Y.csv"); }, "Y.csv:4:");
  // Structural problems surface as data errors mentioning the file.
  try {
    curves_from_csv("t,0,0.3,0.2,1\n1,1,2,3,4\n2,1,2,3,4\n", "Y.csv");
    ADD_FAILURE() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("Y.csv"), std::string::npos);
  }
}

TEST(Io, MatrixRoundTrip) {
  std::mt19937_64 rng(3);
  const Matrix M = oracle::random_matrix(4, 3, rng, 1e-3);
  EXPECT_EQ(matrix_from_csv(matrix_to_csv(M)), M);
  EXPECT_EQ(matrix_from_csv(" 1, 2 \r\n3,4\n").rows(), 2);
  expect_parse_error([] { matrix_from_csv("1,2\n3\n", "m.csv"); }, "m.csv:2:");
  expect_parse_error([] { matrix_from_csv("1,2\n3,1e\n", "m.csv"); }, "m.csv:2:");
}

TEST(Io, WeightsRoundTripBothFormats) {
  std::mt19937_64 rng(4);
  const SpatialWeights W = SpatialWeights::from_dense(oracle::random_weights(9, rng, 0.3));
  for (auto f : {WeightsFormat::dense, WeightsFormat::triplet}) {
    const SpatialWeights back = weights_from_csv(weights_to_csv(W, f));
    EXPECT_EQ(back.dense(), W.dense());
    EXPECT_TRUE(back.normalized());
  }
  const std::string trip = weights_to_csv(W, WeightsFormat::triplet);
  EXPECT_EQ(trip.rfind("# units=9\ni,j,w\n", 0), 0u);
  EXPECT_EQ(weights_to_csv(weights_from_csv(trip), WeightsFormat::triplet), trip);
  // Isolated units survive through the unit count.
  const SpatialWeights sparse = SpatialWeights::from_triplets(5, {Triplet(0, 1, 1.0), Triplet(1, 0, 1.0)});
  const SpatialWeights sb = weights_from_csv(weights_to_csv(sparse, WeightsFormat::triplet));
  EXPECT_EQ(sb.size(), 5);
  EXPECT_EQ(sb.isolated_units(), (std::vector<Index>{2, 3, 4}));
}

TEST(Io, WeightsParseErrors) {
  expect_parse_error([] { weights_from_csv("# units=3\ni,j,w\n0,1,0.5\n0,1,0.5\n", "w.csv"); }, "w.csv:4:");
  expect_parse_error([] { weights_from_csv("# units=3\ni,j,w\n0,3,0.5\n", "w.csv"); }, "w.csv:3:");
  expect_parse_error([] { weights_from_csv("# units=3\n0,1,0.5\n", "w.csv"); }, "w.csv:2:");
  expect_parse_error([] { weights_from_csv("# n=3\ni,j,w\n", "w.csv"); }, "w.csv:1:");
  expect_parse_error([] { weights_from_csv("# units=3\ni,j,w\n-1,1,0.5\n", "w.csv"); }, "w.csv:3:");
  expect_parse_error([] { weights_from_csv("0,1\n1,0\n0,0\n", "w.csv"); }, "w.csv");
  EXPECT_THROW(weights_from_csv("# units=2\ni,j,w\n0,0,1\n"), DataError);
  EXPECT_THROW(weights_from_csv("0,-1\n1,0\n"), DataError);
}

TEST(Io, CoordsRoundTripAndHeader) {
  const Coordinates c = coords_from_csv("id,lat,lon\nA,51.5,-0.12\nB,-33.9,151.2\n");
  ASSERT_EQ(c.points.size(), 2u);
  EXPECT_EQ(c.ids[1], "B");
  EXPECT_EQ(c.points[1].lon, 151.2);
  const Coordinates bare = coords_from_csv("A,51.5,-0.12\nB,-33.9,151.2\n");
  EXPECT_EQ(bare.points.size(), 2u);
  const Coordinates back = coords_from_csv(coords_to_csv(c));
  EXPECT_EQ(back.ids, c.ids);
  EXPECT_EQ(back.points[0].lat, c.points[0].lat);
  expect_parse_error([] { coords_from_csv("A,95,0\n", "c.csv"); }, "c.csv:1:");
  expect_parse_error([] { coords_from_csv("id,lat,lon\nA,10,200\n", "c.csv"); }, "c.csv:2:");
  expect_parse_error([] { coords_from_csv("id,lat,lon\nA,10\n", "c.csv"); }, "c.csv:2:");
  expect_parse_error([] { coords_from_csv("id,lat,lon\n", "c.csv"); }, "c.csv");
}

TEST(Io, SurfaceRoundTrip) {
  std::mt19937_64 rng(5);
  const Vector u = Vector::LinSpaced(4, 0.0, 1.0);
  const Vector t = Vector::LinSpaced(3, 0.0, 1.0);
  for (auto kind : {SurfaceKind::rho, SurfaceKind::beta}) {
    const SurfaceEstimate s{kind, u, t, oracle::random_matrix(4, 3, rng)};
    const SurfaceEstimate back = surface_from_csv(surface_to_csv(s));
    EXPECT_EQ(back.kind, kind);
    EXPECT_EQ(back.row_grid, u);
    EXPECT_EQ(back.col_grid, t);
    EXPECT_EQ(back.values, s.values);
  }
  expect_parse_error([] { surface_from_csv("a,b,c\n0,0,1\n", "s.csv"); }, "s.csv:1:");
  expect_parse_error([] { surface_from_csv("u,t,value\n0,0,1\n0,1,2\n1,0,3\n", "s.csv"); }, "s.csv");
}

TEST(Io, ReadMissingFileIsDataError) {
  EXPECT_THROW(read_text("/nonexistent/definitely/missing.csv"), DataError);
}
