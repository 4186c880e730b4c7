#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "sfofr/error.hpp"
#include "sfofr/spatial.hpp"

using namespace sfofr;

TEST(Weights, InverseDistanceForm) {
  const Index n = 7;
  const Matrix W = inverse_distance_weights(n).dense();
  for (Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Index j = 0; j < n; ++j)
      if (j != i) s += 1.0 / (1.0 + std::abs(static_cast<double>(i - j)));
    for (Index j = 0; j < n; ++j) {
      const double expect = j == i ? 0.0 : 1.0 / (1.0 + std::abs(static_cast<double>(i - j))) / s;
      EXPECT_NEAR(W(i, j), expect, 1e-15);
    }
  }
}

TEST(Weights, ExponentialForm) {
  const Index n = 6;
  const double d = 0.7;
  const SpatialWeights w = exponential_weights(n, d);
  EXPECT_TRUE(w.normalized());
  EXPECT_EQ(w.kind(), WeightKind::exponential);
  const Matrix W = w.dense();
  // Ratios within a row follow the kernel.
  EXPECT_NEAR(W(0, 2) / W(0, 1), std::exp(-d), 1e-14);
  EXPECT_NEAR(W(3, 0) / W(3, 2), std::exp(-2.0 * d), 1e-14);
  EXPECT_EQ(W.diagonal().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_THROW(exponential_weights(n, 0.0), ParameterError);
  EXPECT_THROW(exponential_weights(n, -1.0), ParameterError);
  EXPECT_THROW(exponential_weights(1, 1.0), ParameterError);
}

TEST(Weights, ValidationRejectsBadEntries) {
  Matrix W = Matrix::Zero(3, 3);
  W(0, 1) = -0.5;
  EXPECT_THROW(SpatialWeights::from_dense(W), DataError);
  W(0, 1) = 0.5;
  W(2, 2) = 0.1;
  EXPECT_THROW(SpatialWeights::from_dense(W), DataError);
  W(2, 2) = 0.0;
  W(1, 0) = std::nan("");
  EXPECT_THROW(SpatialWeights::from_dense(W), DataError);
  EXPECT_THROW(SpatialWeights::from_dense(Matrix::Zero(2, 3)), DataError);
  EXPECT_THROW(SpatialWeights::from_triplets(3, {Triplet(0, 3, 1.0)}), DataError);
  EXPECT_THROW(SpatialWeights::from_triplets(3, {Triplet(1, 1, 1.0)}), DataError);
}

TEST(Weights, DenseAndSparseStorageAgree) {
  std::mt19937_64 rng(21);
  const Matrix D = oracle::random_weights(12, rng, 0.3);
  const SpatialWeights a = SpatialWeights::from_dense(D, WeightKind::custom, WeightStorage::dense);
  const SpatialWeights b = SpatialWeights::from_dense(D, WeightKind::custom, WeightStorage::sparse);
  EXPECT_FALSE(a.is_sparse());
  EXPECT_TRUE(b.is_sparse());
  const Matrix M = oracle::random_matrix(12, 3, rng);
  EXPECT_LT((a.multiply(M) - D * M).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((b.multiply(M) - D * M).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((b.multiply_transpose(M) - D.transpose() * M).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((b.column_sq_norms() - (D.transpose() * D).diagonal()).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(a.inf_norm(), 1.0, 1e-14);
  EXPECT_NEAR(b.inf_norm(), 1.0, 1e-14);
  EXPECT_TRUE(a.normalized());
  EXPECT_TRUE(b.normalized());
  EXPECT_EQ(b.dense(), D);
  EXPECT_EQ(a.coeff(2, 5), D(2, 5));
  EXPECT_EQ(b.coeff(2, 5), D(2, 5));
  const SpatialWeights c = SpatialWeights::from_triplets(12, b.triplets());
  EXPECT_EQ(c.dense(), D);
}

TEST(Weights, LargeMatricesDefaultToSparse) {
  EXPECT_FALSE(inverse_distance_weights(10).is_sparse());
  const SpatialWeights big = SpatialWeights::from_triplets(SpatialWeights::kDenseLimit + 1, {Triplet(0, 1, 1.0)});
  EXPECT_TRUE(big.is_sparse());
}

TEST(Weights, RowNormalizeKeepsIsolatedUnits) {
  Matrix W = Matrix::Zero(4, 4);
  W(0, 1) = 2.0;
  W(0, 2) = 2.0;
  W(1, 0) = 5.0;
  W(3, 0) = 1.0;
  W(3, 1) = 3.0;
  for (auto storage : {WeightStorage::dense, WeightStorage::sparse}) {
    const SpatialWeights raw = SpatialWeights::from_dense(W, WeightKind::custom, storage);
    EXPECT_FALSE(raw.normalized());
    const SpatialWeights n = row_normalize(raw);
    EXPECT_TRUE(n.normalized());
    EXPECT_EQ(n.isolated_units(), std::vector<Index>{2});
    EXPECT_DOUBLE_EQ(n.coeff(3, 1), 0.75);
    EXPECT_EQ(n.row_sums()[2], 0.0);
  }
  EXPECT_TRUE(SpatialWeights::from_triplets(3, {}).is_zero());
}

TEST(Haversine, KnownDistances) {
  EXPECT_NEAR(haversine_km({0.0, 0.0}, {0.0, 180.0}), std::numbers::pi * kEarthRadiusKm, 1e-9);
  EXPECT_NEAR(haversine_km({90.0, 0.0}, {-90.0, 0.0}), 20015.086796, 1e-5);
  EXPECT_EQ(haversine_km({12.0, 34.0}, {12.0, 34.0}), 0.0);
  const GeoPoint london{51.5074, -0.1278};
  const GeoPoint paris{48.8566, 2.3522};
  EXPECT_NEAR(haversine_km(london, paris), 343.5, 1.0);
  EXPECT_DOUBLE_EQ(haversine_km(london, paris), haversine_km(paris, london));
  // A degree of latitude along a meridian.
  EXPECT_NEAR(haversine_km({10.0, 5.0}, {11.0, 5.0}), kEarthRadiusKm * std::numbers::pi / 180.0, 1e-9);
}

TEST(Knn, NearestNeighboursWithLowerIndexTies) {
  // Equally spaced on the equator: unit 2 is equidistant from 1 and 3.
  std::vector<GeoPoint> pts;
  for (int i = 0; i < 5; ++i) pts.push_back({0.0, 1.0 * i});
  const SpatialWeights w1 = knn_weights(pts, 1);
  EXPECT_EQ(w1.kind(), WeightKind::knn);
  EXPECT_EQ(w1.coeff(2, 1), 1.0);
  EXPECT_EQ(w1.coeff(2, 3), 0.0);
  EXPECT_EQ(w1.coeff(0, 1), 1.0);
  EXPECT_EQ(w1.coeff(4, 3), 1.0);
  const SpatialWeights w2 = knn_weights(pts, 2);
  EXPECT_EQ(w2.coeff(0, 1), 0.5);
  EXPECT_EQ(w2.coeff(0, 2), 0.5);
  EXPECT_EQ(w2.coeff(2, 1), 0.5);
  EXPECT_EQ(w2.coeff(2, 3), 0.5);
  const SpatialWeights w3 = knn_weights(pts, 3);
  EXPECT_NEAR(w3.coeff(2, 0), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(w3.coeff(2, 4), 0.0);
  EXPECT_TRUE(w3.normalized());
  EXPECT_THROW(knn_weights(pts, 0), ParameterError);
  EXPECT_THROW(knn_weights(pts, 5), ParameterError);
  pts[1].lat = 95.0;
  EXPECT_THROW(knn_weights(pts, 1), DataError);
}

TEST(Knn, MatchesBruteForceOnRandomPoints) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> lat(-60.0, 60.0), lon(-170.0, 170.0);
  std::vector<GeoPoint> pts(30);
  for (auto& p : pts) p = {lat(rng), lon(rng)};
  const Index h = 4;
  const SpatialWeights w = knn_weights(pts, h);
  for (Index i = 0; i < 30; ++i) {
    std::vector<std::pair<double, Index>> d;
    for (Index j = 0; j < 30; ++j)
      if (j != i) d.push_back({haversine_km(pts[i], pts[j]), j});
    std::sort(d.begin(), d.end());
    for (Index r = 0; r < 29; ++r) EXPECT_EQ(w.coeff(i, d[r].second), r < h ? 0.25 : 0.0);
  }
}

TEST(Moran, MatchesDoubleSumOracle) {
  std::mt19937_64 rng(9);
  const Matrix W = oracle::random_weights(15, rng);
  const SpatialWeights w = SpatialWeights::from_dense(W);
  const Vector x = oracle::random_matrix(15, 1, rng);
  const double xbar = x.mean();
  double num = 0.0, den = 0.0;
  for (Index i = 0; i < 15; ++i) {
    den += (x[i] - xbar) * (x[i] - xbar);
    for (Index j = 0; j < 15; ++j) num += W(i, j) * (x[i] - xbar) * (x[j] - xbar);
  }
  EXPECT_NEAR(morans_i(x, w), num / den, 1e-14);
  // Invariant to affine rescaling.
  const Vector y = (3.0 * x).array() + 7.0;
  EXPECT_NEAR(morans_i(y, w), num / den, 1e-13);
}

TEST(Moran, SignsOnStructuredPatterns) {
  const SpatialWeights ring = SpatialWeights::from_dense(oracle::ring_weights(10, 1));
  Vector alt(10), smooth(10);
  for (Index i = 0; i < 10; ++i) {
    alt[i] = i % 2 == 0 ? 1.0 : -1.0;
    smooth[i] = std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / 10.0);
  }
  EXPECT_NEAR(morans_i(alt, ring), -1.0, 1e-14);
  EXPECT_NEAR(morans_i(smooth, ring), std::cos(2.0 * std::numbers::pi / 10.0), 1e-14);
}

TEST(Moran, Errors) {
  const SpatialWeights w = inverse_distance_weights(5);
  EXPECT_THROW(morans_i(Vector::Constant(5, 2.5), w), UndefinedStatisticError);
  EXPECT_THROW(morans_i(Vector::Zero(4), w), ParameterError);
}

TEST(Moran, FunctionalMatchesPointwise) {
  std::mt19937_64 rng(33);
  const Index n = 20;
  const BSplineBasis b(8, 3);
  const Vector g = Vector::LinSpaced(50, 0.0, 1.0);
  const FunctionalDataset d(g, oracle::random_matrix(n, 50, rng));
  const BasisCoefficients c = center_coefficients(smooth_curves(d, b));
  const SpatialWeights w = exponential_weights(n, 0.5);
  const Vector tg = Vector::LinSpaced(11, 0.0, 1.0);
  const Vector I = functional_morans_i(c, w, tg);
  const Matrix V = evaluate_curves(c, tg);
  for (Index j = 0; j < tg.size(); ++j) EXPECT_NEAR(I[j], morans_i(V.col(j), w), 1e-10);
  EXPECT_THROW(functional_morans_i(smooth_curves(d, b), w, tg), ParameterError);
  EXPECT_THROW(functional_morans_i(c, exponential_weights(n + 1, 0.5), tg), ParameterError);
}
