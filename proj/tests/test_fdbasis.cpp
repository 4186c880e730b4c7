#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "sfofr/error.hpp"
#include "sfofr/fdbasis.hpp"

using namespace sfofr;

namespace {

Vector uniform_grid(Index m) { return Vector::LinSpaced(m, 0.0, 1.0); }

}  // namespace

TEST(BSplineBasis, ClampedUniformKnots) {
  const auto k = detail::clamped_uniform_knots(7, 3);
  ASSERT_EQ(k.size(), 11u);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(k[static_cast<std::size_t>(i)], 0.0);
    EXPECT_EQ(k[static_cast<std::size_t>(10 - i)], 1.0);
  }
  EXPECT_DOUBLE_EQ(k[4], 0.25);
  EXPECT_DOUBLE_EQ(k[5], 0.5);
  EXPECT_DOUBLE_EQ(k[6], 0.75);
}

TEST(BSplineBasis, PartitionOfUnityAndNonnegativity) {
  for (int degree : {1, 2, 3, 5}) {
    const BSplineBasis b(12, degree);
    const Matrix phi = b.evaluate(uniform_grid(257));
    EXPECT_LT((phi.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-13) << "degree " << degree;
    EXPECT_GE(phi.minCoeff(), 0.0);
  }
}

TEST(BSplineBasis, EndpointsInterpolate) {
  const BSplineBasis b(9, 3);
  Vector ends(2);
  ends << 0.0, 1.0;
  const Matrix phi = b.evaluate(ends);
  EXPECT_DOUBLE_EQ(phi(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(phi(1, 8), 1.0);
}

TEST(BSplineBasis, GramMatchesCompositeQuadrature) {
  for (int L : {4, 10, 20}) {
    const BSplineBasis b(L, 3);
    EXPECT_LT((b.gram() - oracle::quadrature_gram(b)).cwiseAbs().maxCoeff(), 1e-14) << "L = " << L;
    EXPECT_LT((b.gram() - b.gram().transpose()).cwiseAbs().maxCoeff(), 1e-16);
  }
}

TEST(BSplineBasis, GramEntriesSumToOne) {
  // Partition of unity: the double integral of sum_k sum_l phi_k phi_l is 1.
  const BSplineBasis b(20, 3);
  EXPECT_NEAR(b.gram().sum(), 1.0, 1e-13);
}

TEST(BSplineBasis, PiecewiseConstantGramIsDiagonal) {
  const int L = 5;
  const auto knots = detail::clamped_uniform_knots(L, 0);
  const Matrix G = detail::bspline_gram(knots, 0, L);
  EXPECT_LT((G - Matrix::Identity(L, L) / L).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(BSplineBasis, RejectsBadParameters) {
  EXPECT_THROW(BSplineBasis(3, 3), ParameterError);
  EXPECT_THROW(BSplineBasis(5, 0), ParameterError);
  const BSplineBasis b(6, 3);
  Vector out(1);
  out << 1.5;
  EXPECT_THROW(b.evaluate(out), DomainError);
  out << -0.1;
  EXPECT_THROW(b.evaluate(out), DomainError);
}

TEST(FunctionalDataset, Validation) {
  const Vector g = uniform_grid(5);
  EXPECT_NO_THROW(FunctionalDataset(g, Matrix::Zero(2, 5)));
  EXPECT_THROW(FunctionalDataset(g, Matrix::Zero(1, 5)), DataError);
  EXPECT_THROW(FunctionalDataset(g, Matrix::Zero(3, 4)), Error);
  EXPECT_THROW(FunctionalDataset(uniform_grid(3), Matrix::Zero(3, 3)), Error);
  Vector bad = g;
  bad[2] = bad[1];
  EXPECT_THROW(FunctionalDataset(bad, Matrix::Zero(2, 5)), Error);
  Vector outside = g;
  outside[4] = 1.2;
  EXPECT_THROW(FunctionalDataset(outside, Matrix::Zero(2, 5)), Error);
  Matrix nan = Matrix::Zero(2, 5);
  nan(1, 1) = std::nan("");
  EXPECT_THROW(FunctionalDataset(g, nan), DataError);
  const FunctionalDataset d(g, Matrix::Zero(3, 5));
  EXPECT_EQ(d.ids(), (std::vector<std::string>{"1", "2", "3"}));
}

TEST(Smoothing, ReproducesSplinesExactly) {
  std::mt19937_64 rng(11);
  const BSplineBasis b(10, 3);
  const Vector g = uniform_grid(60);
  const Matrix A = oracle::random_matrix(5, 10, rng);
  const FunctionalDataset d(g, A * b.evaluate(g).transpose());
  const BasisCoefficients c0 = smooth_curves(d, b, 0.0);
  EXPECT_LT((c0.coefficients - A).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT(c0.residual_rms, 1e-12);
  const BasisCoefficients c1 = smooth_curves(d, b);
  EXPECT_LT((c1.coefficients - A).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Smoothing, RankDeficientWithoutRidge) {
  // All samples inside one knot span cannot identify every coefficient.
  Vector g(8);
  for (Index i = 0; i < 8; ++i) g[i] = 0.01 * static_cast<double>(i + 1);
  const FunctionalDataset d(g, Matrix::Ones(2, 8));
  const BSplineBasis b(8, 3);
  EXPECT_THROW(smooth_curves(d, b, 0.0), SingularityError);
  EXPECT_NO_THROW(smooth_curves(d, b, 1e-6));
  EXPECT_THROW(smooth_curves(d, b, -1.0), ParameterError);
}

TEST(Smoothing, LinearInTheData) {
  std::mt19937_64 rng(5);
  const BSplineBasis b(8, 3);
  const Vector g = uniform_grid(40);
  const Matrix V1 = oracle::random_matrix(3, 40, rng);
  const Matrix V2 = oracle::random_matrix(3, 40, rng);
  const Matrix a1 = smooth_curves(FunctionalDataset(g, V1), b).coefficients;
  const Matrix a2 = smooth_curves(FunctionalDataset(g, V2), b).coefficients;
  const Matrix a12 = smooth_curves(FunctionalDataset(g, 2.0 * V1 - V2), b).coefficients;
  EXPECT_LT((a12 - (2.0 * a1 - a2)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Centering, RemovesPointwiseMean) {
  std::mt19937_64 rng(3);
  const Vector g = uniform_grid(10);
  const FunctionalDataset d(g, oracle::random_matrix(7, 10, rng));
  const CenteredData c = center(d);
  EXPECT_LT(c.data.values().colwise().mean().cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((c.mean - d.values().colwise().mean().transpose()).cwiseAbs().maxCoeff(), 1e-15);
  const FunctionalDataset again = center_by(d, c.mean);
  EXPECT_EQ(again.values(), c.data.values());
  EXPECT_THROW(center_by(d, Vector::Zero(3)), ParameterError);
}

TEST(Centering, Coefficients) {
  std::mt19937_64 rng(8);
  const BSplineBasis b(6, 3);
  const Vector g = uniform_grid(30);
  const BasisCoefficients raw = smooth_curves(FunctionalDataset(g, oracle::random_matrix(9, 30, rng)), b);
  EXPECT_FALSE(coefficients_centered(raw.coefficients));
  const BasisCoefficients c = center_coefficients(raw);
  EXPECT_TRUE(coefficients_centered(c.coefficients));
  EXPECT_LT((c.coefficients.rowwise() + c.mean_coeff.transpose() - raw.coefficients).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_TRUE(coefficients_centered(smooth_curves(center(FunctionalDataset(g, raw.coefficients * b.evaluate(g).transpose())).data, b).coefficients));
}

TEST(Quadrature, TrapezoidIntegratesLinearExactly) {
  Vector g(5);
  g << 0.0, 0.1, 0.35, 0.8, 1.0;
  const Vector w = trapezoid_weights(g);
  EXPECT_NEAR(w.sum(), 1.0, 1e-15);
  EXPECT_NEAR(w.dot(g), 0.5, 1e-15);
  const Vector ww = trapezoid_weights(Vector::LinSpaced(1001, 0.0, 1.0));
  const Vector x = Vector::LinSpaced(1001, 0.0, 1.0);
  EXPECT_NEAR(ww.dot(x.cwiseAbs2()), 1.0 / 3.0, 2e-7);
}

TEST(Quadrature, GaussLegendreExactForPolynomials) {
  for (int n : {1, 2, 3, 4, 7}) {
    const auto [x, w] = gauss_legendre(n);
    for (int p = 0; p <= 2 * n - 1; ++p) {
      double sum = 0.0;
      for (int k = 0; k < n; ++k) sum += w[static_cast<std::size_t>(k)] * std::pow(x[static_cast<std::size_t>(k)], p);
      const double exact = p % 2 == 1 ? 0.0 : 2.0 / (p + 1);
      EXPECT_NEAR(sum, exact, 1e-14) << "n=" << n << " p=" << p;
    }
  }
}

TEST(Curves, EvaluateMatchesBasisProduct) {
  std::mt19937_64 rng(1);
  const BSplineBasis b(7, 2);
  const Matrix A = oracle::random_matrix(4, 7, rng);
  const BasisCoefficients c{A, b, Vector::Zero(7), 0.0};
  const Vector pts = Vector::LinSpaced(13, 0.0, 1.0);
  EXPECT_LT((evaluate_curves(c, pts) - A * evaluate_basis(b, pts).transpose()).cwiseAbs().maxCoeff(), 1e-15);
}
