#pragma once

// Classical and spatial functional principal components, computed in the
// basis-coefficient space through D = A * Gamma^{1/2}.

#include <optional>

#include "sfofr/fdbasis.hpp"
#include "sfofr/spatial.hpp"

namespace sfofr {

enum class FpcKind { classical, spatial };

/// How many components to keep: an explicit count, a variance share, or all.
struct Truncation {
  std::optional<Index> count;
  std::optional<double> variance_threshold;

  static Truncation components(Index k) { return {k, std::nullopt}; }
  static Truncation variance(double threshold) { return {std::nullopt, threshold}; }
  static Truncation all() { return {}; }
};

struct FpcDecomposition {
  FpcKind kind = FpcKind::classical;
  /// L x K; column k holds the basis coefficients of eigenfunction k.
  Matrix chi;
  /// Criterion eigenvalues. Spatial eigenvalues may be negative.
  Vector eigenvalues;
  /// n x K, exact L2 inner products A * Gamma * chi.
  Matrix scores;
  BSplineBasis basis;
  /// Share of total variance carried by each kept component's scores.
  Vector variance_explained;
  /// Total L2 variance of the input curves (trace of the covariance operator).
  double total_variance = 0.0;

  Index num_components() const { return chi.cols(); }
};

/// Symmetric square root of a PD matrix with an eigenvalue floor.
Matrix sym_sqrt(const Matrix& S, double floor = 1e-12);
Matrix sym_inv_sqrt(const Matrix& S, double floor = 1e-12);

/// Eigen-decomposition of n^{-1} Gamma^{1/2} A^T A Gamma^{1/2}. Nonincreasing eigenvalues.
FpcDecomposition fit_fpc(const BasisCoefficients& coeffs, Truncation truncation = Truncation::all());

/// Eigen-decomposition of n^{-1} Gamma^{1/2} A^T ((W+W^T)/2) A Gamma^{1/2},
/// components ordered by |eigenvalue| (ties by score variance).
FpcDecomposition fit_sfpc(const BasisCoefficients& coeffs, const SpatialWeights& W,
                          Truncation truncation = Truncation::all());

/// Smallest K whose cumulative score-variance share reaches `threshold`.
Index choose_k(const FpcDecomposition& decomp, double threshold);

/// Keep the first k components.
FpcDecomposition truncate(const FpcDecomposition& decomp, Index k);

/// Scores A * Gamma * chi for curves on the decomposition's basis.
Matrix project(const BasisCoefficients& coeffs, const FpcDecomposition& decomp);

/// m x K matrix of eigenfunction values on `tgrid`.
Matrix eigenfunctions(const FpcDecomposition& decomp, const Vector& tgrid);

/// Curves (n x |tgrid|) from scores: scores * eigenfunctions(tgrid)^T.
Matrix reconstruct(const Matrix& scores, const FpcDecomposition& decomp, const Vector& tgrid);

}  // namespace sfofr
