#pragma once

// Spatial weight matrices and Moran's I statistics.

#include <memory>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "sfofr/fdbasis.hpp"

namespace sfofr {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;

enum class WeightKind { inverse_distance, exponential, knn, custom };

enum class WeightStorage { automatic, dense, sparse };

/// Nonnegative, zero-diagonal n x n weight matrix.
///
/// Storage is dense up to kDenseLimit units and compressed sparse rows above,
/// unless overridden. Copies share the immutable storage.
class SpatialWeights {
 public:
  static constexpr Index kDenseLimit = 2000;

  /// Throws DataError on negative/non-finite entries or a nonzero diagonal.
  static SpatialWeights from_dense(const Matrix& W, WeightKind kind = WeightKind::custom,
                                   WeightStorage storage = WeightStorage::automatic);
  static SpatialWeights from_triplets(Index n, const std::vector<Triplet>& entries,
                                      WeightKind kind = WeightKind::custom,
                                      WeightStorage storage = WeightStorage::automatic);

  Index size() const { return n_; }
  WeightKind kind() const { return kind_; }
  bool is_sparse() const;

  /// Every row with a nonzero entry sums to 1 within 1e-12.
  bool normalized() const { return normalized_; }
  /// Rows without neighbours (left as zero rows by row_normalize).
  const std::vector<Index>& isolated_units() const { return isolated_; }
  bool has_isolated_units() const { return !isolated_.empty(); }

  Matrix multiply(const Matrix& M) const;            // W * M
  Matrix multiply_transpose(const Matrix& M) const;  // W^T * M
  Vector row_sums() const;
  /// diag(W^T W), i.e. squared column norms.
  Vector column_sq_norms() const;
  /// Maximum absolute row sum.
  double inf_norm() const;
  double coeff(Index i, Index j) const;
  Matrix dense() const;
  std::vector<Triplet> triplets() const;
  bool is_zero() const;

 private:
  using Storage = std::variant<Matrix, SparseMatrix>;
  SpatialWeights(Index n, WeightKind kind, std::shared_ptr<const Storage> storage);
  void refresh_flags();

  Index n_ = 0;
  WeightKind kind_ = WeightKind::custom;
  std::shared_ptr<const Storage> storage_;
  bool normalized_ = false;
  std::vector<Index> isolated_;
};

struct GeoPoint {
  double lat = 0.0;  // degrees
  double lon = 0.0;  // degrees
};

inline constexpr double kEarthRadiusKm = 6371.0;

/// w = 1/(1+|i-i'|) off the diagonal, row-normalized.
SpatialWeights inverse_distance_weights(Index n);

/// w = exp(-d|i-i'|) off the diagonal, row-normalized.
SpatialWeights exponential_weights(Index n, double decay);

/// Great-circle distance by the haversine formula.
double haversine_km(const GeoPoint& a, const GeoPoint& b);

/// h nearest neighbours by haversine distance, weight 1/h each.
/// Distance ties go to the lower index.
SpatialWeights knn_weights(std::span<const GeoPoint> coords, Index h);

/// Rows scaled to sum 1; zero rows are kept and reported via isolated_units().
SpatialWeights row_normalize(const SpatialWeights& W);

/// x_c' W x_c / x_c' x_c with x_c = x - mean(x).
double morans_i(const Vector& x, const SpatialWeights& W);

/// Pointwise functional Moran's I of centered curves on `tgrid`.
Vector functional_morans_i(const BasisCoefficients& coeffs, const SpatialWeights& W, const Vector& tgrid);

const char* to_string(WeightKind kind);

}  // namespace sfofr
