#include "sfofr/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "sfofr/error.hpp"

namespace sfofr {

namespace {

constexpr double kRowSumTol = 1e-12;

template <class... F>
struct Overloaded : F... {
  using F::operator()...;
};
template <class... F>
Overloaded(F...) -> Overloaded<F...>;

bool want_sparse(Index n, WeightStorage storage) {
  switch (storage) {
    case WeightStorage::dense: return false;
    case WeightStorage::sparse: return true;
    case WeightStorage::automatic: break;
  }
  return n > SpatialWeights::kDenseLimit;
}

void check_entry(Index i, Index j, double w) {
  if (!std::isfinite(w)) {
    throw DataError("weight (" + std::to_string(i) + "," + std::to_string(j) + ") is not finite");
  }
  if (w < 0.0) {
    throw DataError("weight (" + std::to_string(i) + "," + std::to_string(j) + ") is negative");
  }
  if (i == j && w != 0.0) throw DataError("weight matrix diagonal must be zero (unit " + std::to_string(i) + ")");
}

}  // namespace

SpatialWeights::SpatialWeights(Index n, WeightKind kind, std::shared_ptr<const Storage> storage)
    : n_(n), kind_(kind), storage_(std::move(storage)) {
  refresh_flags();
}

SpatialWeights SpatialWeights::from_dense(const Matrix& W, WeightKind kind, WeightStorage storage) {
  if (W.rows() != W.cols()) throw DataError("weight matrix must be square");
  const Index n = W.rows();
  if (n < 1) throw DataError("weight matrix is empty");
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) check_entry(i, j, W(i, j));
  if (want_sparse(n, storage)) {
    SparseMatrix S = W.sparseView();
    S.makeCompressed();
    return SpatialWeights(n, kind, std::make_shared<const Storage>(std::move(S)));
  }
  return SpatialWeights(n, kind, std::make_shared<const Storage>(W));
}

SpatialWeights SpatialWeights::from_triplets(Index n, const std::vector<Triplet>& entries, WeightKind kind,
                                             WeightStorage storage) {
  if (n < 1) throw DataError("weight matrix is empty");
  for (const auto& t : entries) {
    if (t.row() < 0 || t.row() >= n || t.col() < 0 || t.col() >= n)
      throw DataError("weight index (" + std::to_string(t.row()) + "," + std::to_string(t.col()) +
                      ") out of range for n = " + std::to_string(n));
    check_entry(t.row(), t.col(), t.value());
  }
  SparseMatrix S(n, n);
  S.setFromTriplets(entries.begin(), entries.end());
  S.prune(0.0);
  S.makeCompressed();
  if (want_sparse(n, storage)) return SpatialWeights(n, kind, std::make_shared<const Storage>(std::move(S)));
  return SpatialWeights(n, kind, std::make_shared<const Storage>(Matrix(S)));
}

void SpatialWeights::refresh_flags() {
  const Vector sums = row_sums();
  normalized_ = true;
  isolated_.clear();
  for (Index i = 0; i < n_; ++i) {
    if (sums[i] == 0.0) {
      isolated_.push_back(i);
    } else if (std::abs(sums[i] - 1.0) > kRowSumTol) {
      normalized_ = false;
    }
  }
}

bool SpatialWeights::is_sparse() const { return std::holds_alternative<SparseMatrix>(*storage_); }

Matrix SpatialWeights::multiply(const Matrix& M) const {
  if (M.rows() != n_) throw ParameterError("W * M: row mismatch");
  return std::visit([&](const auto& W) -> Matrix { return W * M; }, *storage_);
}

Matrix SpatialWeights::multiply_transpose(const Matrix& M) const {
  if (M.rows() != n_) throw ParameterError("W^T * M: row mismatch");
  return std::visit([&](const auto& W) -> Matrix { return W.transpose() * M; }, *storage_);
}

Vector SpatialWeights::row_sums() const {
  return std::visit(
      Overloaded{[](const Matrix& W) -> Vector { return W.rowwise().sum(); },
                 [](const SparseMatrix& W) -> Vector { return W * Vector::Ones(W.cols()); }},
      *storage_);
}

Vector SpatialWeights::column_sq_norms() const {
  return std::visit(Overloaded{[](const Matrix& W) -> Vector { return W.colwise().squaredNorm().transpose(); },
                               [](const SparseMatrix& W) -> Vector {
                                 Vector out = Vector::Zero(W.cols());
                                 for (Index i = 0; i < W.outerSize(); ++i)
                                   for (SparseMatrix::InnerIterator it(W, i); it; ++it)
                                     out[it.col()] += it.value() * it.value();
                                 return out;
                               }},
                    *storage_);
}

double SpatialWeights::inf_norm() const { return n_ == 0 ? 0.0 : row_sums().maxCoeff(); }

double SpatialWeights::coeff(Index i, Index j) const {
  return std::visit(Overloaded{[&](const Matrix& W) { return W(i, j); },
                               [&](const SparseMatrix& W) { return W.coeff(i, j); }},
                    *storage_);
}

Matrix SpatialWeights::dense() const {
  return std::visit(Overloaded{[](const Matrix& W) -> Matrix { return W; },
                               [](const SparseMatrix& W) -> Matrix { return Matrix(W); }},
                    *storage_);
}

std::vector<Triplet> SpatialWeights::triplets() const {
  std::vector<Triplet> out;
  std::visit(Overloaded{[&](const Matrix& W) {
                          for (Index i = 0; i < W.rows(); ++i)
                            for (Index j = 0; j < W.cols(); ++j)
                              if (W(i, j) != 0.0) out.emplace_back(i, j, W(i, j));
                        },
                        [&](const SparseMatrix& W) {
                          for (Index i = 0; i < W.outerSize(); ++i)
                            for (SparseMatrix::InnerIterator it(W, i); it; ++it)
                              if (it.value() != 0.0) out.emplace_back(it.row(), it.col(), it.value());
                        }},
             *storage_);
  return out;
}

bool SpatialWeights::is_zero() const {
  return std::visit(Overloaded{[](const Matrix& W) { return (W.array() == 0.0).all(); },
                               [](const SparseMatrix& W) {
                                 for (Index k = 0; k < W.nonZeros(); ++k)
                                   if (W.valuePtr()[k] != 0.0) return false;
                                 return true;
                               }},
                    *storage_);
}

namespace {

template <class Kernel>
SpatialWeights lattice_weights(Index n, WeightKind kind, Kernel kernel) {
  if (n < 2) throw ParameterError("weight matrix needs n >= 2, got " + std::to_string(n));
  Matrix W = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (i != j) W(i, j) = kernel(static_cast<double>(std::abs(i - j)));
  return row_normalize(SpatialWeights::from_dense(W, kind));
}

}  // namespace

SpatialWeights inverse_distance_weights(Index n) {
  return lattice_weights(n, WeightKind::inverse_distance, [](double dist) { return 1.0 / (1.0 + dist); });
}

SpatialWeights exponential_weights(Index n, double decay) {
  if (!(decay > 0.0) || !std::isfinite(decay))
    throw ParameterError("exponential decay must be > 0, got " + std::to_string(decay));
  return lattice_weights(n, WeightKind::exponential, [decay](double dist) { return std::exp(-decay * dist); });
}

double haversine_km(const GeoPoint& a, const GeoPoint& b) {
  constexpr double deg = std::numbers::pi / 180.0;
  const double lat1 = a.lat * deg;
  const double lat2 = b.lat * deg;
  const double dlat = lat2 - lat1;
  const double dlon = (b.lon - a.lon) * deg;
  const double s1 = std::sin(0.5 * dlat);
  const double s2 = std::sin(0.5 * dlon);
  double h = s1 * s1 + std::cos(lat1) * std::cos(lat2) * s2 * s2;
  h = std::clamp(h, 0.0, 1.0);
  const double c = 2.0 * std::atan2(std::sqrt(h), std::sqrt(1.0 - h));
  return kEarthRadiusKm * c;
}

SpatialWeights knn_weights(std::span<const GeoPoint> coords, Index h) {
  const Index n = static_cast<Index>(coords.size());
  if (n < 2) throw ParameterError("KNN weights need at least 2 units");
  if (h < 1 || h > n - 1)
    throw ParameterError("KNN neighbour count h must be in [1, n-1], got " + std::to_string(h));
  for (Index i = 0; i < n; ++i) {
    const auto& p = coords[static_cast<std::size_t>(i)];
    if (!(std::abs(p.lat) <= 90.0) || !(std::abs(p.lon) <= 180.0))
      throw DataError("coordinate " + std::to_string(i) + " outside |lat| <= 90, |lon| <= 180");
  }
  std::vector<Triplet> entries;
  entries.reserve(static_cast<std::size_t>(n * h));
  std::vector<std::pair<double, Index>> cand(static_cast<std::size_t>(n - 1));
  const double w = 1.0 / static_cast<double>(h);
  for (Index i = 0; i < n; ++i) {
    std::size_t k = 0;
    for (Index j = 0; j < n; ++j)
      if (j != i) cand[k++] = {haversine_km(coords[static_cast<std::size_t>(i)], coords[static_cast<std::size_t>(j)]), j};
    std::partial_sort(cand.begin(), cand.begin() + h, cand.end());
    for (Index r = 0; r < h; ++r) entries.emplace_back(i, cand[static_cast<std::size_t>(r)].second, w);
  }
  return SpatialWeights::from_triplets(n, entries, WeightKind::knn);
}

SpatialWeights row_normalize(const SpatialWeights& W) {
  const Vector sums = W.row_sums();
  const WeightStorage storage = W.is_sparse() ? WeightStorage::sparse : WeightStorage::dense;
  if (W.is_sparse()) {
    std::vector<Triplet> entries = W.triplets();
    for (auto& t : entries) t = Triplet(t.row(), t.col(), t.value() / sums[t.row()]);
    return SpatialWeights::from_triplets(W.size(), entries, W.kind(), storage);
  }
  Matrix D = W.dense();
  for (Index i = 0; i < D.rows(); ++i)
    if (sums[i] > 0.0) D.row(i) /= sums[i];
  return SpatialWeights::from_dense(D, W.kind(), storage);
}

double morans_i(const Vector& x, const SpatialWeights& W) {
  if (x.size() != W.size())
    throw ParameterError("Moran's I: vector length " + std::to_string(x.size()) + " vs W size " +
                         std::to_string(W.size()));
  const Vector xc = x.array() - x.mean();
  const double denom = xc.squaredNorm();
  const double scale = x.size() > 0 ? x.cwiseAbs().maxCoeff() : 0.0;
  const double floor = static_cast<double>(x.size()) * std::pow(64.0 * std::numeric_limits<double>::epsilon() * scale, 2);
  if (!(denom > floor)) throw UndefinedStatisticError("Moran's I undefined: values have zero variance");
  const Vector wx = W.multiply(xc);
  return xc.dot(wx) / denom;
}

Vector functional_morans_i(const BasisCoefficients& coeffs, const SpatialWeights& W, const Vector& tgrid) {
  if (coeffs.num_curves() != W.size())
    throw ParameterError("functional Moran's I: " + std::to_string(coeffs.num_curves()) + " curves vs W size " +
                         std::to_string(W.size()));
  if (!coefficients_centered(coeffs.coefficients))
    throw ParameterError("functional Moran's I expects centered coefficients");
  const Matrix V = evaluate_curves(coeffs, tgrid);  // n x m
  const Matrix WV = W.multiply(V);
  const Vector num = V.cwiseProduct(WV).colwise().sum().transpose();
  const Vector den = V.colwise().squaredNorm().transpose();
  std::ostringstream bad;
  bool any_bad = false;
  for (Index j = 0; j < den.size(); ++j) {
    if (!(den[j] >= 1e-14)) {
      bad << (any_bad ? ", " : "") << tgrid[j];
      any_bad = true;
    }
  }
  if (any_bad) throw UndefinedStatisticError("functional Moran's I undefined at t = " + bad.str());
  return num.cwiseQuotient(den);
}

const char* to_string(WeightKind kind) {
  switch (kind) {
    case WeightKind::inverse_distance: return "inverse_distance";
    case WeightKind::exponential: return "exponential";
    case WeightKind::knn: return "knn";
    case WeightKind::custom: return "custom";
  }
  return "custom";
}

}  // namespace sfofr
