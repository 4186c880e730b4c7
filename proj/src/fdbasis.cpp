#include "sfofr/fdbasis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sfofr/error.hpp"

namespace sfofr {

FunctionalDataset::FunctionalDataset(Vector grid, Matrix values, std::vector<std::string> ids)
    : grid_(std::move(grid)), values_(std::move(values)), ids_(std::move(ids)) {
  const Index T = grid_.size();
  if (T < 4) throw DataError("functional dataset needs at least 4 grid points, got " + std::to_string(T));
  for (Index j = 0; j < T; ++j) {
    if (!std::isfinite(grid_[j]) || grid_[j] < 0.0 || grid_[j] > 1.0)
      throw DataError("grid point " + std::to_string(j) + " outside [0,1]");
    if (j > 0 && !(grid_[j] > grid_[j - 1]))
      throw DataError("grid is not strictly increasing at index " + std::to_string(j));
  }
  if (values_.cols() != T)
    throw DataError("value matrix has " + std::to_string(values_.cols()) + " columns but grid has " +
                    std::to_string(T) + " points");
  if (values_.rows() < 2)
    throw DataError("functional dataset needs at least 2 curves, got " + std::to_string(values_.rows()));
  if (!values_.allFinite()) throw DataError("functional dataset contains non-finite values");
  if (ids_.empty()) {
    ids_.reserve(static_cast<std::size_t>(values_.rows()));
    for (Index i = 0; i < values_.rows(); ++i) ids_.push_back(std::to_string(i + 1));
  } else if (static_cast<Index>(ids_.size()) != values_.rows()) {
    throw DataError("got " + std::to_string(ids_.size()) + " ids for " + std::to_string(values_.rows()) +
                    " curves");
  }
}

FunctionalDataset FunctionalDataset::with_values(Matrix values) const {
  return FunctionalDataset(grid_, std::move(values), ids_);
}

namespace detail {

std::vector<double> clamped_uniform_knots(int num_basis, int degree) {
  const int interior = num_basis - degree - 1;
  std::vector<double> knots;
  knots.reserve(static_cast<std::size_t>(num_basis + degree + 1));
  for (int i = 0; i <= degree; ++i) knots.push_back(0.0);
  for (int j = 1; j <= interior; ++j) knots.push_back(static_cast<double>(j) / (interior + 1));
  for (int i = 0; i <= degree; ++i) knots.push_back(1.0);
  return knots;
}

namespace {

// Index s of the span [knots[s], knots[s+1]) containing t; t = 1 maps to the last span.
int find_span(const std::vector<double>& knots, int degree, int num_basis, double t) {
  auto it = std::upper_bound(knots.begin(), knots.end(), t);
  int s = static_cast<int>(it - knots.begin()) - 1;
  return std::clamp(s, degree, num_basis - 1);
}

// The degree+1 nonzero basis values on span s.
void nonzero_basis(const std::vector<double>& knots, int degree, int s, double t, double* N) {
  std::vector<double> left(static_cast<std::size_t>(degree + 1));
  std::vector<double> right(static_cast<std::size_t>(degree + 1));
  N[0] = 1.0;
  for (int j = 1; j <= degree; ++j) {
    left[j] = t - knots[s + 1 - j];
    right[j] = knots[s + j] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = N[r] / (right[r + 1] + left[j - r]);
      N[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    N[j] = saved;
  }
}

}  // namespace

void bspline_values(const std::vector<double>& knots, int degree, int num_basis, double t, double* out) {
  std::fill(out, out + num_basis, 0.0);
  const int s = find_span(knots, degree, num_basis, t);
  std::vector<double> N(static_cast<std::size_t>(degree + 1));
  nonzero_basis(knots, degree, s, t, N.data());
  for (int r = 0; r <= degree; ++r) out[s - degree + r] = N[r];
}

Matrix bspline_gram(const std::vector<double>& knots, int degree, int num_basis) {
  // degree+1 nodes integrate polynomials up to degree 2*degree+1 exactly.
  const auto [nodes, weights] = gauss_legendre(degree + 1);
  Matrix gram = Matrix::Zero(num_basis, num_basis);
  std::vector<double> N(static_cast<std::size_t>(degree + 1));
  for (int s = degree; s < num_basis; ++s) {
    const double a = knots[s];
    const double b = knots[s + 1];
    if (!(b > a)) continue;
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    for (std::size_t q = 0; q < nodes.size(); ++q) {
      const double t = mid + half * nodes[q];
      const double w = half * weights[q];
      nonzero_basis(knots, degree, s, t, N.data());
      for (int r = 0; r <= degree; ++r)
        for (int c = r; c <= degree; ++c) gram(s - degree + r, s - degree + c) += w * N[r] * N[c];
    }
  }
  for (int i = 0; i < num_basis; ++i)
    for (int j = i + 1; j < num_basis; ++j) gram(j, i) = gram(i, j);
  return gram;
}

}  // namespace detail

std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int num_nodes) {
  if (num_nodes < 1) throw ParameterError("Gauss-Legendre needs at least one node");
  std::vector<double> x(static_cast<std::size_t>(num_nodes));
  std::vector<double> w(static_cast<std::size_t>(num_nodes));
  const int n = num_nodes;
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = 0.0;
      for (int k = 1; k <= n; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    // Recompute the derivative at the converged node.
    double p0 = 1.0;
    double p1 = 0.0;
    for (int k = 1; k <= n; ++k) {
      const double p2 = p1;
      p1 = p0;
      p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
    }
    dp = n * (z * p0 - p1) / (z * z - 1.0);
    x[static_cast<std::size_t>(i)] = -z;
    x[static_cast<std::size_t>(n - 1 - i)] = z;
    const double wi = 2.0 / ((1.0 - z * z) * dp * dp);
    w[static_cast<std::size_t>(i)] = wi;
    w[static_cast<std::size_t>(n - 1 - i)] = wi;
  }
  if (n % 2 == 1) x[static_cast<std::size_t>(n / 2)] = 0.0;
  return {x, w};
}

BSplineBasis::BSplineBasis(int num_basis, int degree) : num_basis_(num_basis), degree_(degree) {
  if (degree < 1) throw ParameterError("B-spline degree must be >= 1, got " + std::to_string(degree));
  if (num_basis < degree + 1)
    throw ParameterError("need num_basis >= degree + 1 (" + std::to_string(degree + 1) + "), got " +
                         std::to_string(num_basis));
  knots_ = detail::clamped_uniform_knots(num_basis, degree);
  gram_ = detail::bspline_gram(knots_, degree, num_basis);
}

Matrix BSplineBasis::evaluate(const Vector& points) const {
  Matrix phi(points.size(), num_basis_);
  std::vector<double> row(static_cast<std::size_t>(num_basis_));
  for (Index i = 0; i < points.size(); ++i) {
    const double t = points[i];
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("basis evaluation point " + std::to_string(t) + " outside [0,1]");
    detail::bspline_values(knots_, degree_, num_basis_, t, row.data());
    for (int l = 0; l < num_basis_; ++l) phi(i, l) = row[static_cast<std::size_t>(l)];
  }
  return phi;
}

BSplineBasis make_bspline_basis(int num_basis, int degree) { return BSplineBasis(num_basis, degree); }

Matrix evaluate_basis(const BSplineBasis& basis, const Vector& points) { return basis.evaluate(points); }

BasisCoefficients smooth_curves(const FunctionalDataset& data, const BSplineBasis& basis, double ridge) {
  if (!(ridge >= 0.0) || !std::isfinite(ridge)) throw ParameterError("ridge must be finite and >= 0");
  const Index L = basis.num_basis();
  if (L > data.grid_size())
    throw ParameterError("basis size " + std::to_string(L) + " exceeds grid size " +
                         std::to_string(data.grid_size()));
  const Matrix phi = basis.evaluate(data.grid());
  Matrix A;
  if (ridge == 0.0) {
    Eigen::ColPivHouseholderQR<Matrix> qr(phi);
    if (qr.rank() < L)
      throw SingularityError("basis evaluation matrix is rank deficient on this grid (rank " +
                             std::to_string(qr.rank()) + " < " + std::to_string(L) +
                             "); use ridge > 0");
    A = qr.solve(data.values().transpose()).transpose();
  } else {
    Matrix normal = phi.transpose() * phi;
    normal.diagonal().array() += ridge;
    Eigen::LLT<Matrix> llt(normal);
    if (llt.info() != Eigen::Success) throw SingularityError("smoothing normal equations are not positive definite");
    A = llt.solve(phi.transpose() * data.values().transpose()).transpose();
  }
  const Matrix resid = data.values() - A * phi.transpose();
  const double rms = std::sqrt(resid.squaredNorm() / static_cast<double>(resid.size()));
  return BasisCoefficients{std::move(A), basis, Vector::Zero(L), rms};
}

CenteredData center(const FunctionalDataset& data) {
  Vector mean = data.values().colwise().mean().transpose();
  return CenteredData{center_by(data, mean), std::move(mean)};
}

FunctionalDataset center_by(const FunctionalDataset& data, const Vector& mean) {
  if (mean.size() != data.grid_size())
    throw ParameterError("mean curve length " + std::to_string(mean.size()) + " does not match grid size " +
                         std::to_string(data.grid_size()));
  Matrix centered = data.values().rowwise() - mean.transpose();
  return data.with_values(std::move(centered));
}

BasisCoefficients center_coefficients(const BasisCoefficients& coeffs) {
  const Vector col_mean = coeffs.coefficients.colwise().mean().transpose();
  BasisCoefficients out = coeffs;
  out.coefficients.rowwise() -= col_mean.transpose();
  out.mean_coeff = coeffs.mean_coeff + col_mean;
  return out;
}

bool coefficients_centered(const Matrix& coefficients, double rel_tol) {
  if (coefficients.size() == 0) return true;
  const double scale = std::max(1.0, coefficients.cwiseAbs().maxCoeff());
  const double worst = coefficients.colwise().mean().cwiseAbs().maxCoeff();
  return worst <= rel_tol * scale;
}

Matrix evaluate_curves(const BasisCoefficients& coeffs, const Vector& points) {
  return coeffs.coefficients * coeffs.basis.evaluate(points).transpose();
}

Vector trapezoid_weights(const Vector& grid) {
  const Index m = grid.size();
  Vector w = Vector::Zero(m);
  for (Index j = 0; j + 1 < m; ++j) {
    const double h = grid[j + 1] - grid[j];
    w[j] += 0.5 * h;
    w[j + 1] += 0.5 * h;
  }
  return w;
}

}  // namespace sfofr
