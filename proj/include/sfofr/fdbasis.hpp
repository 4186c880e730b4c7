#pragma once

// B-spline representation of discretely sampled curves.

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace sfofr {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// n curves sampled on a shared, strictly increasing grid in [0,1].
class FunctionalDataset {
 public:
  /// Validates the grid, the value matrix (n x T) and the labels.
  /// Empty `ids` are replaced by "1".."n".
  FunctionalDataset(Vector grid, Matrix values, std::vector<std::string> ids = {});

  const Vector& grid() const { return grid_; }
  const Matrix& values() const { return values_; }
  const std::vector<std::string>& ids() const { return ids_; }

  Index num_curves() const { return values_.rows(); }
  Index grid_size() const { return grid_.size(); }

  /// Same grid and labels, different values.
  FunctionalDataset with_values(Matrix values) const;

 private:
  Vector grid_;
  Matrix values_;
  std::vector<std::string> ids_;
};

/// Clamped uniform B-spline basis on [0,1].
class BSplineBasis {
 public:
  BSplineBasis(int num_basis, int degree);

  int num_basis() const { return num_basis_; }
  int degree() const { return degree_; }
  const std::vector<double>& knots() const { return knots_; }

  /// L x L matrix of inner products, computed once at construction.
  const Matrix& gram() const { return gram_; }

  /// |points| x L evaluation matrix. Throws DomainError outside [0,1].
  Matrix evaluate(const Vector& points) const;

  friend bool operator==(const BSplineBasis& a, const BSplineBasis& b) {
    return a.num_basis_ == b.num_basis_ && a.degree_ == b.degree_;
  }

 private:
  int num_basis_;
  int degree_;
  std::vector<double> knots_;
  Matrix gram_;
};

/// Expansion coefficients of n curves on a basis (row i = curve i).
struct BasisCoefficients {
  Matrix coefficients;
  BSplineBasis basis;
  /// Coefficients of the mean function removed before smoothing, or zero.
  Vector mean_coeff;
  /// RMS of (values - fitted) over every sample point of every curve.
  double residual_rms = 0.0;

  Index num_curves() const { return coefficients.rows(); }
};

struct CenteredData {
  FunctionalDataset data;
  Vector mean;
};

BSplineBasis make_bspline_basis(int num_basis, int degree);

Matrix evaluate_basis(const BSplineBasis& basis, const Vector& points);

/// Per-curve ridge least squares on the grid evaluation matrix.
/// SingularityError if ridge == 0 and the evaluation matrix is rank deficient.
BasisCoefficients smooth_curves(const FunctionalDataset& data, const BSplineBasis& basis,
                                double ridge = 1e-8);

/// Subtract the pointwise mean curve.
CenteredData center(const FunctionalDataset& data);

/// Subtract a given mean curve (e.g. a training mean applied to test data).
FunctionalDataset center_by(const FunctionalDataset& data, const Vector& mean);

/// Subtract column means of the coefficient matrix, recording them in mean_coeff.
BasisCoefficients center_coefficients(const BasisCoefficients& coeffs);

/// Maximum |column mean| of a coefficient matrix relative to its scale.
bool coefficients_centered(const Matrix& coefficients, double rel_tol = 1e-8);

/// Curves evaluated on `points`: A * Phi(points)^T.
Matrix evaluate_curves(const BasisCoefficients& coeffs, const Vector& points);

/// Trapezoid quadrature weights for a strictly increasing grid.
Vector trapezoid_weights(const Vector& grid);

/// Gauss-Legendre nodes and weights on [-1, 1].
std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int num_nodes);

namespace detail {

/// Clamped uniform knot vector with num_basis + degree + 1 entries.
std::vector<double> clamped_uniform_knots(int num_basis, int degree);

/// Values of all num_basis B-splines at t (Cox-de Boor), any degree >= 0.
void bspline_values(const std::vector<double>& knots, int degree, int num_basis, double t,
                    double* out);

/// Gram matrix by Gauss-Legendre on each knot span, any degree >= 0.
Matrix bspline_gram(const std::vector<double>& knots, int degree, int num_basis);

}  // namespace detail

}  // namespace sfofr
