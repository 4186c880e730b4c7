#pragma once

// Multivariate spatial autoregression on score matrices:
//   Y = W Y rho + X B + E,  rows = spatial units, columns = components.
// Every operator acts on n x K matrices; the nK x nK Kronecker forms are never built.

#include <optional>
#include <string>
#include <vector>

#include "sfofr/fdbasis.hpp"
#include "sfofr/spatial.hpp"

namespace sfofr {

struct MsarData {
  Matrix Y;  // n x Ky response scores
  Matrix X;  // n x Kx predictor scores
  SpatialWeights W;

  Index n() const { return Y.rows(); }
  Index ky() const { return Y.cols(); }
  Index kx() const { return X.cols(); }
};

struct MsarParams {
  Matrix rho;        // Ky x Ky
  Matrix B;          // Kx x Ky
  Matrix prec_chol;  // Ky x Ky upper triangular, positive diagonal; precision = R^T R

  Matrix precision() const { return prec_chol.transpose() * prec_chol; }
};

struct MsarOptions {
  /// Gradient-norm tolerance; <= 0 selects 1e-8 * max(1, Q0).
  double tol = 0.0;
  int max_iter = 500;
  /// Feasible set is spectral_radius(rho) < 1 - spectral_margin.
  double spectral_margin = 1e-3;
};

struct MsarFit {
  MsarParams params;
  double objective = 0.0;
  double grad_norm = 0.0;
  double tolerance = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string stop_reason;
  std::vector<double> objective_trace;
  std::vector<double> grad_norm_trace;
  std::vector<double> spectral_radius_trace;
};

enum class ReducedFormStrategy { automatic, eigen, neumann, dense };

/// M - W M rho, the action of I - rho^T (x) W on vec(M).
Matrix apply_S(const Matrix& rho, const SpatialWeights& W, const Matrix& M);

/// Entrywise inverse diagonal of S^T (Omega_e (x) I) S, arranged n x Ky.
Matrix preconditioner_m(const Matrix& rho, const Matrix& prec_chol, const SpatialWeights& W);

/// Least-squares objective Q >= 0.
double objective(const MsarParams& params, const MsarData& data);

/// Gradient over the packed parameter vector (see pack_params):
/// analytic in B, central differences in rho and the precision factor.
Vector gradient(const MsarParams& params, const MsarData& data);

/// Parameter vector [vec(rho), vec(B), zeta], column-major vec; zeta walks the
/// upper triangle column by column with log-transformed diagonal entries.
Vector pack_params(const MsarParams& params);
MsarParams unpack_params(const Vector& theta, Index ky, Index kx);
Index num_params(Index ky, Index kx);

/// rho = 0, B = OLS, precision = inverse OLS residual covariance (identity if singular).
MsarParams default_init(const MsarData& data);

MsarFit fit_msar(const MsarData& data, const std::optional<MsarParams>& init = std::nullopt,
                 const MsarOptions& opts = {});

/// Solves M - W M rho = C. DivergenceError when rho^T (x) W has spectral radius >= 1.
Matrix reduced_form_solve(const Matrix& rho, const SpatialWeights& W, const Matrix& C,
                          ReducedFormStrategy strategy = ReducedFormStrategy::automatic);

/// Largest eigenvalue magnitude.
double spectral_radius(const Matrix& M);

/// Spectral radius of W; the max row sum (an upper bound, exact without isolated
/// units) when W is row-normalized.
double weights_spectral_radius(const SpatialWeights& W);

}  // namespace sfofr
