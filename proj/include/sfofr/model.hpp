#pragma once

// Spatial function-on-function regression: pipeline, surfaces, prediction and metrics.

#include <optional>
#include <string>
#include <vector>

#include "sfofr/fdbasis.hpp"
#include "sfofr/fpca.hpp"
#include "sfofr/msar.hpp"
#include "sfofr/spatial.hpp"

namespace sfofr {

struct SfofrOptions {
  int num_basis = 20;
  int degree = 3;
  double ridge = 1e-8;
  double var_threshold = 0.95;
  /// Fixed component counts override var_threshold.
  std::optional<Index> ky;
  std::optional<Index> kx;
  MsarOptions msar;
};

enum class FitMethod { sfofr, fpc_baseline };

struct SfofrFit {
  FitMethod method = FitMethod::sfofr;
  FpcDecomposition response_decomp;   // spatial kind for sfofr, classical for the baseline
  FpcDecomposition predictor_decomp;  // classical
  MsarFit msar_fit;
  Vector y_mean;  // on y_grid
  Vector x_mean;  // on x_grid
  Vector y_grid;
  Vector x_grid;
  std::vector<std::string> ids;
  /// Training weights; zero for the baseline.
  SpatialWeights W;
  SfofrOptions options;

  Index ky() const { return response_decomp.num_components(); }
  Index kx() const { return predictor_decomp.num_components(); }
  const Matrix& rho() const { return msar_fit.params.rho; }
  const Matrix& B() const { return msar_fit.params.B; }
};

enum class SurfaceKind { rho, beta };

struct SurfaceEstimate {
  SurfaceKind kind = SurfaceKind::rho;
  Vector row_grid;  // u for rho, s for beta
  Vector col_grid;  // t
  Matrix values;    // |row_grid| x |col_grid|
};

struct ContractionReport {
  double sup_kernel = 0.0;
  /// sup_t of the trapezoid integral of |rho(u,t)| over u.
  double l1_operator_bound = 0.0;
  double w_inf = 0.0;
  bool strict_holds = false;
  bool weak_holds = false;
};

SfofrFit fit_sfofr(const FunctionalDataset& Y, const FunctionalDataset& X, const SpatialWeights& W,
                   const SfofrOptions& opts = {});

/// Non-spatial baseline: classical FPC on both sides, OLS scores regression, rho = 0.
SfofrFit fit_fofr_fpc(const FunctionalDataset& Y, const FunctionalDataset& X, const SfofrOptions& opts = {});

SurfaceEstimate reconstruct_rho(const SfofrFit& fit, const Vector& ugrid, const Vector& tgrid);
SurfaceEstimate reconstruct_beta(const SfofrFit& fit, const Vector& sgrid, const Vector& tgrid);

/// phi(u)^T rho phi(t) for an arbitrary Ky x Ky matrix.
SurfaceEstimate rho_surface(const FpcDecomposition& response, const Matrix& rho, const Vector& ugrid,
                            const Vector& tgrid);
/// psi(s)^T B phi(t) for an arbitrary Kx x Ky matrix.
SurfaceEstimate beta_surface(const FpcDecomposition& predictor, const FpcDecomposition& response, const Matrix& B,
                             const Vector& sgrid, const Vector& tgrid);

/// Reduced-form mean with zero errors on the training units.
FunctionalDataset fitted_values(const SfofrFit& fit,
                                ReducedFormStrategy strategy = ReducedFormStrategy::automatic);

FunctionalDataset predict(const SfofrFit& fit, const FunctionalDataset& Xnew, const SpatialWeights& Wnew,
                          ReducedFormStrategy strategy = ReducedFormStrategy::automatic);

ContractionReport contraction_diagnostic(const SurfaceEstimate& rho, const SpatialWeights& W);

/// Trapezoid double integral of the squared difference.
double ise_surface(const SurfaceEstimate& est, const SurfaceEstimate& truth);

/// Mean over units of the trapezoid integral of the squared error.
double mse_curves(const FunctionalDataset& pred, const FunctionalDataset& obs);

/// 1 - sum_i int (Y - Yhat)^2 / sum_i int (Y - Ybar)^2.
double r_squared(const FunctionalDataset& pred, const FunctionalDataset& obs);

const char* to_string(FitMethod method);

}  // namespace sfofr
