#include "sfofr/model.hpp"

#include <algorithm>
#include <cmath>

#include "sfofr/error.hpp"

namespace sfofr {

namespace {

template <class F>
auto staged(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (Error& e) {
    e.add_context(stage);
    throw;
  }
}

void check_pair(const FunctionalDataset& Y, const FunctionalDataset& X) {
  if (Y.num_curves() != X.num_curves())
    throw DataError("response has " + std::to_string(Y.num_curves()) + " curves, predictor has " +
                    std::to_string(X.num_curves()));
}

Truncation truncation_for(const std::optional<Index>& fixed, double threshold) {
  return fixed ? Truncation::components(*fixed) : Truncation::variance(threshold);
}

struct Prepared {
  CenteredData y;
  CenteredData x;
  BasisCoefficients y_coeffs;
  BasisCoefficients x_coeffs;
};

Prepared prepare(const FunctionalDataset& Y, const FunctionalDataset& X, const SfofrOptions& opts) {
  check_pair(Y, X);
  if (!(opts.var_threshold > 0.0 && opts.var_threshold <= 1.0))
    throw ParameterError("var_threshold must be in (0, 1], got " + std::to_string(opts.var_threshold));
  const BSplineBasis basis = staged("basis", [&] { return make_bspline_basis(opts.num_basis, opts.degree); });
  CenteredData yc = center(Y);
  CenteredData xc = center(X);
  BasisCoefficients ya = staged("smoothing response", [&] { return smooth_curves(yc.data, basis, opts.ridge); });
  BasisCoefficients xa = staged("smoothing predictor", [&] { return smooth_curves(xc.data, basis, opts.ridge); });
  return Prepared{std::move(yc), std::move(xc), std::move(ya), std::move(xa)};
}

bool same_grid(const Vector& a, const Vector& b) {
  return a.size() == b.size() && (a - b).cwiseAbs().maxCoeff() <= 1e-12;
}

Vector integrate_rows(const Matrix& values, const Vector& grid) { return values * trapezoid_weights(grid); }

void check_curve_pair(const FunctionalDataset& pred, const FunctionalDataset& obs) {
  if (pred.num_curves() != obs.num_curves())
    throw ParameterError("metric: " + std::to_string(pred.num_curves()) + " predicted curves vs " +
                         std::to_string(obs.num_curves()) + " observed");
  if (!same_grid(pred.grid(), obs.grid())) throw ParameterError("metric: predicted and observed grids differ");
}

FunctionalDataset curves_from_scores(const SfofrFit& fit, const Matrix& M, const std::vector<std::string>& ids) {
  Matrix values = reconstruct(M, fit.response_decomp, fit.y_grid);
  values.rowwise() += fit.y_mean.transpose();
  return FunctionalDataset(fit.y_grid, std::move(values), ids);
}

}  // namespace

SfofrFit fit_sfofr(const FunctionalDataset& Y, const FunctionalDataset& X, const SpatialWeights& W,
                   const SfofrOptions& opts) {
  if (W.size() != Y.num_curves())
    throw DataError("W has " + std::to_string(W.size()) + " units but there are " +
                    std::to_string(Y.num_curves()) + " curves");
  Prepared p = prepare(Y, X, opts);
  FpcDecomposition ydec = staged("response SFPCA", [&] {
    return fit_sfpc(p.y_coeffs, W, truncation_for(opts.ky, opts.var_threshold));
  });
  FpcDecomposition xdec = staged("predictor FPCA", [&] {
    return fit_fpc(p.x_coeffs, truncation_for(opts.kx, opts.var_threshold));
  });
  MsarData data{ydec.scores, xdec.scores, W};
  MsarFit mfit = staged("MSAR", [&] { return fit_msar(data, std::nullopt, opts.msar); });
  return SfofrFit{FitMethod::sfofr, std::move(ydec), std::move(xdec), std::move(mfit),
                  p.y.mean, p.x.mean, Y.grid(), X.grid(), Y.ids(), W, opts};
}

SfofrFit fit_fofr_fpc(const FunctionalDataset& Y, const FunctionalDataset& X, const SfofrOptions& opts) {
  Prepared p = prepare(Y, X, opts);
  FpcDecomposition ydec = staged("response FPCA", [&] {
    return fit_fpc(p.y_coeffs, truncation_for(opts.ky, opts.var_threshold));
  });
  FpcDecomposition xdec = staged("predictor FPCA", [&] {
    return fit_fpc(p.x_coeffs, truncation_for(opts.kx, opts.var_threshold));
  });
  const Index n = Y.num_curves();
  const Index ky = ydec.num_components();
  if (n <= xdec.num_components())
    throw ParameterError("baseline: need more curves than predictor components");
  MsarFit mfit;
  mfit.params.rho = Matrix::Zero(ky, ky);
  mfit.params.B = staged("baseline OLS", [&] {
    Eigen::ColPivHouseholderQR<Matrix> qr(xdec.scores);
    if (qr.rank() < xdec.scores.cols()) throw SingularityError("predictor scores are rank deficient");
    return Matrix(qr.solve(ydec.scores));
  });
  mfit.params.prec_chol = Matrix::Identity(ky, ky);
  mfit.converged = true;
  mfit.stop_reason = "closed_form";
  const Matrix R = ydec.scores - xdec.scores * mfit.params.B;
  mfit.objective = R.squaredNorm();
  return SfofrFit{FitMethod::fpc_baseline, std::move(ydec), std::move(xdec), std::move(mfit),
                  p.y.mean, p.x.mean, Y.grid(), X.grid(), Y.ids(), SpatialWeights::from_triplets(n, {}), opts};
}

SurfaceEstimate rho_surface(const FpcDecomposition& response, const Matrix& rho, const Vector& ugrid,
                            const Vector& tgrid) {
  if (rho.rows() != response.num_components() || rho.cols() != response.num_components())
    throw ParameterError("rho surface: matrix must be Ky x Ky");
  const Matrix Pu = eigenfunctions(response, ugrid);
  const Matrix Pt = eigenfunctions(response, tgrid);
  return SurfaceEstimate{SurfaceKind::rho, ugrid, tgrid, Pu * rho * Pt.transpose()};
}

SurfaceEstimate beta_surface(const FpcDecomposition& predictor, const FpcDecomposition& response, const Matrix& B,
                             const Vector& sgrid, const Vector& tgrid) {
  if (B.rows() != predictor.num_components() || B.cols() != response.num_components())
    throw ParameterError("beta surface: matrix must be Kx x Ky");
  const Matrix Ps = eigenfunctions(predictor, sgrid);
  const Matrix Pt = eigenfunctions(response, tgrid);
  return SurfaceEstimate{SurfaceKind::beta, sgrid, tgrid, Ps * B * Pt.transpose()};
}

SurfaceEstimate reconstruct_rho(const SfofrFit& fit, const Vector& ugrid, const Vector& tgrid) {
  return rho_surface(fit.response_decomp, fit.rho(), ugrid, tgrid);
}

SurfaceEstimate reconstruct_beta(const SfofrFit& fit, const Vector& sgrid, const Vector& tgrid) {
  return beta_surface(fit.predictor_decomp, fit.response_decomp, fit.B(), sgrid, tgrid);
}

FunctionalDataset fitted_values(const SfofrFit& fit, ReducedFormStrategy strategy) {
  const Matrix C = fit.predictor_decomp.scores * fit.B();
  const Matrix M = staged("fitted values", [&] { return reduced_form_solve(fit.rho(), fit.W, C, strategy); });
  return curves_from_scores(fit, M, fit.ids);
}

FunctionalDataset predict(const SfofrFit& fit, const FunctionalDataset& Xnew, const SpatialWeights& Wnew,
                          ReducedFormStrategy strategy) {
  if (!same_grid(Xnew.grid(), fit.x_grid)) throw DataError("predict: predictor grid differs from the training grid");
  if (Wnew.size() != Xnew.num_curves())
    throw DataError("predict: W has " + std::to_string(Wnew.size()) + " units but there are " +
                    std::to_string(Xnew.num_curves()) + " curves");
  const FunctionalDataset xc = center_by(Xnew, fit.x_mean);
  const BasisCoefficients coeffs = staged("smoothing predictor", [&] {
    return smooth_curves(xc, fit.predictor_decomp.basis, fit.options.ridge);
  });
  const Matrix xs = project(coeffs, fit.predictor_decomp);
  const Matrix C = xs * fit.B();
  const Matrix M = staged("prediction", [&] { return reduced_form_solve(fit.rho(), Wnew, C, strategy); });
  return curves_from_scores(fit, M, Xnew.ids());
}

ContractionReport contraction_diagnostic(const SurfaceEstimate& rho, const SpatialWeights& W) {
  ContractionReport r;
  r.w_inf = W.inf_norm();
  if (rho.values.size() == 0) return r;
  r.sup_kernel = rho.values.cwiseAbs().maxCoeff();
  if (rho.row_grid.size() >= 2) {
    const Vector w = trapezoid_weights(rho.row_grid);
    r.l1_operator_bound = (rho.values.cwiseAbs().transpose() * w).maxCoeff();
  }
  r.strict_holds = r.sup_kernel * r.w_inf < 1.0;
  r.weak_holds = r.l1_operator_bound * r.w_inf < 1.0;
  return r;
}

double ise_surface(const SurfaceEstimate& est, const SurfaceEstimate& truth) {
  if (!same_grid(est.row_grid, truth.row_grid) || !same_grid(est.col_grid, truth.col_grid))
    throw ParameterError("ISE: surface grids differ");
  if (est.values.rows() != est.row_grid.size() || est.values.cols() != est.col_grid.size() ||
      truth.values.rows() != truth.row_grid.size() || truth.values.cols() != truth.col_grid.size())
    throw ParameterError("ISE: surface values do not match their grids");
  const Vector wr = trapezoid_weights(est.row_grid);
  const Vector wc = trapezoid_weights(est.col_grid);
  const Matrix d2 = (est.values - truth.values).cwiseAbs2();
  return wr.dot(d2 * wc);
}

double mse_curves(const FunctionalDataset& pred, const FunctionalDataset& obs) {
  check_curve_pair(pred, obs);
  const Matrix d2 = (pred.values() - obs.values()).cwiseAbs2();
  return integrate_rows(d2, obs.grid()).mean();
}

double r_squared(const FunctionalDataset& pred, const FunctionalDataset& obs) {
  check_curve_pair(pred, obs);
  const Vector w = trapezoid_weights(obs.grid());
  const double sse = integrate_rows((pred.values() - obs.values()).cwiseAbs2(), obs.grid()).sum();
  const Matrix dev = obs.values().rowwise() - obs.values().colwise().mean();
  const double sst = (dev.cwiseAbs2() * w).sum();
  if (!(sst > 0.0)) throw UndefinedStatisticError("R^2: observed curves have no variation around their mean");
  return 1.0 - sse / sst;
}

const char* to_string(FitMethod method) { return method == FitMethod::sfofr ? "sfofr" : "fpc_baseline"; }

}  // namespace sfofr
