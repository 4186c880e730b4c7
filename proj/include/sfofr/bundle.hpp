#pragma once

// Fit bundle: a directory holding manifest.json plus CSV matrices.
//
//   manifest.json                 dimensions, options, convergence report, diagnostics, config
//   response_chi.csv, predictor_chi.csv           L x K eigenfunction coefficients
//   response_eigenvalues.csv, predictor_eigenvalues.csv
//   response_scores.csv, predictor_scores.csv     n x K
//   rho.csv, B.csv, prec_chol.csv
//   y_mean.csv, x_mean.csv        mean curves (curve format)
//   weights.csv                   training weights (triplet format)
//   rho_surface.csv, beta_surface.csv             tidy, 101 x 101 grid on [0,1]
//   fitted.csv                    reduced-form fitted curves

#include <filesystem>

#include "json.hpp"
#include "sfofr/model.hpp"

namespace sfofr {

inline constexpr int kBundleVersion = 1;
inline constexpr Index kSurfaceGridSize = 101;

/// 0, 0.01, ..., 1.
Vector surface_grid();

nlohmann::json options_to_json(const SfofrOptions& opts);
SfofrOptions options_from_json(const nlohmann::json& j);

/// Convergence report and per-iteration traces.
nlohmann::json msar_report(const MsarFit& fit);

void save_bundle(const std::filesystem::path& dir, const SfofrFit& fit, const nlohmann::json& config = {});
SfofrFit load_bundle(const std::filesystem::path& dir);

}  // namespace sfofr
