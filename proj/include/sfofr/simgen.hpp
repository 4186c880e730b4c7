#pragma once

// Synthetic spatial functional data and the Monte Carlo harness.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sfofr/fdbasis.hpp"
#include "sfofr/model.hpp"
#include "sfofr/spatial.hpp"

namespace sfofr {

using Rng = std::mt19937_64;

enum class NoiseKind { white, smooth };

struct SimConfig {
  Index n_train = 250;
  Index n_test = 1000;
  double alpha = 0.9;
  WeightKind weight_kind = WeightKind::exponential;
  double decay = 0.5;
  Index grid_size = 101;
  double noise_sd = 1.0;
  NoiseKind noise = NoiseKind::white;
  std::uint64_t seed = 0;
  double neumann_tol = 1e-3;
  Index neumann_max_terms = 10000;
  SfofrOptions fit;
};

/// Throws ParameterError on out-of-range settings.
void validate(const SimConfig& cfg);

/// r / m for r = 1..m.
Vector simulation_grid(Index m);

/// Independent stream for (seed, replication).
Rng make_rng(std::uint64_t seed, std::uint64_t replication);

inline constexpr int kFourierPairs = 10;

/// Curves from an n x 20 draw matrix laid out (cos_1, sin_1, ..., cos_10, sin_10).
FunctionalDataset predictors_from_draws(const Matrix& draws, const Vector& grid);
FunctionalDataset gen_predictors(Index n, const Vector& grid, Rng& rng);

double true_beta(double s, double t);
double true_rho(double u, double t, double alpha);
SurfaceEstimate true_beta_surface(const Vector& sgrid, const Vector& tgrid);
SurfaceEstimate true_rho_surface(const Vector& ugrid, const Vector& tgrid, double alpha);

/// n x T matrix of int X_i(s) beta(s,t) ds by the trapezoid rule on the curve grid.
Matrix signal_term(const FunctionalDataset& X);

/// Discretized kernel operator: (T f)(t) = sum_u w_u f(u) rho(u,t), as a T x T matrix
/// acting on row vectors from the right.
Matrix kernel_operator(const Vector& grid, double alpha);

/// f -> W f K in the discretized model.
Matrix apply_T(const SpatialWeights& W, const Matrix& K, const Matrix& F);

struct NeumannResult {
  Matrix sum;
  int terms = 0;
  /// Max-abs value of each added term.
  std::vector<double> increments;
};

/// sum_m T^m G until the max-abs term drops below tol.
/// GenerationError after 50 consecutive growing terms or more than max_terms terms.
NeumannResult neumann_series(const SpatialWeights& W, const Matrix& K, const Matrix& G, double tol,
                             Index max_terms);

struct GeneratedResponse {
  FunctionalDataset Y;
  Matrix G;          // signal plus noise
  Matrix signal;     // noise-free part of G
  Matrix cond_mean;  // (I - T)^{-1} signal
  int terms = 0;
  std::vector<double> increments;
};

GeneratedResponse gen_response(const FunctionalDataset& X, const SpatialWeights& W, double alpha, Rng& rng,
                               const SimConfig& cfg);

/// Row-normalized weights of cfg.weight_kind for n units.
SpatialWeights simulation_weights(Index n, const SimConfig& cfg);

struct SimSample {
  FunctionalDataset X;
  GeneratedResponse response;
  SpatialWeights W;
};

struct SimTruth {
  Vector grid;
  SurfaceEstimate beta;
  SurfaceEstimate rho;
  SimSample train;
  SimSample test;
};

/// Training then test sample from one stream.
SimTruth simulate(const SimConfig& cfg, std::uint64_t replication = 0);

struct MethodMetrics {
  double ise_beta = 0.0;
  double ise_rho = 0.0;
  /// Against the noise-free conditional mean.
  double mse = 0.0;
  double mspe = 0.0;
  /// Against the observed noisy curves.
  double mse_obs = 0.0;
  double mspe_obs = 0.0;
  Index ky = 0;
  Index kx = 0;
  bool converged = true;
};

struct ReplicationResult {
  std::uint64_t replication = 0;
  MethodMetrics sfofr;
  MethodMetrics baseline;
  int neumann_terms = 0;
};

ReplicationResult run_replication(const SimConfig& cfg, std::uint64_t replication);

/// Replications 0..reps-1 on up to `threads` workers; results ordered by replication.
std::vector<ReplicationResult> run_monte_carlo(const SimConfig& cfg, Index reps, unsigned threads);

struct MetricSummary {
  double mean = 0.0;
  double sd = 0.0;
  double se = 0.0;
};

struct MethodSummary {
  MetricSummary ise_beta, ise_rho, mse, mspe, mse_obs, mspe_obs;
};

struct McSummary {
  Index replications = 0;
  MethodSummary sfofr;
  MethodSummary baseline;
};

McSummary summarize(const std::vector<ReplicationResult>& results);

const char* to_string(NoiseKind kind);

}  // namespace sfofr
