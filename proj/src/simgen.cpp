#include "sfofr/simgen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <thread>

#include "sfofr/error.hpp"

namespace sfofr {

namespace {

constexpr double kPi = std::numbers::pi;

Matrix normal_matrix(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> N(0.0, 1.0);
  Matrix out(rows, cols);
  // Row-major draw order so curve i only depends on draws for curves < i.
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) out(i, j) = N(rng);
  return out;
}

Matrix gen_noise(Index n, const Vector& grid, Rng& rng, const SimConfig& cfg) {
  if (cfg.noise == NoiseKind::white) return cfg.noise_sd * normal_matrix(n, grid.size(), rng);
  constexpr int kHarmonics = 5;
  const Matrix coef = normal_matrix(n, 2 * kHarmonics, rng);
  Matrix basis(2 * kHarmonics, grid.size());
  for (int k = 1; k <= kHarmonics; ++k)
    for (Index r = 0; r < grid.size(); ++r) {
      basis(2 * k - 2, r) = std::cos(2.0 * kPi * k * grid[r]);
      basis(2 * k - 1, r) = std::sin(2.0 * kPi * k * grid[r]);
    }
  return (cfg.noise_sd / std::sqrt(static_cast<double>(kHarmonics))) * coef * basis;
}

MetricSummary summarize_metric(const std::vector<double>& v) {
  MetricSummary s;
  if (v.empty()) return s;
  const double n = static_cast<double>(v.size());
  for (double x : v) s.mean += x;
  s.mean /= n;
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / (n - 1.0));
    s.se = s.sd / std::sqrt(n);
  }
  return s;
}

MethodSummary summarize_method(const std::vector<ReplicationResult>& results,
                               MethodMetrics ReplicationResult::*which) {
  auto collect = [&](double MethodMetrics::*field) {
    std::vector<double> v;
    v.reserve(results.size());
    for (const auto& r : results) v.push_back((r.*which).*field);
    return summarize_metric(v);
  };
  return MethodSummary{collect(&MethodMetrics::ise_beta), collect(&MethodMetrics::ise_rho),
                       collect(&MethodMetrics::mse),      collect(&MethodMetrics::mspe),
                       collect(&MethodMetrics::mse_obs),  collect(&MethodMetrics::mspe_obs)};
}

FunctionalDataset as_dataset(const FunctionalDataset& like, const Matrix& values) { return like.with_values(values); }

MethodMetrics evaluate(const SfofrFit& fit, const SimTruth& truth) {
  MethodMetrics m;
  m.ky = fit.ky();
  m.kx = fit.kx();
  m.converged = fit.msar_fit.converged;
  m.ise_beta = ise_surface(reconstruct_beta(fit, truth.grid, truth.grid), truth.beta);
  m.ise_rho = ise_surface(reconstruct_rho(fit, truth.grid, truth.grid), truth.rho);
  const FunctionalDataset fitted = fitted_values(fit);
  m.mse = mse_curves(fitted, as_dataset(truth.train.response.Y, truth.train.response.cond_mean));
  m.mse_obs = mse_curves(fitted, truth.train.response.Y);
  const FunctionalDataset pred = predict(fit, truth.test.X, truth.test.W);
  m.mspe = mse_curves(pred, as_dataset(truth.test.response.Y, truth.test.response.cond_mean));
  m.mspe_obs = mse_curves(pred, truth.test.response.Y);
  return m;
}

}  // namespace

void validate(const SimConfig& cfg) {
  if (cfg.n_train < 2 || cfg.n_test < 2) throw ParameterError("simulation: n_train and n_test must be >= 2");
  if (!(cfg.alpha >= 0.0 && cfg.alpha < 1.0))
    throw ParameterError("simulation: alpha must be in [0, 1), got " + std::to_string(cfg.alpha));
  if (cfg.weight_kind != WeightKind::inverse_distance && cfg.weight_kind != WeightKind::exponential)
    throw ParameterError("simulation: weight kind must be inverse_distance or exponential");
  if (cfg.weight_kind == WeightKind::exponential && !(cfg.decay > 0.0))
    throw ParameterError("simulation: decay must be > 0");
  if (cfg.grid_size < 4) throw ParameterError("simulation: grid_size must be >= 4");
  if (!(cfg.noise_sd >= 0.0)) throw ParameterError("simulation: noise_sd must be >= 0");
  if (!(cfg.neumann_tol > 0.0)) throw ParameterError("simulation: neumann_tol must be > 0");
  if (cfg.neumann_max_terms < 1) throw ParameterError("simulation: neumann_max_terms must be >= 1");
}

Vector simulation_grid(Index m) {
  Vector g(m);
  for (Index r = 1; r <= m; ++r) g[r - 1] = static_cast<double>(r) / static_cast<double>(m);
  return g;
}

Rng make_rng(std::uint64_t seed, std::uint64_t replication) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(replication), static_cast<std::uint32_t>(replication >> 32)};
  return Rng(seq);
}

FunctionalDataset predictors_from_draws(const Matrix& draws, const Vector& grid) {
  if (draws.cols() != 2 * kFourierPairs)
    throw ParameterError("predictor draws need " + std::to_string(2 * kFourierPairs) + " columns");
  Matrix basis(2 * kFourierPairs, grid.size());
  for (int k = 1; k <= kFourierPairs; ++k) {
    const double scale = std::sqrt(2.0) * std::pow(static_cast<double>(k), -1.5);
    for (Index r = 0; r < grid.size(); ++r) {
      basis(2 * k - 2, r) = scale * std::cos(k * kPi * grid[r]);
      basis(2 * k - 1, r) = scale * std::sin(k * kPi * grid[r]);
    }
  }
  return FunctionalDataset(grid, draws * basis);
}

FunctionalDataset gen_predictors(Index n, const Vector& grid, Rng& rng) {
  return predictors_from_draws(normal_matrix(n, 2 * kFourierPairs, rng), grid);
}

double true_beta(double s, double t) { return 2.0 + s + t + 0.5 * std::sin(2.0 * kPi * s * t); }

double true_rho(double u, double t, double alpha) { return alpha * (1.0 + u * t) / (1.0 + std::abs(u - t)); }

SurfaceEstimate true_beta_surface(const Vector& sgrid, const Vector& tgrid) {
  Matrix v(sgrid.size(), tgrid.size());
  for (Index a = 0; a < sgrid.size(); ++a)
    for (Index b = 0; b < tgrid.size(); ++b) v(a, b) = true_beta(sgrid[a], tgrid[b]);
  return SurfaceEstimate{SurfaceKind::beta, sgrid, tgrid, std::move(v)};
}

SurfaceEstimate true_rho_surface(const Vector& ugrid, const Vector& tgrid, double alpha) {
  Matrix v(ugrid.size(), tgrid.size());
  for (Index a = 0; a < ugrid.size(); ++a)
    for (Index b = 0; b < tgrid.size(); ++b) v(a, b) = true_rho(ugrid[a], tgrid[b], alpha);
  return SurfaceEstimate{SurfaceKind::rho, ugrid, tgrid, std::move(v)};
}

Matrix signal_term(const FunctionalDataset& X) {
  const Vector& g = X.grid();
  const Matrix weighted_beta = trapezoid_weights(g).asDiagonal() * true_beta_surface(g, g).values;
  return X.values() * weighted_beta;
}

Matrix kernel_operator(const Vector& grid, double alpha) {
  return trapezoid_weights(grid).asDiagonal() * true_rho_surface(grid, grid, alpha).values;
}

Matrix apply_T(const SpatialWeights& W, const Matrix& K, const Matrix& F) { return W.multiply(F) * K; }

NeumannResult neumann_series(const SpatialWeights& W, const Matrix& K, const Matrix& G, double tol,
                             Index max_terms) {
  NeumannResult out;
  out.sum = G;
  if (G.size() == 0) return out;
  Matrix term = G;
  double previous = term.cwiseAbs().maxCoeff();
  int growing = 0;
  while (previous >= tol) {
    if (out.terms >= max_terms)
      throw GenerationError("Neumann series did not reach tolerance " + std::to_string(tol) + " within " +
                            std::to_string(max_terms) + " terms (last increment " + std::to_string(previous) + ")");
    term = apply_T(W, K, term);
    const double inc = term.cwiseAbs().maxCoeff();
    if (!std::isfinite(inc)) throw GenerationError("Neumann series produced non-finite terms");
    out.sum += term;
    ++out.terms;
    out.increments.push_back(inc);
    growing = inc > previous ? growing + 1 : 0;
    if (growing >= 50) {
      const double bound = K.cwiseAbs().colwise().sum().maxCoeff() * W.inf_norm();
      throw GenerationError("Neumann series diverges: 50 consecutive growing terms; operator bound sup_t " +
                            std::string("int |rho| du * |W|_inf = ") + std::to_string(bound));
    }
    previous = inc;
  }
  return out;
}

GeneratedResponse gen_response(const FunctionalDataset& X, const SpatialWeights& W, double alpha, Rng& rng,
                               const SimConfig& cfg) {
  if (W.size() != X.num_curves()) throw ParameterError("gen_response: W size does not match the predictor count");
  if (!W.normalized()) throw ParameterError("gen_response: W must be row-normalized");
  const Matrix signal = signal_term(X);
  Matrix G = signal + gen_noise(X.num_curves(), X.grid(), rng, cfg);
  const Matrix K = kernel_operator(X.grid(), alpha);
  NeumannResult y = neumann_series(W, K, G, cfg.neumann_tol, cfg.neumann_max_terms);
  NeumannResult mean = neumann_series(W, K, signal, cfg.neumann_tol, cfg.neumann_max_terms);
  return GeneratedResponse{X.with_values(std::move(y.sum)), std::move(G), signal, std::move(mean.sum), y.terms,
                           std::move(y.increments)};
}

SpatialWeights simulation_weights(Index n, const SimConfig& cfg) {
  if (cfg.weight_kind == WeightKind::inverse_distance) return inverse_distance_weights(n);
  return exponential_weights(n, cfg.decay);
}

SimTruth simulate(const SimConfig& cfg, std::uint64_t replication) {
  validate(cfg);
  Rng rng = make_rng(cfg.seed, replication);
  const Vector grid = simulation_grid(cfg.grid_size);
  auto sample = [&](Index n) {
    FunctionalDataset X = gen_predictors(n, grid, rng);
    SpatialWeights W = simulation_weights(n, cfg);
    GeneratedResponse r = gen_response(X, W, cfg.alpha, rng, cfg);
    return SimSample{std::move(X), std::move(r), std::move(W)};
  };
  SimSample train = sample(cfg.n_train);
  SimSample test = sample(cfg.n_test);
  return SimTruth{grid, true_beta_surface(grid, grid), true_rho_surface(grid, grid, cfg.alpha), std::move(train),
                  std::move(test)};
}

ReplicationResult run_replication(const SimConfig& cfg, std::uint64_t replication) {
  try {
    const SimTruth truth = simulate(cfg, replication);
    ReplicationResult out;
    out.replication = replication;
    out.neumann_terms = truth.train.response.terms;
    const SfofrFit spatial = fit_sfofr(truth.train.response.Y, truth.train.X, truth.train.W, cfg.fit);
    out.sfofr = evaluate(spatial, truth);
    const SfofrFit base = fit_fofr_fpc(truth.train.response.Y, truth.train.X, cfg.fit);
    out.baseline = evaluate(base, truth);
    return out;
  } catch (Error& e) {
    e.add_context("replication " + std::to_string(replication));
    throw;
  }
}

std::vector<ReplicationResult> run_monte_carlo(const SimConfig& cfg, Index reps, unsigned threads) {
  validate(cfg);
  if (reps < 1) throw ParameterError("Monte Carlo: need at least one replication");
  std::vector<ReplicationResult> results(static_cast<std::size_t>(reps));
  const unsigned workers =
      std::max(1u, std::min<unsigned>(threads == 0 ? 1u : threads, static_cast<unsigned>(reps)));
  std::atomic<Index> next{0};
  std::exception_ptr failure;
  Index failed_at = reps;
  std::mutex mu;
  auto work = [&] {
    for (;;) {
      const Index r = next.fetch_add(1);
      if (r >= reps) return;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (failure && r > failed_at) return;
      }
      try {
        results[static_cast<std::size_t>(r)] = run_replication(cfg, static_cast<std::uint64_t>(r));
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        // Report the lowest failing replication so errors do not depend on scheduling.
        if (r < failed_at) {
          failed_at = r;
          failure = std::current_exception();
        }
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

McSummary summarize(const std::vector<ReplicationResult>& results) {
  return McSummary{static_cast<Index>(results.size()), summarize_method(results, &ReplicationResult::sfofr),
                   summarize_method(results, &ReplicationResult::baseline)};
}

const char* to_string(NoiseKind kind) { return kind == NoiseKind::white ? "white" : "smooth"; }

}  // namespace sfofr
