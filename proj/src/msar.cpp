#include "sfofr/msar.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>

#include "sfofr/error.hpp"

namespace sfofr {

namespace {

using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

void check_dims(const Matrix& rho, const SpatialWeights& W, const Matrix& M) {
  if (rho.rows() != rho.cols()) throw ParameterError("rho must be square");
  if (M.cols() != rho.rows())
    throw ParameterError("matrix has " + std::to_string(M.cols()) + " columns but rho is " +
                         std::to_string(rho.rows()) + " x " + std::to_string(rho.rows()));
  if (M.rows() != W.size())
    throw ParameterError("matrix has " + std::to_string(M.rows()) + " rows but W has " + std::to_string(W.size()) +
                         " units");
}

/// Objective evaluator with the W-products that do not depend on parameters cached.
class Objective {
 public:
  explicit Objective(const MsarData& data)
      : data_(data), WY_(data.W.multiply(data.Y)), wtw_(data.W.column_sq_norms()) {}

  Index ky() const { return data_.ky(); }
  Index kx() const { return data_.kx(); }

  double value(const MsarParams& p) const {
    Matrix G;
    Matrix m;
    residual_terms(p, G, m);
    return m.cwiseProduct(G).squaredNorm();
  }

  double value(const Vector& theta) const { return value(unpack_params(theta, ky(), kx())); }

  Matrix grad_B(const MsarParams& p) const {
    Matrix G;
    Matrix m;
    residual_terms(p, G, m);
    const Matrix H = m.cwiseProduct(m).cwiseProduct(G);
    const Matrix P = H - data_.W.multiply(H) * p.rho;
    return -2.0 * data_.X.transpose() * P * p.precision();
  }

  /// Q is quadratic in B; exact minimizer for the given rho and precision.
  Matrix best_B(const MsarParams& p) const {
    const Index n = data_.n();
    const Matrix omega = p.precision();
    Matrix G;
    Matrix m;
    MsarParams zero_b = p;
    zero_b.B.setZero();
    residual_terms(zero_b, G, m);
    const Matrix target = m.cwiseProduct(G);
    const Matrix WtX = data_.W.multiply_transpose(data_.X);
    const Matrix lagged = omega * p.rho.transpose();
    Matrix D(n * ky(), kx() * ky());
    for (Index b = 0; b < ky(); ++b)
      for (Index a = 0; a < kx(); ++a) {
        const Matrix L = m.cwiseProduct(data_.X.col(a) * omega.row(b) - WtX.col(a) * lagged.row(b));
        D.col(a + b * kx()) = Eigen::Map<const Vector>(L.data(), L.size());
      }
    const Vector rhs = Eigen::Map<const Vector>(target.data(), target.size());
    const Vector vb = D.colPivHouseholderQr().solve(rhs);
    return Eigen::Map<const Matrix>(vb.data(), kx(), ky());
  }

  Vector gradient(const Vector& theta) const {
    const Index ky2 = ky() * ky();
    const Index nb = kx() * ky();
    const MsarParams p = unpack_params(theta, ky(), kx());
    Vector g(theta.size());
    const Matrix gB = grad_B(p);
    g.segment(ky2, nb) = Eigen::Map<const Vector>(gB.data(), nb);
    Vector probe = theta;
    auto central = [&](Index j) {
      const double h = 1e-6 * std::max(1.0, std::abs(theta[j]));
      probe[j] = theta[j] + h;
      const double fp = value(probe);
      probe[j] = theta[j] - h;
      const double fm = value(probe);
      probe[j] = theta[j];
      return (fp - fm) / (2.0 * h);
    };
    for (Index j = 0; j < ky2; ++j) g[j] = central(j);
    for (Index j = ky2 + nb; j < theta.size(); ++j) g[j] = central(j);
    return g;
  }

 private:
  void residual_terms(const MsarParams& p, Matrix& G, Matrix& m) const {
    const Matrix omega = p.precision();
    const Matrix R = data_.Y - WY_ * p.rho - data_.X * p.B;
    const Matrix N = R * omega;
    G = N - data_.W.multiply_transpose(N) * p.rho.transpose();
    const Vector lag_diag = (p.rho * omega * p.rho.transpose()).diagonal();
    m.resize(data_.n(), ky());
    for (Index k = 0; k < ky(); ++k)
      m.col(k) = (omega(k, k) + lag_diag[k] * wtw_.array()).inverse().matrix();
  }

  const MsarData& data_;
  Matrix WY_;
  Vector wtw_;
};

void check_data(const MsarData& d) {
  if (d.X.rows() != d.Y.rows())
    throw ParameterError("MSAR: Y has " + std::to_string(d.Y.rows()) + " rows, X has " + std::to_string(d.X.rows()));
  if (d.W.size() != d.Y.rows())
    throw ParameterError("MSAR: W has " + std::to_string(d.W.size()) + " units, scores have " +
                         std::to_string(d.Y.rows()));
  if (d.ky() < 1 || d.kx() < 1) throw ParameterError("MSAR: need at least one response and one predictor component");
  if (!d.Y.allFinite() || !d.X.allFinite()) throw DataError("MSAR: non-finite scores");
}

void check_params(const MsarParams& p, Index ky, Index kx) {
  if (p.rho.rows() != ky || p.rho.cols() != ky || p.B.rows() != kx || p.B.cols() != ky ||
      p.prec_chol.rows() != ky || p.prec_chol.cols() != ky)
    throw ParameterError("MSAR parameter dimensions do not match the data");
}

Matrix ols(const Matrix& X, const Matrix& Y) { return X.colPivHouseholderQr().solve(Y); }

Matrix solve_eigen_strategy(const Eigen::EigenSolver<Matrix>& es, const SpatialWeights& W, const Matrix& C) {
  const Index n = W.size();
  const CMatrix P = es.eigenvectors();
  const CVector lambda = es.eigenvalues();
  const CMatrix Cp = C.cast<std::complex<double>>() * P;
  CMatrix Z(n, C.cols());
  for (Index k = 0; k < C.cols(); ++k) {
    const std::complex<double> lk = lambda[k];
    if (lk == 0.0) {
      Z.col(k) = Cp.col(k);
    } else if (lk.imag() == 0.0) {
      Vector rhs_re = Cp.col(k).real();
      Vector rhs_im = Cp.col(k).imag();
      Matrix sol(n, 2);
      Matrix rhs(n, 2);
      rhs.col(0) = rhs_re;
      rhs.col(1) = rhs_im;
      if (W.is_sparse()) {
        std::vector<Triplet> entries = W.triplets();
        for (auto& e : entries) e = Triplet(e.row(), e.col(), -lk.real() * e.value());
        for (Index i = 0; i < n; ++i) entries.emplace_back(i, i, 1.0);
        Eigen::SparseMatrix<double> A(n, n);
        A.setFromTriplets(entries.begin(), entries.end());
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(A);
        if (lu.info() != Eigen::Success) throw NumericalError("reduced form: sparse factorization failed");
        sol = lu.solve(rhs);
      } else {
        Matrix A = Matrix::Identity(n, n) - lk.real() * W.dense();
        sol = A.partialPivLu().solve(rhs);
      }
      Z.col(k).real() = sol.col(0);
      Z.col(k).imag() = sol.col(1);
    } else {
      CMatrix A = CMatrix::Identity(n, n) - lk * W.dense().cast<std::complex<double>>();
      Z.col(k) = A.partialPivLu().solve(Cp.col(k));
    }
  }
  const CMatrix M = Z * P.inverse();
  return M.real();
}

Matrix solve_neumann(const Matrix& rho, const SpatialWeights& W, const Matrix& C) {
  Matrix M = C;
  for (int iter = 0; iter < 10000; ++iter) {
    Matrix next = C + W.multiply(M) * rho;
    const double delta = (next - M).cwiseAbs().maxCoeff();
    M = std::move(next);
    if (!std::isfinite(delta)) break;
    if (delta < 1e-10) return M;
  }
  throw NumericalError("reduced form: Neumann iteration did not converge in 10000 iterations");
}

Matrix solve_dense(const Matrix& rho, const SpatialWeights& W, const Matrix& C) {
  const Index n = W.size();
  const Index ky = rho.rows();
  if (n * ky > 4000)
    throw ParameterError("reduced form: dense solve limited to n*Ky <= 4000, got " + std::to_string(n * ky));
  const Matrix Wd = W.dense();
  Matrix S = Matrix::Identity(n * ky, n * ky);
  for (Index a = 0; a < ky; ++a)
    for (Index b = 0; b < ky; ++b)
      if (rho(b, a) != 0.0) S.block(a * n, b * n, n, n) -= rho(b, a) * Wd;
  const Vector c = Eigen::Map<const Vector>(C.data(), C.size());
  const Vector m = S.partialPivLu().solve(c);
  return Eigen::Map<const Matrix>(m.data(), n, ky);
}

}  // namespace

Matrix apply_S(const Matrix& rho, const SpatialWeights& W, const Matrix& M) {
  check_dims(rho, W, M);
  return M - W.multiply(M) * rho;
}

Matrix preconditioner_m(const Matrix& rho, const Matrix& prec_chol, const SpatialWeights& W) {
  if (rho.rows() != rho.cols() || prec_chol.rows() != rho.rows() || prec_chol.cols() != rho.rows())
    throw ParameterError("preconditioner: rho and precision factor must be Ky x Ky");
  const Matrix omega = prec_chol.transpose() * prec_chol;
  const Vector lag_diag = (rho * omega * rho.transpose()).diagonal();
  const Vector wtw = W.column_sq_norms();
  Matrix m(W.size(), rho.rows());
  for (Index k = 0; k < rho.rows(); ++k) m.col(k) = (omega(k, k) + lag_diag[k] * wtw.array()).inverse().matrix();
  return m;
}

double objective(const MsarParams& params, const MsarData& data) {
  check_data(data);
  check_params(params, data.ky(), data.kx());
  return Objective(data).value(params);
}

Vector gradient(const MsarParams& params, const MsarData& data) {
  check_data(data);
  check_params(params, data.ky(), data.kx());
  return Objective(data).gradient(pack_params(params));
}

Index num_params(Index ky, Index kx) { return ky * ky + kx * ky + ky * (ky + 1) / 2; }

Vector pack_params(const MsarParams& p) {
  const Index ky = p.rho.rows();
  const Index kx = p.B.rows();
  Vector theta(num_params(ky, kx));
  Index pos = 0;
  for (Index c = 0; c < ky; ++c)
    for (Index r = 0; r < ky; ++r) theta[pos++] = p.rho(r, c);
  for (Index c = 0; c < ky; ++c)
    for (Index r = 0; r < kx; ++r) theta[pos++] = p.B(r, c);
  for (Index c = 0; c < ky; ++c)
    for (Index r = 0; r <= c; ++r) {
      if (r == c) {
        if (!(p.prec_chol(r, c) > 0.0)) throw ParameterError("precision factor needs a positive diagonal");
        theta[pos++] = std::log(p.prec_chol(r, c));
      } else {
        theta[pos++] = p.prec_chol(r, c);
      }
    }
  return theta;
}

MsarParams unpack_params(const Vector& theta, Index ky, Index kx) {
  if (theta.size() != num_params(ky, kx)) throw ParameterError("parameter vector has the wrong length");
  MsarParams p{Matrix(ky, ky), Matrix(kx, ky), Matrix::Zero(ky, ky)};
  Index pos = 0;
  for (Index c = 0; c < ky; ++c)
    for (Index r = 0; r < ky; ++r) p.rho(r, c) = theta[pos++];
  for (Index c = 0; c < ky; ++c)
    for (Index r = 0; r < kx; ++r) p.B(r, c) = theta[pos++];
  for (Index c = 0; c < ky; ++c)
    for (Index r = 0; r <= c; ++r) {
      p.prec_chol(r, c) = (r == c) ? std::exp(theta[pos]) : theta[pos];
      ++pos;
    }
  return p;
}

MsarParams default_init(const MsarData& data) {
  check_data(data);
  const Index ky = data.ky();
  MsarParams p{Matrix::Zero(ky, ky), ols(data.X, data.Y), Matrix::Identity(ky, ky)};
  const Matrix E = data.Y - data.X * p.B;
  const Matrix cov = E.transpose() * E / static_cast<double>(data.n());
  Eigen::LLT<Matrix> cov_llt(cov);
  if (cov_llt.info() == Eigen::Success && cov.diagonal().minCoeff() > 0.0) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (lo > 1e-12 * hi) {
      const Matrix omega = cov_llt.solve(Matrix::Identity(ky, ky));
      Eigen::LLT<Matrix> omega_llt(0.5 * (omega + omega.transpose()));
      if (omega_llt.info() == Eigen::Success) p.prec_chol = omega_llt.matrixU();
    }
  }
  return p;
}

MsarFit fit_msar(const MsarData& data, const std::optional<MsarParams>& init, const MsarOptions& opts) {
  check_data(data);
  if (data.n() <= data.ky() + data.kx())
    throw ParameterError("MSAR: need n > Ky + Kx (n = " + std::to_string(data.n()) + ", Ky = " +
                         std::to_string(data.ky()) + ", Kx = " + std::to_string(data.kx()) + ")");
  if (!data.W.normalized()) throw ParameterError("MSAR: W must be row-normalized");
  if (opts.max_iter < 0) throw ParameterError("MSAR: max_iter must be >= 0");

  const Index ky = data.ky();
  const Index kx = data.kx();
  const double bound = 1.0 - opts.spectral_margin;
  MsarParams start = init ? *init : default_init(data);
  check_params(start, ky, kx);
  if (spectral_radius(start.rho) >= bound)
    throw ConstraintError("MSAR: initial rho violates the spectral constraint");

  const Objective Q(data);
  MsarFit fit;
  if (opts.max_iter == 0) {
    fit.params = start;
    fit.objective = Q.value(start);
    if (!std::isfinite(fit.objective)) throw NumericalError("MSAR: objective is not finite at the starting point");
    const Vector g0 = Q.gradient(pack_params(start));
    fit.grad_norm = g0.norm();
    fit.tolerance = opts.tol > 0.0 ? opts.tol : 1e-8 * std::max(1.0, fit.objective);
    fit.converged = fit.grad_norm <= fit.tolerance;
    fit.stop_reason = fit.converged ? "gradient" : "max_iter";
    fit.objective_trace.push_back(fit.objective);
    fit.grad_norm_trace.push_back(fit.grad_norm);
    fit.spectral_radius_trace.push_back(spectral_radius(start.rho));
    return fit;
  }

  // Q is quadratic in B, so B is solved exactly for every (rho, zeta) and BFGS
  // runs on phi = [vec(rho), zeta]. The B block of the full gradient vanishes
  // there and the rest is the gradient of the profiled objective.
  const Index ky2 = ky * ky;
  const Index nb = kx * ky;
  const Index nz = ky * (ky + 1) / 2;
  auto expand = [&](const Vector& phi) {
    Vector th(ky2 + nb + nz);
    th.head(ky2) = phi.head(ky2);
    th.segment(ky2, nb).setZero();
    th.tail(nz) = phi.tail(nz);
    MsarParams p = unpack_params(th, ky, kx);
    p.B = Q.best_B(p);
    return p;
  };
  auto reduce = [&](const Vector& full) {
    Vector out(ky2 + nz);
    out << full.head(ky2), full.tail(nz);
    return out;
  };

  {
    MsarParams p0 = start;
    p0.B = Q.best_B(p0);
    if (Q.value(p0) <= Q.value(start)) start = p0;
  }
  Vector phi = reduce(pack_params(start));
  MsarParams cur = expand(phi);
  double f = Q.value(cur);
  if (!std::isfinite(f)) throw NumericalError("MSAR: objective is not finite at the starting point");
  Vector full_g = Q.gradient(pack_params(cur));
  if (!full_g.allFinite()) throw NumericalError("MSAR: gradient is not finite at the starting point");
  Vector g = reduce(full_g);
  const Index np = phi.size();

  fit.tolerance = opts.tol > 0.0 ? opts.tol : 1e-8 * std::max(1.0, Q.value(start));
  Matrix H = Matrix::Identity(np, np);
  bool h_is_identity = true;
  bool first_update = true;

  auto record = [&](const MsarParams& p, double fv, double gn) {
    fit.objective_trace.push_back(fv);
    fit.grad_norm_trace.push_back(gn);
    fit.spectral_radius_trace.push_back(spectral_radius(p.rho));
  };

  double gnorm = full_g.norm();
  record(cur, f, gnorm);
  fit.stop_reason = "max_iter";
  int iter = 0;
  for (; iter < opts.max_iter; ++iter) {
    if (gnorm <= fit.tolerance) {
      fit.converged = true;
      fit.stop_reason = "gradient";
      break;
    }
    Vector p = -H * g;
    double slope = g.dot(p);
    if (!(slope < 0.0)) {
      H.setIdentity();
      h_is_identity = true;
      p = -g;
      slope = g.dot(p);
    }
    // The first step along -g is scaled to unit length.
    double alpha = h_is_identity && first_update ? std::min(1.0, 1.0 / g.norm()) : 1.0;
    bool accepted = false;
    bool any_feasible = false;
    Vector trial;
    MsarParams trial_params;
    double f_trial = f;
    for (int ls = 0; ls < 60; ++ls) {
      trial = phi + alpha * p;
      Vector th(ky2 + nb + nz);
      th << trial.head(ky2), Vector::Zero(nb), trial.tail(nz);
      if (!(spectral_radius(unpack_params(th, ky, kx).rho) < bound)) {
        alpha *= 0.5;
        continue;
      }
      any_feasible = true;
      trial_params = expand(trial);
      f_trial = Q.value(trial_params);
      if (std::isfinite(f_trial) && f_trial <= f + 1e-4 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      if (!h_is_identity) {
        H.setIdentity();
        h_is_identity = true;
        continue;
      }
      if (!any_feasible) throw ConstraintError("MSAR: no feasible step under the spectral constraint");
      fit.stop_reason = "line_search";
      break;
    }
    const Vector full_trial = Q.gradient(pack_params(trial_params));
    if (!full_trial.allFinite()) throw NumericalError("MSAR: gradient became non-finite");
    const Vector g_trial = reduce(full_trial);
    const Vector s = trial - phi;
    const Vector y = g_trial - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (first_update) {
        H *= sy / y.squaredNorm();
        first_update = false;
      }
      const double r = 1.0 / sy;
      const Vector Hy = H * y;
      // H+ = (I - r s y^T) H (I - r y s^T) + r s s^T
      H += (r * r * y.dot(Hy) + r) * (s * s.transpose()) - r * (Hy * s.transpose() + s * Hy.transpose());
      h_is_identity = false;
    }
    phi = trial;
    cur = trial_params;
    f = f_trial;
    g = g_trial;
    gnorm = full_trial.norm();
    record(cur, f, gnorm);
  }
  if (!fit.converged && gnorm <= fit.tolerance) {
    fit.converged = true;
    fit.stop_reason = "gradient";
  }
  fit.params = cur;
  fit.objective = f;
  fit.grad_norm = gnorm;
  fit.iterations = iter;
  return fit;
}

double spectral_radius(const Matrix& M) {
  if (M.rows() != M.cols()) throw ParameterError("spectral radius of a non-square matrix");
  const Index n = M.rows();
  if (n == 0) return 0.0;
  if (n <= 64) {
    Eigen::EigenSolver<Matrix> es(M, false);
    if (es.info() != Eigen::Success) throw NumericalError("eigenvalue computation failed");
    return es.eigenvalues().cwiseAbs().maxCoeff();
  }
  Vector x = Vector::Ones(n) / std::sqrt(static_cast<double>(n));
  double est = 0.0;
  int stable = 0;
  for (int it = 0; it < 5000; ++it) {
    Vector y = M * x;
    const double norm = y.norm();
    if (norm == 0.0) return 0.0;
    if (std::abs(norm - est) <= 1e-13 * norm) {
      if (++stable >= 5) return norm;
    } else {
      stable = 0;
    }
    est = norm;
    x = y / norm;
  }
  Eigen::EigenSolver<Matrix> es(M, false);
  if (es.info() != Eigen::Success) throw NumericalError("eigenvalue computation failed");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double weights_spectral_radius(const SpatialWeights& W) {
  if (W.normalized()) return W.inf_norm();
  return spectral_radius(W.dense());
}

Matrix reduced_form_solve(const Matrix& rho, const SpatialWeights& W, const Matrix& C,
                          ReducedFormStrategy strategy) {
  check_dims(rho, W, C);
  if ((rho.array() == 0.0).all()) return C;
  const double radius = spectral_radius(rho) * weights_spectral_radius(W);
  if (!(radius < 1.0))
    throw DivergenceError("reduced form: spectral radius of rho^T (x) W is " + std::to_string(radius) + " >= 1");

  switch (strategy) {
    case ReducedFormStrategy::eigen: {
      Eigen::EigenSolver<Matrix> es(rho);
      if (es.info() != Eigen::Success) throw NumericalError("reduced form: eigen-decomposition of rho failed");
      return solve_eigen_strategy(es, W, C);
    }
    case ReducedFormStrategy::neumann: return solve_neumann(rho, W, C);
    case ReducedFormStrategy::dense: return solve_dense(rho, W, C);
    case ReducedFormStrategy::automatic: break;
  }
  Eigen::EigenSolver<Matrix> es(rho);
  if (es.info() == Eigen::Success) {
    Eigen::JacobiSVD<CMatrix> svd(es.eigenvectors());
    const auto& sv = svd.singularValues();
    const double cond = sv[sv.size() - 1] > 0.0 ? sv[0] / sv[sv.size() - 1] : std::numeric_limits<double>::infinity();
    if (cond < 1e8) return solve_eigen_strategy(es, W, C);
  }
  try {
    return solve_neumann(rho, W, C);
  } catch (const NumericalError&) {
    if (W.size() * rho.rows() <= 4000) return solve_dense(rho, W, C);
    throw;
  }
}

}  // namespace sfofr
