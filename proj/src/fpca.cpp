#include "sfofr/fpca.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sfofr/error.hpp"

namespace sfofr {

namespace {

Matrix sym_power(const Matrix& S, double floor, double power) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(S);
  if (es.info() != Eigen::Success) throw NumericalError("symmetric eigen-decomposition failed");
  Vector d = es.eigenvalues().cwiseMax(floor);
  d = d.array().pow(power);
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

// First entry with magnitude above a relative floor made positive.
void fix_signs(Matrix& chi) {
  for (Index k = 0; k < chi.cols(); ++k) {
    const double scale = chi.col(k).cwiseAbs().maxCoeff();
    for (Index l = 0; l < chi.rows(); ++l) {
      if (std::abs(chi(l, k)) > 1e-10 * scale) {
        if (chi(l, k) < 0.0) chi.col(k) = -chi.col(k);
        break;
      }
    }
  }
}

Index max_components(const BasisCoefficients& coeffs) {
  return std::max<Index>(1, std::min<Index>(coeffs.num_curves() - 1, coeffs.basis.num_basis()));
}

void check_inputs(const BasisCoefficients& coeffs) {
  if (coeffs.num_curves() < 2) throw DataError("principal components need at least 2 curves");
  if (coeffs.coefficients.cols() != coeffs.basis.num_basis())
    throw ParameterError("coefficient matrix width does not match basis size");
  if (!coefficients_centered(coeffs.coefficients))
    throw DataError("principal components require centered coefficients (column means must vanish)");
}

// u-space criterion matrix -> decomposition with every component; ordering by kind.
FpcDecomposition decompose(const BasisCoefficients& coeffs, const Matrix& criterion, FpcKind kind,
                           const Matrix& gram_inv_sqrt) {
  const Index L = coeffs.basis.num_basis();
  const double n = static_cast<double>(coeffs.num_curves());
  Eigen::SelfAdjointEigenSolver<Matrix> es(criterion);
  if (es.info() != Eigen::Success) throw NumericalError("principal component eigen-decomposition failed");

  FpcDecomposition out{kind, Matrix{}, Vector{}, Matrix{}, coeffs.basis, Vector{}, 0.0};
  Matrix chi_all = gram_inv_sqrt * es.eigenvectors();
  fix_signs(chi_all);
  out.chi = chi_all;
  out.eigenvalues = es.eigenvalues();
  const Matrix scores_all = project(coeffs, out);
  const Vector score_var = scores_all.colwise().squaredNorm().transpose() / n;

  std::vector<Index> order(static_cast<std::size_t>(L));
  std::iota(order.begin(), order.end(), Index{0});
  const Vector& ev = es.eigenvalues();
  if (kind == FpcKind::classical) {
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return ev[a] > ev[b]; });
  } else {
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return std::abs(ev[a]) > std::abs(ev[b]); });
    // Numerically tied |eigenvalues| are ordered by score variance.
    const double tol = 1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    std::size_t start = 0;
    while (start < order.size()) {
      std::size_t stop = start + 1;
      while (stop < order.size() && std::abs(ev[order[stop - 1]]) - std::abs(ev[order[stop]]) <= tol) ++stop;
      std::stable_sort(order.begin() + static_cast<std::ptrdiff_t>(start),
                       order.begin() + static_cast<std::ptrdiff_t>(stop),
                       [&](Index a, Index b) { return score_var[a] > score_var[b]; });
      start = stop;
    }
  }

  const Index K = max_components(coeffs);
  out.chi.resize(L, K);
  out.eigenvalues.resize(K);
  out.variance_explained.resize(K);
  out.total_variance = coeffs.coefficients.cwiseProduct(coeffs.coefficients * coeffs.basis.gram()).sum() / n;
  for (Index k = 0; k < K; ++k) {
    const Index src = order[static_cast<std::size_t>(k)];
    out.chi.col(k) = chi_all.col(src);
    out.eigenvalues[k] = ev[src];
    out.variance_explained[k] = out.total_variance > 0.0 ? score_var[src] / out.total_variance : 0.0;
  }
  out.scores = project(coeffs, out);
  return out;
}

FpcDecomposition apply_truncation(const FpcDecomposition& full, const BasisCoefficients& coeffs,
                                  const Truncation& truncation) {
  const Index kmax = full.num_components();
  if (truncation.count) {
    const Index k = *truncation.count;
    if (k < 1 || k > kmax)
      throw ParameterError("number of components must be in [1, " + std::to_string(kmax) + "], got " +
                           std::to_string(k));
    if (k == kmax) return full;
    FpcDecomposition out = truncate(full, k);
    out.scores = project(coeffs, out);
    return out;
  }
  if (truncation.variance_threshold) {
    FpcDecomposition out = truncate(full, choose_k(full, *truncation.variance_threshold));
    out.scores = project(coeffs, out);
    return out;
  }
  return full;
}

}  // namespace

Matrix sym_sqrt(const Matrix& S, double floor) { return sym_power(S, floor, 0.5); }

Matrix sym_inv_sqrt(const Matrix& S, double floor) { return sym_power(S, floor, -0.5); }

FpcDecomposition fit_fpc(const BasisCoefficients& coeffs, Truncation truncation) {
  check_inputs(coeffs);
  const Matrix& G = coeffs.basis.gram();
  const Matrix Gh = sym_sqrt(G);
  const double n = static_cast<double>(coeffs.num_curves());
  const Matrix D = coeffs.coefficients * Gh;
  Matrix criterion = (D.transpose() * D) / n;
  criterion = 0.5 * (criterion + criterion.transpose());
  return apply_truncation(decompose(coeffs, criterion, FpcKind::classical, sym_inv_sqrt(G)), coeffs, truncation);
}

FpcDecomposition fit_sfpc(const BasisCoefficients& coeffs, const SpatialWeights& W, Truncation truncation) {
  check_inputs(coeffs);
  if (W.size() != coeffs.num_curves())
    throw ParameterError("spatial FPCA: W is " + std::to_string(W.size()) + " x " + std::to_string(W.size()) +
                         " but there are " + std::to_string(coeffs.num_curves()) + " curves");
  if (!W.normalized()) throw ParameterError("spatial FPCA requires a row-normalized weight matrix");
  const Matrix& G = coeffs.basis.gram();
  const Matrix Gh = sym_sqrt(G);
  const double n = static_cast<double>(coeffs.num_curves());
  const Matrix D = coeffs.coefficients * Gh;
  const Matrix raw = D.transpose() * W.multiply(D) / n;
  const Matrix criterion = 0.5 * (raw + raw.transpose());
  return apply_truncation(decompose(coeffs, criterion, FpcKind::spatial, sym_inv_sqrt(G)), coeffs, truncation);
}

Index choose_k(const FpcDecomposition& decomp, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0))
    throw ParameterError("variance threshold must be in (0, 1], got " + std::to_string(threshold));
  const Index K = decomp.num_components();
  if (K == 0) return 0;
  if (!(decomp.total_variance > 0.0)) return 1;
  double cumulative = 0.0;
  for (Index k = 0; k < K; ++k) {
    cumulative += decomp.variance_explained[k];
    if (cumulative >= threshold - 1e-12) return k + 1;
  }
  return K;
}

FpcDecomposition truncate(const FpcDecomposition& decomp, Index k) {
  if (k < 1 || k > decomp.num_components())
    throw ParameterError("cannot truncate " + std::to_string(decomp.num_components()) + " components to " +
                         std::to_string(k));
  FpcDecomposition out = decomp;
  out.chi = decomp.chi.leftCols(k);
  out.eigenvalues = decomp.eigenvalues.head(k);
  out.scores = decomp.scores.leftCols(k);
  out.variance_explained = decomp.variance_explained.head(k);
  return out;
}

Matrix project(const BasisCoefficients& coeffs, const FpcDecomposition& decomp) {
  if (!(coeffs.basis == decomp.basis))
    throw ParameterError("projection basis mismatch: coefficients use L=" + std::to_string(coeffs.basis.num_basis()) +
                         ", degree " + std::to_string(coeffs.basis.degree()) + "; decomposition uses L=" +
                         std::to_string(decomp.basis.num_basis()) + ", degree " +
                         std::to_string(decomp.basis.degree()));
  const Matrix gchi = decomp.basis.gram() * decomp.chi;
  return coeffs.coefficients * gchi;
}

Matrix eigenfunctions(const FpcDecomposition& decomp, const Vector& tgrid) {
  return decomp.basis.evaluate(tgrid) * decomp.chi;
}

Matrix reconstruct(const Matrix& scores, const FpcDecomposition& decomp, const Vector& tgrid) {
  if (scores.cols() != decomp.num_components())
    throw ParameterError("reconstruct: score matrix has " + std::to_string(scores.cols()) +
                         " columns, decomposition has " + std::to_string(decomp.num_components()));
  return scores * eigenfunctions(decomp, tgrid).transpose();
}

}  // namespace sfofr
