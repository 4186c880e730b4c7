#include "sfofr/bundle.hpp"

#include "sfofr/error.hpp"
#include "sfofr/io.hpp"

namespace sfofr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kind_name(FpcKind k) { return k == FpcKind::classical ? "classical" : "spatial"; }

FpcKind kind_from(const std::string& s) {
  if (s == "classical") return FpcKind::classical;
  if (s == "spatial") return FpcKind::spatial;
  throw DataError("bundle: unknown decomposition kind '" + s + "'");
}

std::vector<double> to_vec(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

json decomp_json(const FpcDecomposition& d) {
  return {{"kind", kind_name(d.kind)},
          {"components", d.num_components()},
          {"num_basis", d.basis.num_basis()},
          {"degree", d.basis.degree()},
          {"total_variance", d.total_variance},
          {"variance_explained", to_vec(d.variance_explained)}};
}

void write_decomp(const fs::path& dir, const std::string& prefix, const FpcDecomposition& d) {
  write_matrix_csv(dir / (prefix + "_chi.csv"), d.chi);
  write_matrix_csv(dir / (prefix + "_eigenvalues.csv"), d.eigenvalues);
  write_matrix_csv(dir / (prefix + "_scores.csv"), d.scores);
}

FpcDecomposition read_decomp(const fs::path& dir, const std::string& prefix, const json& meta) {
  BSplineBasis basis(meta.at("num_basis").get<int>(), meta.at("degree").get<int>());
  FpcDecomposition d{kind_from(meta.at("kind").get<std::string>()),
                     read_matrix_csv(dir / (prefix + "_chi.csv")),
                     Vector{},
                     read_matrix_csv(dir / (prefix + "_scores.csv")),
                     basis,
                     from_vec(meta.at("variance_explained").get<std::vector<double>>()),
                     meta.at("total_variance").get<double>()};
  const Matrix ev = read_matrix_csv(dir / (prefix + "_eigenvalues.csv"));
  d.eigenvalues = Eigen::Map<const Vector>(ev.data(), ev.size());
  const Index K = meta.at("components").get<Index>();
  if (d.chi.rows() != basis.num_basis() || d.chi.cols() != K || d.eigenvalues.size() != K ||
      d.scores.cols() != K || d.variance_explained.size() != K)
    throw DataError("bundle: " + prefix + " decomposition files disagree with the manifest");
  return d;
}

}  // namespace

Vector surface_grid() { return Vector::LinSpaced(kSurfaceGridSize, 0.0, 1.0); }

json options_to_json(const SfofrOptions& o) {
  json j = {{"num_basis", o.num_basis},
            {"degree", o.degree},
            {"ridge", o.ridge},
            {"var_threshold", o.var_threshold},
            {"msar", {{"tol", o.msar.tol}, {"max_iter", o.msar.max_iter}, {"spectral_margin", o.msar.spectral_margin}}}};
  j["ky"] = o.ky ? json(*o.ky) : json(nullptr);
  j["kx"] = o.kx ? json(*o.kx) : json(nullptr);
  return j;
}

SfofrOptions options_from_json(const json& j) {
  SfofrOptions o;
  o.num_basis = j.at("num_basis").get<int>();
  o.degree = j.at("degree").get<int>();
  o.ridge = j.at("ridge").get<double>();
  o.var_threshold = j.at("var_threshold").get<double>();
  if (!j.at("ky").is_null()) o.ky = j.at("ky").get<Index>();
  if (!j.at("kx").is_null()) o.kx = j.at("kx").get<Index>();
  const json& m = j.at("msar");
  o.msar.tol = m.at("tol").get<double>();
  o.msar.max_iter = m.at("max_iter").get<int>();
  o.msar.spectral_margin = m.at("spectral_margin").get<double>();
  return o;
}

json msar_report(const MsarFit& f) {
  return {{"converged", f.converged},
          {"stop_reason", f.stop_reason},
          {"iterations", f.iterations},
          {"objective", f.objective},
          {"grad_norm", f.grad_norm},
          {"tolerance", f.tolerance},
          {"objective_trace", f.objective_trace},
          {"grad_norm_trace", f.grad_norm_trace},
          {"spectral_radius_trace", f.spectral_radius_trace}};
}

void save_bundle(const fs::path& dir, const SfofrFit& fit, const json& config) {
  fs::create_directories(dir);
  const Vector grid = surface_grid();
  const SurfaceEstimate rho = reconstruct_rho(fit, grid, grid);
  const SurfaceEstimate beta = reconstruct_beta(fit, grid, grid);
  const FunctionalDataset fitted = fitted_values(fit);
  const ContractionReport contraction = contraction_diagnostic(rho, fit.W);

  write_decomp(dir, "response", fit.response_decomp);
  write_decomp(dir, "predictor", fit.predictor_decomp);
  write_matrix_csv(dir / "rho.csv", fit.rho());
  write_matrix_csv(dir / "B.csv", fit.B());
  write_matrix_csv(dir / "prec_chol.csv", fit.msar_fit.params.prec_chol);
  write_text_atomic(dir / "y_mean.csv", curve_to_csv(fit.y_grid, fit.y_mean, "mean"));
  write_text_atomic(dir / "x_mean.csv", curve_to_csv(fit.x_grid, fit.x_mean, "mean"));
  write_weights_csv(dir / "weights.csv", fit.W, WeightsFormat::triplet);
  write_text_atomic(dir / "rho_surface.csv", surface_to_csv(rho));
  write_text_atomic(dir / "beta_surface.csv", surface_to_csv(beta));
  write_curves_csv(dir / "fitted.csv", fitted);

  json manifest = {
      {"format", "sfofr-fit"},
      {"version", kBundleVersion},
      {"method", to_string(fit.method)},
      {"n", fit.ids.size()},
      {"ky", fit.ky()},
      {"kx", fit.kx()},
      {"y_grid_size", fit.y_grid.size()},
      {"x_grid_size", fit.x_grid.size()},
      {"weights", {{"kind", to_string(fit.W.kind())}, {"isolated_units", fit.W.isolated_units()}}},
      {"options", options_to_json(fit.options)},
      {"response", decomp_json(fit.response_decomp)},
      {"predictor", decomp_json(fit.predictor_decomp)},
      {"msar", msar_report(fit.msar_fit)},
      {"diagnostics",
       {{"rho_spectral_radius", spectral_radius(fit.rho())},
        {"contraction",
         {{"sup_kernel", contraction.sup_kernel},
          {"l1_operator_bound", contraction.l1_operator_bound},
          {"w_inf", contraction.w_inf},
          {"strict_holds", contraction.strict_holds},
          {"weak_holds", contraction.weak_holds}}}}},
  };
  if (!config.is_null()) manifest["config"] = config;
  write_text_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

SfofrFit load_bundle(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  json m;
  try {
    m = json::parse(read_text(mpath));
  } catch (const json::parse_error& e) {
    throw ParseError(mpath.string() + ": " + e.what());
  }
  try {
    if (m.at("format") != "sfofr-fit") throw DataError("bundle: not an sfofr fit manifest");
    if (m.at("version").get<int>() != kBundleVersion)
      throw DataError("bundle: unsupported version " + m.at("version").dump());
    const std::string method = m.at("method").get<std::string>();
    if (method != "sfofr" && method != "fpc_baseline") throw DataError("bundle: unknown method '" + method + "'");

    FpcDecomposition ydec = read_decomp(dir, "response", m.at("response"));
    FpcDecomposition xdec = read_decomp(dir, "predictor", m.at("predictor"));
    const json& rep = m.at("msar");
    MsarFit mf;
    mf.params.rho = read_matrix_csv(dir / "rho.csv");
    mf.params.B = read_matrix_csv(dir / "B.csv");
    mf.params.prec_chol = read_matrix_csv(dir / "prec_chol.csv");
    mf.converged = rep.at("converged").get<bool>();
    mf.stop_reason = rep.at("stop_reason").get<std::string>();
    mf.iterations = rep.at("iterations").get<int>();
    mf.objective = rep.at("objective").get<double>();
    mf.grad_norm = rep.at("grad_norm").get<double>();
    mf.tolerance = rep.at("tolerance").get<double>();
    mf.objective_trace = rep.at("objective_trace").get<std::vector<double>>();
    mf.grad_norm_trace = rep.at("grad_norm_trace").get<std::vector<double>>();
    mf.spectral_radius_trace = rep.at("spectral_radius_trace").get<std::vector<double>>();
    const Index ky = ydec.num_components();
    const Index kx = xdec.num_components();
    if (mf.params.rho.rows() != ky || mf.params.rho.cols() != ky || mf.params.B.rows() != kx ||
        mf.params.B.cols() != ky || mf.params.prec_chol.rows() != ky || mf.params.prec_chol.cols() != ky)
      throw DataError("bundle: parameter matrices disagree with the component counts");

    auto [y_grid, y_mean] = curve_from_csv(read_text(dir / "y_mean.csv"), (dir / "y_mean.csv").string());
    auto [x_grid, x_mean] = curve_from_csv(read_text(dir / "x_mean.csv"), (dir / "x_mean.csv").string());
    const FunctionalDataset fitted = read_curves_csv(dir / "fitted.csv");
    SpatialWeights W = read_weights_csv(dir / "weights.csv");
    if (W.size() != fitted.num_curves() || ydec.scores.rows() != fitted.num_curves())
      throw DataError("bundle: unit counts disagree across files");
    return SfofrFit{method == "sfofr" ? FitMethod::sfofr : FitMethod::fpc_baseline,
                    std::move(ydec),
                    std::move(xdec),
                    std::move(mf),
                    std::move(y_mean),
                    std::move(x_mean),
                    std::move(y_grid),
                    std::move(x_grid),
                    fitted.ids(),
                    std::move(W),
                    options_from_json(m.at("options"))};
  } catch (const json::exception& e) {
    throw DataError(mpath.string() + ": " + e.what());
  }
}

}  // namespace sfofr
