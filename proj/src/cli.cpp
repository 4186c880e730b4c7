#include "sfofr/cli.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "sfofr/bundle.hpp"
#include "sfofr/error.hpp"
#include "sfofr/io.hpp"
#include "sfofr/model.hpp"
#include "sfofr/simgen.hpp"
#include "sfofr/spatial.hpp"

namespace sfofr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class Type { integer, u64, real, text };

struct Opt {
  std::string key;  // config key; the flag is --key with '_' -> '-'
  Type type;
  json fallback;    // null = unset
  std::string help;
  std::vector<std::string> choices = {};
};

std::string flag_of(const std::string& key) {
  std::string f = "--" + key;
  for (auto& c : f)
    if (c == '_') c = '-';
  return f;
}

const std::vector<Opt>& sim_opts() {
  static const std::vector<Opt> v = {
      {"seed", Type::u64, nullptr, "RNG seed (required)"},
      {"n_train", Type::integer, 250, "training units"},
      {"n_test", Type::integer, 1000, "test units"},
      {"alpha", Type::real, 0.9, "spatial dependence strength in [0,1)"},
      {"weights", Type::text, "exponential", "weight matrix kind", {"inverse_distance", "exponential"}},
      {"decay", Type::real, 0.5, "exponential weight decay"},
      {"grid_size", Type::integer, 101, "grid points r/m, r = 1..m"},
      {"noise_sd", Type::real, 1.0, "error standard deviation"},
      {"noise", Type::text, "white", "error process", {"white", "smooth"}},
      {"neumann_tol", Type::real, 1e-3, "Neumann series stopping threshold"},
      {"neumann_max_terms", Type::integer, 10000, "Neumann series term limit"},
  };
  return v;
}

const std::vector<Opt>& model_opts() {
  static const std::vector<Opt> v = {
      {"num_basis", Type::integer, 20, "B-spline basis size"},
      {"degree", Type::integer, 3, "B-spline degree"},
      {"ridge", Type::real, 1e-8, "smoothing ridge penalty"},
      {"var_threshold", Type::real, 0.95, "cumulative variance share for choosing components"},
      {"ky", Type::integer, nullptr, "fixed number of response components"},
      {"kx", Type::integer, nullptr, "fixed number of predictor components"},
      {"tol", Type::real, 0.0, "BFGS gradient tolerance (0 = relative default)"},
      {"max_iter", Type::integer, 500, "BFGS iteration limit"},
      {"spectral_margin", Type::real, 1e-3, "feasible set is spectral radius < 1 - margin"},
  };
  return v;
}

std::vector<Opt> concat(std::vector<Opt> a, const std::vector<Opt>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::map<std::string, std::vector<Opt>> command_specs() {
  std::map<std::string, std::vector<Opt>> m;
  m["simulate"] = sim_opts();
  m["weights"] = {
      {"n", Type::integer, nullptr, "number of units on a line (inverse_distance, exponential)"},
      {"coords", Type::text, nullptr, "coordinate CSV id,lat,lon (knn)"},
      {"kind", Type::text, "exponential", "weight kind", {"inverse_distance", "exponential", "knn"}},
      {"decay", Type::real, 0.5, "exponential decay"},
      {"neighbors", Type::integer, 5, "nearest neighbours for knn"},
      {"format", Type::text, "triplet", "output layout", {"dense", "triplet"}},
  };
  m["fit"] = concat(
      {
          {"y", Type::text, nullptr, "response curve CSV (required)"},
          {"x", Type::text, nullptr, "predictor curve CSV (required)"},
          {"w", Type::text, nullptr, "weight CSV (required for sfofr)"},
          {"method", Type::text, "sfofr", "estimator", {"sfofr", "fpc"}},
      },
      model_opts());
  m["predict"] = {
      {"bundle", Type::text, nullptr, "fit bundle directory (required)"},
      {"x", Type::text, nullptr, "predictor curve CSV (required)"},
      {"w", Type::text, nullptr, "weight CSV for the new units (required for sfofr bundles)"},
      {"strategy", Type::text, "automatic", "reduced-form solver", {"automatic", "eigen", "neumann", "dense"}},
  };
  m["moran"] = {
      {"y", Type::text, nullptr, "curve CSV (required)"},
      {"w", Type::text, nullptr, "weight CSV (required)"},
      {"num_basis", Type::integer, 20, "B-spline basis size"},
      {"degree", Type::integer, 3, "B-spline degree"},
      {"ridge", Type::real, 1e-8, "smoothing ridge penalty"},
  };
  m["mc-bench"] = concat(concat(sim_opts(), {{"reps", Type::integer, 100, "replications"}}), model_opts());
  return m;
}

json parse_value(const Opt& o, const std::string& raw) {
  auto bad = [&] { return ParameterError(flag_of(o.key) + ": invalid value '" + raw + "'"); };
  switch (o.type) {
    case Type::integer: {
      long long v = 0;
      const auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
      if (raw.empty() || ec != std::errc{} || p != raw.data() + raw.size()) throw bad();
      return v;
    }
    case Type::u64: {
      unsigned long long v = 0;
      const auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
      if (raw.empty() || ec != std::errc{} || p != raw.data() + raw.size()) throw bad();
      return v;
    }
    case Type::real: {
      double v = 0.0;
      const auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
      if (raw.empty() || ec != std::errc{} || p != raw.data() + raw.size()) throw bad();
      return v;
    }
    case Type::text: return raw;
  }
  throw bad();
}

void check_value(const Opt& o, const json& v, const std::string& where) {
  if (v.is_null()) return;
  bool ok = false;
  switch (o.type) {
    case Type::integer: ok = v.is_number_integer(); break;
    case Type::u64: ok = v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0); break;
    case Type::real: ok = v.is_number(); break;
    case Type::text: ok = v.is_string(); break;
  }
  if (!ok) throw ParameterError(where + ": '" + o.key + "' has the wrong type");
  if (!o.choices.empty()) {
    const auto s = v.get<std::string>();
    if (std::find(o.choices.begin(), o.choices.end(), s) == o.choices.end())
      throw ParameterError(where + ": '" + o.key + "' must be one of " + CLI::detail::join(o.choices, ", ") +
                           ", got '" + s + "'");
  }
}

/// CLI flag > config file > default.
json resolve(const std::string& command, const std::vector<Opt>& spec, const std::optional<std::string>& config_path,
             const std::map<std::string, std::string>& given) {
  json out = json::object();
  for (const auto& o : spec) out[o.key] = o.fallback;
  if (config_path) {
    json cfg;
    try {
      cfg = json::parse(read_text(*config_path));
    } catch (const json::parse_error& e) {
      throw ParseError(*config_path + ": " + e.what());
    }
    if (!cfg.is_object()) throw ParseError(*config_path + ": config must be a JSON object");
    for (const auto& [key, value] : cfg.items()) {
      if (key == "command") {
        if (value != command) throw ParameterError(*config_path + ": config is for '" + value.dump() + "'");
        continue;
      }
      const auto it = std::find_if(spec.begin(), spec.end(), [&](const Opt& o) { return o.key == key; });
      if (it == spec.end()) throw ParameterError(*config_path + ": unknown key '" + key + "' for " + command);
      check_value(*it, value, *config_path);
      out[key] = value;
    }
  }
  for (const auto& o : spec) {
    const auto it = given.find(o.key);
    if (it == given.end()) continue;
    json v = parse_value(o, it->second);
    check_value(o, v, flag_of(o.key));
    out[o.key] = std::move(v);
  }
  // Integers are acceptable wherever a real is expected; store them as reals.
  for (const auto& o : spec)
    if (o.type == Type::real && !out[o.key].is_null()) out[o.key] = out[o.key].get<double>();
  json echoed = {{"command", command}};
  echoed.update(out);
  return echoed;
}

std::string required_text(const json& c, const std::string& key) {
  if (c.at(key).is_null()) throw ParameterError("missing required option " + flag_of(key));
  return c.at(key).get<std::string>();
}

SimConfig sim_config(const json& c) {
  SimConfig s;
  if (c.at("seed").is_null()) throw ParameterError("--seed is required");
  s.seed = c.at("seed").get<std::uint64_t>();
  s.n_train = c.at("n_train").get<Index>();
  s.n_test = c.at("n_test").get<Index>();
  s.alpha = c.at("alpha").get<double>();
  s.weight_kind = c.at("weights") == "exponential" ? WeightKind::exponential : WeightKind::inverse_distance;
  s.decay = c.at("decay").get<double>();
  s.grid_size = c.at("grid_size").get<Index>();
  s.noise_sd = c.at("noise_sd").get<double>();
  s.noise = c.at("noise") == "white" ? NoiseKind::white : NoiseKind::smooth;
  s.neumann_tol = c.at("neumann_tol").get<double>();
  s.neumann_max_terms = c.at("neumann_max_terms").get<Index>();
  validate(s);
  return s;
}

SfofrOptions model_options(const json& c) {
  SfofrOptions o;
  o.num_basis = c.at("num_basis").get<int>();
  o.degree = c.at("degree").get<int>();
  o.ridge = c.at("ridge").get<double>();
  o.var_threshold = c.at("var_threshold").get<double>();
  if (!c.at("ky").is_null()) o.ky = c.at("ky").get<Index>();
  if (!c.at("kx").is_null()) o.kx = c.at("kx").get<Index>();
  o.msar.tol = c.at("tol").get<double>();
  o.msar.max_iter = c.at("max_iter").get<int>();
  o.msar.spectral_margin = c.at("spectral_margin").get<double>();
  return o;
}

void write_json(const fs::path& path, const json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

std::vector<double> to_vector(const Vector& v) { return {v.data(), v.data() + v.size()}; }

// ---------------------------------------------------------------------------

void cmd_simulate(const json& c, const fs::path& out) {
  const SimConfig cfg = sim_config(c);
  const SimTruth truth = simulate(cfg);
  auto emit = [&](const std::string& prefix, const SimSample& s) {
    write_curves_csv(out / (prefix + "_X.csv"), s.X);
    write_curves_csv(out / (prefix + "_Y.csv"), s.response.Y);
    write_curves_csv(out / (prefix + "_mean.csv"), s.response.Y.with_values(s.response.cond_mean));
    write_weights_csv(out / (prefix + "_W.csv"), s.W, WeightsFormat::triplet);
  };
  emit("train", truth.train);
  emit("test", truth.test);
  write_text_atomic(out / "beta_true.csv", surface_to_csv(truth.beta));
  write_text_atomic(out / "rho_true.csv", surface_to_csv(truth.rho));
  const ContractionReport cr = contraction_diagnostic(truth.rho, truth.train.W);
  json manifest = {
      {"alpha", cfg.alpha},
      {"seed", cfg.seed},
      {"grid", to_vector(truth.grid)},
      {"beta_surface", "beta_true.csv"},
      {"rho_surface", "rho_true.csv"},
      {"neumann", {{"train_terms", truth.train.response.terms},
                   {"test_terms", truth.test.response.terms},
                   {"train_increments", truth.train.response.increments},
                   {"test_increments", truth.test.response.increments}}},
      {"contraction", {{"sup_kernel", cr.sup_kernel},
                       {"l1_operator_bound", cr.l1_operator_bound},
                       {"w_inf", cr.w_inf},
                       {"strict_holds", cr.strict_holds},
                       {"weak_holds", cr.weak_holds}}},
      {"config", c},
  };
  write_json(out / "truth.json", manifest);
  write_json(out / "config.json", c);
  std::cout << "simulated " << cfg.n_train << " training and " << cfg.n_test << " test curves into " << out.string()
            << "\n";
}

void cmd_weights(const json& c, const fs::path& out) {
  const std::string kind = c.at("kind").get<std::string>();
  std::optional<SpatialWeights> W;
  if (kind == "knn") {
    const Coordinates coords = read_coords_csv(required_text(c, "coords"));
    W = knn_weights(coords.points, c.at("neighbors").get<Index>());
  } else {
    if (c.at("n").is_null()) throw ParameterError("--n is required for " + kind + " weights");
    const Index n = c.at("n").get<Index>();
    W = kind == "exponential" ? exponential_weights(n, c.at("decay").get<double>()) : inverse_distance_weights(n);
  }
  const auto format = c.at("format") == "dense" ? WeightsFormat::dense : WeightsFormat::triplet;
  write_weights_csv(out / "weights.csv", *W, format);
  write_json(out / "config.json", c);
  std::cout << "wrote " << W->size() << " x " << W->size() << " " << kind << " weights";
  if (W->has_isolated_units()) std::cout << " (" << W->isolated_units().size() << " isolated units)";
  std::cout << "\n";
}

void cmd_fit(const json& c, const fs::path& out) {
  const FunctionalDataset Y = read_curves_csv(required_text(c, "y"));
  const FunctionalDataset X = read_curves_csv(required_text(c, "x"));
  const SfofrOptions opts = model_options(c);
  const bool spatial = c.at("method") == "sfofr";
  SfofrFit fit = [&] {
    if (!spatial) return fit_fofr_fpc(Y, X, opts);
    const SpatialWeights W = read_weights_csv(required_text(c, "w"));
    return fit_sfofr(Y, X, W, opts);
  }();
  save_bundle(out, fit, c);
  write_json(out / "config.json", c);
  std::cout << to_string(fit.method) << ": Ky=" << fit.ky() << " Kx=" << fit.kx() << " "
            << (fit.msar_fit.converged ? "converged" : "not converged") << " (" << fit.msar_fit.stop_reason
            << ", " << fit.msar_fit.iterations << " iterations), objective " << format_double(fit.msar_fit.objective)
            << "\n";
  if (!fit.msar_fit.converged) std::cerr << "warning: MSAR optimizer stopped without meeting the gradient tolerance\n";
}

ReducedFormStrategy strategy_of(const std::string& s) {
  if (s == "eigen") return ReducedFormStrategy::eigen;
  if (s == "neumann") return ReducedFormStrategy::neumann;
  if (s == "dense") return ReducedFormStrategy::dense;
  return ReducedFormStrategy::automatic;
}

void cmd_predict(const json& c, const fs::path& out) {
  const SfofrFit fit = load_bundle(required_text(c, "bundle"));
  const FunctionalDataset X = read_curves_csv(required_text(c, "x"));
  const SpatialWeights W = [&] {
    if (c.at("w").is_null()) {
      if (fit.method == FitMethod::sfofr) throw ParameterError("--w is required for spatial fits");
      return SpatialWeights::from_triplets(X.num_curves(), {});
    }
    return read_weights_csv(c.at("w").get<std::string>());
  }();
  const FunctionalDataset pred = predict(fit, X, W, strategy_of(c.at("strategy").get<std::string>()));
  write_curves_csv(out / "predictions.csv", pred);
  write_json(out / "config.json", c);
  std::cout << "predicted " << pred.num_curves() << " curves\n";
}

void cmd_moran(const json& c, const fs::path& out) {
  const FunctionalDataset Y = read_curves_csv(required_text(c, "y"));
  const SpatialWeights W = read_weights_csv(required_text(c, "w"));
  if (W.size() != Y.num_curves())
    throw DataError("moran: W has " + std::to_string(W.size()) + " units but there are " +
                    std::to_string(Y.num_curves()) + " curves");
  const BSplineBasis basis(c.at("num_basis").get<int>(), c.at("degree").get<int>());
  const BasisCoefficients coeffs = smooth_curves(center(Y).data, basis, c.at("ridge").get<double>());
  const Vector I = functional_morans_i(coeffs, W, Y.grid());
  std::string csv = "t,I\n";
  for (Index r = 0; r < I.size(); ++r) csv += format_double(Y.grid()[r]) + "," + format_double(I[r]) + "\n";
  write_text_atomic(out / "moran.csv", csv);
  write_json(out / "moran.json", {{"mean", I.mean()}, {"min", I.minCoeff()}, {"max", I.maxCoeff()}, {"config", c}});
  write_json(out / "config.json", c);
  std::cout << "mean functional Moran's I " << format_double(I.mean()) << "\n";
}

std::string table_cell(const MetricSummary& s) {
  char buf[64];
  if (s.se < 0.0005)
    std::snprintf(buf, sizeof buf, "%.3f (<0.001)", s.mean);
  else
    std::snprintf(buf, sizeof buf, "%.3f (%.3f)", s.mean, s.se);
  return buf;
}

json summary_json(const MethodSummary& m) {
  json j = json::object();
  auto add = [&](const char* name, const MetricSummary& s) {
    j[name] = {{"mean", s.mean}, {"sd", s.sd}, {"se", s.se}, {"table", table_cell(s)}};
  };
  add("ise_beta", m.ise_beta);
  add("ise_rho", m.ise_rho);
  add("mse", m.mse);
  add("mspe", m.mspe);
  add("mse_obs", m.mse_obs);
  add("mspe_obs", m.mspe_obs);
  return j;
}

void cmd_mc_bench(const json& c, const fs::path& out, unsigned threads) {
  SimConfig cfg = sim_config(c);
  cfg.fit = model_options(c);
  const Index reps = c.at("reps").get<Index>();
  const auto results = run_monte_carlo(cfg, reps, threads);
  std::string csv = "replication,method,ise_beta,ise_rho,mse,mspe,mse_obs,mspe_obs,ky,kx,converged\n";
  auto row = [&](std::uint64_t r, const char* name, const MethodMetrics& m) {
    csv += std::to_string(r) + "," + name + "," + format_double(m.ise_beta) + "," + format_double(m.ise_rho) + "," +
           format_double(m.mse) + "," + format_double(m.mspe) + "," + format_double(m.mse_obs) + "," +
           format_double(m.mspe_obs) + "," + std::to_string(m.ky) + "," + std::to_string(m.kx) + "," +
           (m.converged ? "1" : "0") + "\n";
  };
  Index unconverged = 0;
  for (const auto& r : results) {
    row(r.replication, "sfofr", r.sfofr);
    row(r.replication, "fpc_baseline", r.baseline);
    unconverged += r.sfofr.converged ? 0 : 1;
  }
  write_text_atomic(out / "results.csv", csv);
  const McSummary s = summarize(results);
  write_json(out / "summary.json", {{"replications", s.replications},
                                    {"unconverged_sfofr_fits", unconverged},
                                    {"sfofr", summary_json(s.sfofr)},
                                    {"fpc_baseline", summary_json(s.baseline)},
                                    {"config", c}});
  write_json(out / "config.json", c);
  std::cout << "method        ISE(beta)        ISE(rho)         MSE              MSPE\n";
  auto line = [](const char* name, const MethodSummary& m) {
    std::printf("%-13s %-16s %-16s %-16s %-16s\n", name, table_cell(m.ise_beta).c_str(), table_cell(m.ise_rho).c_str(),
                table_cell(m.mse).c_str(), table_cell(m.mspe).c_str());
  };
  line("sfofr", s.sfofr);
  line("fpc_baseline", s.baseline);
  std::fflush(stdout);
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Spatial function-on-function regression"};
  app.require_subcommand(1);
  app.fallthrough();
  std::optional<std::string> config_path;
  std::string out_dir;
  std::optional<std::string> seed_raw;
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  app.add_option("--config", config_path, "JSON config; CLI flags override it");
  app.add_option("--out", out_dir, "output directory")->required();
  app.add_option("--seed", seed_raw, "RNG seed (simulate, mc-bench)");
  app.add_option("--threads", threads, "worker threads for mc-bench")->check(CLI::PositiveNumber);

  const auto specs = command_specs();
  std::map<std::string, std::map<std::string, std::string>> raw;
  std::map<std::string, CLI::App*> subs;
  const std::map<std::string, std::string> about = {
      {"simulate", "generate one synthetic train/test replication"},
      {"fit", "fit SFoFR (or the FPC baseline) and write a bundle"},
      {"predict", "predict curves for new units from a bundle"},
      {"weights", "build a row-normalized spatial weight matrix"},
      {"moran", "functional Moran's I of a set of curves"},
      {"mc-bench", "Monte Carlo comparison of SFoFR and the FPC baseline"}};
  for (const auto& [name, spec] : specs) {
    CLI::App* sub = app.add_subcommand(name, about.count(name) ? about.at(name) : "");
    subs[name] = sub;
    for (const auto& o : spec) {
      if (o.key == "seed") continue;
      std::string help = o.help;
      if (!o.choices.empty()) help += " {" + CLI::detail::join(o.choices, ",") + "}";
      if (!o.fallback.is_null()) help += " [" + (o.fallback.is_string() ? o.fallback.get<std::string>() : o.fallback.dump()) + "]";
      sub->add_option(flag_of(o.key), raw[name][o.key], help);
    }
  }

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kDataError;
  }

  std::string command;
  for (const auto& [name, sub] : subs)
    if (sub->parsed()) command = name;

  try {
    std::map<std::string, std::string> given;
    for (const auto& o : specs.at(command)) {
      if (o.key == "seed") continue;
      if (subs[command]->count(flag_of(o.key)) > 0) given[o.key] = raw[command][o.key];
    }
    const bool seeded = command == "simulate" || command == "mc-bench";
    if (seed_raw) {
      if (!seeded) throw ParameterError("--seed applies only to simulate and mc-bench");
      given["seed"] = *seed_raw;
    }
    const json resolved = resolve(command, specs.at(command), config_path, given);
    const fs::path out = out_dir;
    fs::create_directories(out);
    if (command == "simulate") cmd_simulate(resolved, out);
    else if (command == "weights") cmd_weights(resolved, out);
    else if (command == "fit") cmd_fit(resolved, out);
    else if (command == "predict") cmd_predict(resolved, out);
    else if (command == "moran") cmd_moran(resolved, out);
    else cmd_mc_bench(resolved, out, threads);
    return kOk;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.category() == ErrorCategory::data ? kDataError : kNumericalError;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumericalError;
  }
}

}  // namespace sfofr::cli
