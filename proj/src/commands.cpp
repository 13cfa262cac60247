#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "randlr/diffusion.hpp"
#include "randlr/error.hpp"
#include "randlr/harness.hpp"
#include "randlr/sde.hpp"
#include "randlr/stats.hpp"
#include "randlr/thermo.hpp"

namespace randlr {

namespace fs = std::filesystem;

namespace {

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

Index get_index(const Json& j, const char* key, Index fallback) {
  const double v = get_or<double>(j, key, static_cast<double>(fallback));
  if (v < 0 || std::floor(v) != v) throw ConfigError(std::string("config key '") + key + "' must be a non-negative integer");
  return static_cast<Index>(v);
}

// Converts misuse errors raised while reading a config into config errors.
template <typename Fn>
auto as_config(Fn&& fn) {
  try {
    return fn();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

Json vector_json(const Vector& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

Json matrix_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

Json default_quadratic_1d() {
  return Json{{"kind", "quadratic"}, {"curvature", {1.0}}, {"centers", {{0.0}}}};
}

std::unique_ptr<QuadraticEnsemble> make_quadratic(const Json& objective, Json* resolved) {
  auto obj = make_objective(objective, resolved);
  auto* q = dynamic_cast<QuadraticEnsemble*>(obj.get());
  if (!q) throw ConfigError("this command needs a quadratic objective");
  obj.release();
  return std::unique_ptr<QuadraticEnsemble>(q);
}

Vector evaluation_point(const Json& config, const Objective& obj) {
  const Json p = config.contains("point") ? config.at("point") : Json("centroid");
  if (p.is_array()) {
    const auto values = p.get<std::vector<double>>();
    if (values.size() != obj.dim()) throw ConfigError("point has the wrong dimension");
    return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
  }
  const auto name = p.get<std::string>();
  if (name == "zero") return Vector::Zero(static_cast<Eigen::Index>(obj.dim()));
  if (name == "centroid") {
    if (const auto* q = dynamic_cast<const QuadraticEnsemble*>(&obj)) return q->centroid();
    Rng rng(get_or<std::uint64_t>(config, "seed", 0), 1);
    return obj.initial_point(rng);
  }
  if (name == "initial") {
    Rng rng(get_or<std::uint64_t>(config, "seed", 0), 1);
    return obj.initial_point(rng);
  }
  throw ConfigError("point must be a vector, 'zero', 'centroid' or 'initial'");
}

Json training_summary(const TrainingRecord& r) {
  Json j{{"steps", r.steps}, {"initial_loss", r.initial_loss}, {"final_loss", r.epochs.back().train_loss}};
  if (auto b = r.best_test_accuracy()) j["best_test_accuracy"] = *b;
  if (auto f = r.final_test_accuracy()) j["final_test_accuracy"] = *f;
  j["alpha"] = Json{{"count", r.alpha.count}, {"mean", r.alpha.mean}, {"variance", r.alpha.variance}};
  return j;
}

// ---------------------------------------------------------------------------

CommandResult cmd_train(const Json& config, const fs::path& out_dir) {
  RunConfig run = RunConfig::from_json(config);
  Json resolved;
  const auto objective = make_objective(run.objective, &resolved);
  run.objective = resolved;
  const auto start = std::chrono::steady_clock::now();
  CommandResult result;
  result.report = Json{{"command", "train"}, {"config", run.to_json()}, {"config_hash", config_hash(run.to_json())}};
  std::string csv;
  try {
    TrainOptions opts;
    opts.seed = run.seed;
    const auto record = train(*objective, run.hyper, run.epochs, opts);
    csv = training_csv(record);
    result.report["status"] = "ok";
    result.report["summary"] = training_summary(record);
  } catch (const DivergedError& e) {
    csv = training_csv(TrainingRecord{});
    result.report["status"] = "diverged";
    result.report["error"] = e.what();
    result.outcome = CommandOutcome::AllDiverged;
  }
  result.report["wall_clock_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!out_dir.empty()) {
    write_text_file(out_dir / "training.csv", csv);
    write_text_file(out_dir / "manifest.json", result.report.dump(2) + "\n");
  }
  return result;
}

CommandResult cmd_sweep(const Json& config, const fs::path& out_dir, int jobs) {
  const auto cfg = ExperimentConfig::from_json(config);
  const auto sweep = run_protocol_sweep(cfg, out_dir, jobs);
  CommandResult result;
  Json rows = Json::array();
  bool overlap = true;
  for (std::size_t a = 0; a < sweep.aggregate.size(); ++a) {
    const auto& r = sweep.aggregate[a];
    rows.push_back(Json{{"protocol", r.label},         {"runs", r.runs},           {"diverged", r.diverged},
                        {"best_test_mean", r.best_mean}, {"best_test_std", r.best_std}, {"final_test_mean", r.final_mean},
                        {"final_test_std", r.final_std}});
    for (std::size_t b = a + 1; b < sweep.aggregate.size(); ++b) {
      const auto& s = sweep.aggregate[b];
      const double pooled = stats::pooled_stddev({r.best, s.best});
      // mean +- one pooled std bands overlap
      if (std::abs(r.best_mean - s.best_mean) > 2.0 * pooled) overlap = false;
    }
  }
  result.report = Json{{"command", "sweep-protocols"}, {"aggregate", rows}, {"bands_overlap", overlap}};
  if (sweep.all_diverged) result.outcome = CommandOutcome::AllDiverged;
  return result;
}

TemperatureTuple tuple_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("temperature tuples must be objects with lr, batch_size, momentum");
  TemperatureTuple t;
  t.rate = get_or<double>(j, "lr", 0.0);
  t.batch_size = get_index(j, "batch_size", 0);
  t.momentum = get_or<double>(j, "momentum", 0.0);
  return t;
}

CommandResult cmd_equal_temperature(const Json& config, const fs::path& out_dir, int jobs) {
  Json base_json = config;
  if (!base_json.contains("momentum")) base_json["momentum"] = 0.0;
  if (!base_json.contains("seeds") && !base_json.contains("replicas")) base_json["replicas"] = 5;
  const auto base = ExperimentConfig::from_json(base_json);
  std::vector<TemperatureTuple> group;
  std::optional<TemperatureTuple> control;
  if (config.contains("group")) {
    for (const auto& t : config.at("group")) group.push_back(tuple_from_json(t));
  } else {
    group = {{2e-4, 60, 0.0}, {1e-4, 30, 0.0}};
    control = TemperatureTuple{1e-4, 60, 0.0};
  }
  if (config.contains("control")) {
    control = config.at("control").is_null() ? std::nullopt : std::optional(tuple_from_json(config.at("control")));
  }
  const double rel_tol = get_or<double>(config, "rel_tol", 1e-9);
  const auto report = run_equal_temperature_experiment(base, group, control, out_dir, jobs, rel_tol);
  CommandResult result;
  result.report = report.to_json();
  result.report["command"] = "equal-temperature";
  const bool all_diverged = std::all_of(report.tuples.begin(), report.tuples.end(),
                                        [](const TupleSummary& t) { return t.final_test.empty(); });
  if (all_diverged) {
    result.outcome = CommandOutcome::AllDiverged;
  } else if (report.comparison_made && !report.passed) {
    result.outcome = CommandOutcome::VerificationFailed;
  }
  return result;
}

CommandResult cmd_estimate_diffusion(const Json& config, const fs::path& out_dir) {
  const Json objective_json = config.contains("objective")
                                  ? config.at("objective")
                                  : Json{{"kind", "quadratic"}, {"dim", 3}, {"samples", 8}, {"seed", 0}};
  Json resolved;
  const auto obj = make_objective(objective_json, &resolved);
  const double delta = get_or<double>(config, "delta", 1.0);
  const Index batch = get_index(config, "batch_size", 2);
  const auto mode = as_config([&] { return moment_mode_from_string(get_or<std::string>(config, "moment_mode", "exact")); });
  const auto scheme =
      as_config([&] { return batch_scheme_from_string(get_or<std::string>(config, "scheme", "subset_enumeration")); });
  const auto samples = get_or<std::uint64_t>(config, "samples", 200'000);
  const auto seed = get_or<std::uint64_t>(config, "seed", 0);
  if (delta < 0.0 || delta > 1.0) throw ConfigError("delta must lie in [0, 1]");
  if (batch == 0 || batch > obj->sample_count()) throw ConfigError("batch_size must lie in [1, N]");
  const Vector x = evaluation_point(config, *obj);
  CovarianceLimits limits;

  CommandResult result;
  Json report{{"command", "estimate-diffusion"}, {"objective", resolved}, {"delta", delta}, {"batch_size", batch},
              {"point", vector_json(x)}};
  if (obj->dim() > limits.max_dim) {
    const auto summary = diagonal_summary(*obj, x, delta, mode);
    report["moment_mode"] = to_string(mode);
    report["d_scalar"] = summary.d_scalar;
    report["gradient_norm"] = summary.gradient_norm;
    report["dhat_diagonal_max"] = summary.dhat_diagonal.maxCoeff();
    report["dhat_diagonal_min"] = summary.dhat_diagonal.minCoeff();
    report["mode"] = "diagonal_summary";
    result.report = report;
    if (!out_dir.empty()) write_text_file(out_dir / "diffusion_report.json", report.dump(2) + "\n");
    return result;
  }

  const auto main = analytic_covariance(*obj, x, delta, batch, scheme, mode, limits);
  const double sigma_norm = main.sigma.norm();
  const double split_residual =
      sigma_norm > 0.0 ? (main.sigma - (main.dhat / static_cast<double>(batch) + main.d_offdiag)).norm() / sigma_norm : 0.0;
  report["moment_mode"] = to_string(main.moment_mode);
  report["scheme"] = to_string(main.scheme);
  report["sigma"] = matrix_json(main.sigma);
  report["dhat"] = matrix_json(main.dhat);
  report["d_offdiag"] = matrix_json(main.d_offdiag);
  report["d_scalar"] = main.d_scalar;
  report["off_isotropy"] = off_isotropy(main);
  report["split_residual"] = split_residual;
  report["offdiag_fraction"] = sigma_norm > 0.0 ? main.d_offdiag.norm() / sigma_norm : 0.0;
  report["batches"] = main.batches;

  std::string csv = "scheme,moment_mode,frobenius_rel_error,split_residual,d_scalar,offdiag_fraction,samples\n";
  Json table = Json::array();
  for (auto s : {BatchScheme::FixedPartition, BatchScheme::SubsetEnumeration, BatchScheme::WithReplacement}) {
    if (s == BatchScheme::FixedPartition && obj->sample_count() % batch != 0) continue;
    Matrix empirical;
    bool have_empirical = false;
    for (auto m : {MomentMode::Exact, MomentMode::PaperCompat}) {
      DiffusionReport r;
      try {
        r = analytic_covariance(*obj, x, delta, batch, s, m, limits);
      } catch (const CapacityError&) {
        continue;
      }
      if (!have_empirical && samples > 0) {
        empirical = empirical_covariance(*obj, x, delta, batch, s, samples, seed);
        have_empirical = true;
      }
      const double err = have_empirical ? frobenius_relative_error(r.sigma, empirical) : std::nan("");
      const double rn = r.sigma.norm();
      const double split = rn > 0.0 ? (r.sigma - (r.dhat / static_cast<double>(batch) + r.d_offdiag)).norm() / rn : 0.0;
      const double frac = rn > 0.0 ? r.d_offdiag.norm() / rn : 0.0;
      csv += to_string(s) + "," + to_string(m) + "," + format_number(err) + "," + format_number(split) + "," +
             format_number(r.d_scalar) + "," + format_number(frac) + "," + std::to_string(samples) + "\n";
      table.push_back(Json{{"scheme", to_string(s)}, {"moment_mode", to_string(m)}, {"frobenius_rel_error", err},
                           {"split_residual", split}, {"d_scalar", r.d_scalar}});
    }
  }
  report["comparison"] = table;
  result.report = report;
  if (!out_dir.empty()) {
    write_text_file(out_dir / "diffusion_report.json", report.dump(2) + "\n");
    write_text_file(out_dir / "diffusion_comparison.csv", csv);
  }
  return result;
}

struct StationarySetup {
  std::unique_ptr<QuadraticEnsemble> obj;
  Json resolved;
  SdeParams params;
  SamplingPlan plan;
};

StationarySetup stationary_setup(const Json& config) {
  StationarySetup s;
  s.obj = make_quadratic(config.contains("objective") ? config.at("objective") : default_quadratic_1d(), &s.resolved);
  const double rate = get_or<double>(config, "lr", 0.005);
  const double momentum = get_or<double>(config, "momentum", 0.9);
  const double diffusion = get_or<double>(config, "diffusion", 1.0);
  const Index batch = get_index(config, "batch_size", 256);
  as_config([&] {
    s.params = SdeParams::from(rate, momentum, diffusion, batch);
    s.params.dt = get_or<double>(config, "dt", s.params.dt);
    s.params.validate();
    return 0;
  });
  s.plan.samples = get_or<std::uint64_t>(config, "samples", 1'000'000);
  s.plan.interval = get_or<double>(config, "interval", rate / (1.0 - momentum));  // one friction time
  s.plan.burn_in = get_or<double>(config, "burn_in", -1.0);
  s.plan.seed = get_or<std::uint64_t>(config, "seed", 0);
  const auto integrator = get_or<std::string>(config, "integrator", "exact_ou");
  if (integrator == "exact_ou") {
    s.plan.integrator = Integrator::ExactOu;
  } else if (integrator == "euler_maruyama") {
    s.plan.integrator = Integrator::EulerMaruyama;
    as_config([&] {
      s.params.validate_explicit();
      return 0;
    });
  } else {
    throw ConfigError("integrator must be exact_ou or euler_maruyama");
  }
  if (s.plan.samples < 2) throw ConfigError("samples must be at least 2");
  return s;
}

Json comparison_json(const GibbsComparison& c) {
  Json marginals = Json::array();
  for (const auto& m : c.marginals) {
    marginals.push_back(Json{{"name", m.name},
                             {"empirical_mean", m.empirical_mean},
                             {"analytic_mean", m.analytic_mean},
                             {"empirical_variance", m.empirical_variance},
                             {"analytic_variance", m.analytic_variance},
                             {"variance_ratio", m.variance_ratio},
                             {"ks_distance", m.ks_distance},
                             {"passed", m.passed}});
  }
  return Json{{"samples", c.samples},
              {"marginals", marginals},
              {"position_cov_error", c.position_cov_error},
              {"velocity_cov_error", c.velocity_cov_error},
              {"max_cross_correlation", c.max_cross_correlation},
              {"passed", c.passed}};
}

std::string moments_csv(const GibbsComparison& c) {
  std::string csv = "marginal,empirical_mean,analytic_mean,empirical_variance,analytic_variance,variance_ratio,ks_distance\n";
  for (const auto& m : c.marginals) {
    csv += m.name + "," + format_number(m.empirical_mean) + "," + format_number(m.analytic_mean) + "," +
           format_number(m.empirical_variance) + "," + format_number(m.analytic_variance) + "," +
           format_number(m.variance_ratio) + "," + format_number(m.ks_distance) + "\n";
  }
  return csv;
}

std::string histograms_csv(const StationarySamples& samples, const GibbsDensity& density, Index bins) {
  std::string csv = "marginal,bin_lo,bin_hi,count,density,gibbs_density\n";
  const Matrix pos_cov = density.position_covariance();
  const Matrix vel_cov = density.velocity_covariance();
  auto emit = [&](const std::string& name, const Eigen::RowVectorXd& row, double mean, double var) {
    const double sd = std::sqrt(var);
    const double lo = mean - 5.0 * sd, hi = mean + 5.0 * sd;
    const double width = (hi - lo) / static_cast<double>(bins);
    std::vector<std::uint64_t> counts(bins, 0);
    for (Eigen::Index k = 0; k < row.size(); ++k) {
      const double b = std::floor((row(k) - lo) / width);
      if (b >= 0 && b < static_cast<double>(bins)) ++counts[static_cast<Index>(b)];
    }
    for (Index b = 0; b < bins; ++b) {
      const double a = lo + width * static_cast<double>(b);
      const double mid = a + 0.5 * width;
      const double gibbs = std::exp(-0.5 * (mid - mean) * (mid - mean) / var) / std::sqrt(2.0 * M_PI * var);
      csv += name + "," + format_number(a) + "," + format_number(a + width) + "," + std::to_string(counts[b]) + "," +
             format_number(static_cast<double>(counts[b]) / (static_cast<double>(row.size()) * width)) + "," +
             format_number(gibbs) + "\n";
    }
  };
  for (Eigen::Index i = 0; i < samples.positions.rows(); ++i) {
    emit("X" + std::to_string(i), samples.positions.row(i), density.center()(i), pos_cov(i, i));
  }
  for (Eigen::Index i = 0; i < samples.velocities.rows(); ++i) {
    emit("V" + std::to_string(i), samples.velocities.row(i), 0.0, vel_cov(i, i));
  }
  return csv;
}

GibbsTolerances tolerances_from(const Json& config) {
  GibbsTolerances tol;
  const Json t = config.contains("tolerances") ? config.at("tolerances") : Json::object();
  tol.variance_rel = get_or<double>(t, "variance_rel", tol.variance_rel);
  tol.mean_sigmas = get_or<double>(t, "mean_sigmas", tol.mean_sigmas);
  tol.correlation = get_or<double>(t, "correlation", tol.correlation);
  tol.ks = get_or<double>(t, "ks", tol.ks);
  return tol;
}

CommandResult stationary_command(const Json& config, const fs::path& out_dir, bool verify) {
  auto s = stationary_setup(config);
  const auto samples = sample_stationary(*s.obj, s.params, s.plan);
  const double scale = get_or<double>(config, "temperature_scale", 1.0);
  if (!(scale > 0.0)) throw ConfigError("temperature_scale must be positive");
  const double temperature = s.params.temperature() * scale;
  const GibbsDensity density(s.obj->curvature(), s.obj->centroid(), s.params.rate, temperature);
  const auto comparison = compare_to_gibbs(samples, density, tolerances_from(config));

  CommandResult result;
  result.report = Json{{"command", verify ? "verify-gibbs" : "sample-stationary"},
                       {"objective", s.resolved},
                       {"lr", s.params.rate},
                       {"momentum", s.params.momentum},
                       {"diffusion", s.params.diffusion},
                       {"batch_size", s.params.batch_size},
                       {"dt", s.params.dt},
                       {"integrator", s.plan.integrator == Integrator::ExactOu ? "exact_ou" : "euler_maruyama"},
                       {"seed", s.plan.seed},
                       {"temperature", s.params.temperature()},
                       {"reference_temperature", temperature},
                       {"comparison", comparison_json(comparison)}};
  if (verify && !comparison.passed) result.outcome = CommandOutcome::VerificationFailed;
  if (!out_dir.empty()) {
    write_text_file(out_dir / "moments.csv", moments_csv(comparison));
    write_text_file(out_dir / "histograms.csv", histograms_csv(samples, density, get_index(config, "bins", 40)));
    write_text_file(out_dir / (verify ? "gibbs_report.json" : "stationary_report.json"), result.report.dump(2) + "\n");
  }
  return result;
}

CommandResult cmd_weak_error(const Json& config, const fs::path& out_dir) {
  Json resolved;
  const auto obj = make_quadratic(config.contains("objective")
                                      ? config.at("objective")
                                      : Json{{"kind", "quadratic"}, {"curvature", {1.0, 3.0}}, {"centers", {{0.0, 0.0}}}},
                                  &resolved);
  const double momentum = get_or<double>(config, "momentum", 0.0);
  const auto rates = get_or<std::vector<double>>(config, "rates", {0.1, 0.05, 0.025, 0.0125});
  const double horizon = get_or<double>(config, "horizon", 1.0);
  auto x0v = get_or<std::vector<double>>(config, "x0", {});
  Vector x0 = Vector::Ones(static_cast<Eigen::Index>(obj->dim()));
  if (!x0v.empty()) {
    if (x0v.size() != obj->dim()) throw ConfigError("x0 has the wrong dimension");
    x0 = Eigen::Map<const Vector>(x0v.data(), static_cast<Eigen::Index>(x0v.size()));
  } else if (obj->dim() == 2) {
    x0 << 1.0, -0.5;
  }
  const auto range = get_or<std::vector<double>>(config, "slope_range", {0.8, 1.5});
  if (range.size() != 2) throw ConfigError("slope_range must have two entries");
  const auto res = as_config([&] { return weak_error_probe(*obj, momentum, x0, rates, horizon); });

  CommandResult result;
  std::string csv = "lr,steps,error\n";
  Json points = Json::array();
  for (const auto& p : res.points) {
    csv += format_number(p.rate) + "," + std::to_string(p.steps) + "," + format_number(p.error) + "\n";
    points.push_back(Json{{"lr", p.rate}, {"steps", p.steps}, {"error", p.error}});
  }
  const bool passed = res.slope >= range[0] && res.slope <= range[1];
  result.report = Json{{"command", "weak-error"}, {"objective", resolved}, {"momentum", momentum},
                       {"horizon", horizon},      {"x0", vector_json(x0)}, {"points", points},
                       {"slope", res.slope},      {"slope_range", range},  {"passed", passed}};
  if (!passed) result.outcome = CommandOutcome::VerificationFailed;
  if (!out_dir.empty()) {
    write_text_file(out_dir / "weak_error.csv", csv);
    write_text_file(out_dir / "weak_error.json", result.report.dump(2) + "\n");
  }
  return result;
}

CommandResult cmd_temperature(const Json& config, const fs::path& out_dir) {
  const double rate = get_or<double>(config, "lr", 0.005);
  const double diffusion = get_or<double>(config, "diffusion", 1.0);
  const Index batch = get_index(config, "batch_size", 256);
  const double momentum = get_or<double>(config, "momentum", 0.9);
  const auto t = as_config([&] { return effective_temperature(rate, diffusion, batch, momentum); });
  CommandResult result;
  result.report = Json{{"command", "temperature"}, {"lr", rate},      {"diffusion", diffusion},
                       {"batch_size", batch},      {"momentum", momentum}, {"temperature", t.temperature},
                       {"beta", std::isinf(t.beta) ? Json("inf") : Json(t.beta)}};
  if (config.contains("compare")) {
    const auto other = tuple_from_json(config.at("compare"));
    const double rel_tol = get_or<double>(config, "rel_tol", 1e-9);
    result.report["same_temperature"] = as_config([&] {
      return same_temperature({rate, batch, momentum}, {other.rate, other.batch_size, other.momentum}, rel_tol);
    });
  }
  if (!out_dir.empty()) write_text_file(out_dir / "temperature.json", result.report.dump(2) + "\n");
  return result;
}

}  // namespace

CommandResult run_command(const std::string& command, const Json& config, const fs::path& out_dir, int jobs) {
  if (!config.is_object()) throw ConfigError("config must be a JSON object");
  if (jobs < 1) throw ConfigError("jobs must be at least 1");
  if (command == "train") return cmd_train(config, out_dir);
  if (command == "sweep-protocols") return cmd_sweep(config, out_dir, jobs);
  if (command == "equal-temperature") return cmd_equal_temperature(config, out_dir, jobs);
  if (command == "estimate-diffusion") return cmd_estimate_diffusion(config, out_dir);
  if (command == "sample-stationary") return stationary_command(config, out_dir, false);
  if (command == "verify-gibbs") return stationary_command(config, out_dir, true);
  if (command == "weak-error") return cmd_weak_error(config, out_dir);
  if (command == "temperature") return cmd_temperature(config, out_dir);
  throw ConfigError("unknown command '" + command + "'");
}

}  // namespace randlr
