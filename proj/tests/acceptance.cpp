// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails. Usage: acceptance [out_dir] [--only N,...]
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <thread>

#include "randlr/diffusion.hpp"
#include "randlr/harness.hpp"
#include "randlr/mnist.hpp"
#include "randlr/protocols.hpp"
#include "randlr/sde.hpp"
#include "randlr/stats.hpp"
#include "randlr/thermo.hpp"

using namespace randlr;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = RANDLR_SOURCE_DIR;
const fs::path kMnist = kSource / "data" / "mnist5k";

struct Verdict {
  bool passed = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

int jobs() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

Json mnist_objective() {
  return Json{{"kind", "mnist"}, {"path", kMnist.string()}, {"n_train", 2000}, {"n_test", 1000}, {"subset_seed", 0}};
}

Verdict alpha_moments() {
  Verdict v{true, ""};
  for (double delta : {0.1, 0.5, 1.0}) {
    const auto spec = ProtocolSpec::random_uniform(0.005, delta);
    Rng rng(1, kAlphaStream);
    const int n = 1'000'000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double a = sample_alpha(spec, rng);
      sum += a;
      sum2 += a * a;
    }
    const double mean = sum / n;
    const double var = (sum2 - n * mean * mean) / (n - 1);
    const double se = delta / std::sqrt(3.0) / std::sqrt(static_cast<double>(n));
    const double z = std::abs(mean - 1.0) / se;
    const double var_err = std::abs(var / (delta * delta / 3.0) - 1.0);
    v.passed = v.passed && z <= 4.0 && var_err <= 0.01;
    v.detail += "d=" + fmt(delta, 2) + ": |mean-1|/se=" + fmt(z, 3) + " var_err=" + fmt(var_err, 3) + "; ";
  }
  return v;
}

QuadraticEnsemble ensemble8() {
  Matrix a(3, 3);
  a << 2, 0.5, 0, 0.5, 1, 0.2, 0, 0.2, 1.5;
  Matrix pts(8, 3);
  pts << 1, 0, 2, -1, 1, 0, 0.5, -2, 1, 2, 2, -1, -1.5, 0.5, 0.5, 0, -1, -2, 1, 1, 1, -2, 0, 1.5;
  return QuadraticEnsemble(a, pts.transpose());
}

Verdict covariance_oracle() {
  const auto q = ensemble8();
  Vector x(3);
  x << 0.3, -0.2, 0.1;
  const auto exact = analytic_covariance(q, x, 1.0, 2, BatchScheme::SubsetEnumeration, MomentMode::Exact);
  const auto compat = analytic_covariance(q, x, 1.0, 2, BatchScheme::SubsetEnumeration, MomentMode::PaperCompat);
  const Matrix emp = empirical_covariance(q, x, 1.0, 2, BatchScheme::SubsetEnumeration, 1'000'000, 2024);
  const double frob = frobenius_relative_error(emp, exact.sigma);
  const double split = (exact.sigma - (exact.dhat / 2.0 + exact.d_offdiag)).norm() / exact.sigma.norm();
  const bool modes_equal = exact.sigma == compat.sigma && exact.dhat == compat.dhat && exact.d_offdiag == compat.d_offdiag;
  return {frob <= 0.02 && split <= 1e-12 && modes_equal,
          "frobenius=" + fmt(frob) + " split=" + fmt(split) + " exact==paper_compat:" + (modes_equal ? "yes" : "no")};
}

Verdict gibbs() {
  const double k = 1.0;
  const QuadraticEnsemble q(Matrix::Constant(1, 1, k), Matrix::Zero(1, 1));
  const auto p = SdeParams::from(0.005, 0.9, 1.0, 256);
  SamplingPlan plan;
  plan.samples = 1'000'000;
  plan.interval = p.rate / (1.0 - p.momentum);
  plan.seed = 2024;
  const auto samples = sample_stationary(q, p, plan);
  const double t = p.temperature();
  const GibbsDensity right(q.curvature(), q.centroid(), p.rate, t);
  const GibbsDensity halved(q.curvature(), q.centroid(), p.rate, 0.5 * t);
  const auto ok = compare_to_gibbs(samples, right);
  const auto cold = compare_to_gibbs(samples, halved);
  const double rx = ok.marginals[0].variance_ratio, rv = ok.marginals[1].variance_ratio;
  const bool in_band = rv >= 0.95 && rv <= 1.05 && rx >= 0.95 && rx <= 1.05;
  return {in_band && !cold.passed,
          "T=" + fmt(t, 8) + " Var(V)/T=" + fmt(rv) + " Var(X)/(lT/k)=" + fmt(rx) +
              " halved-T check " + (cold.passed ? "passed (wrong)" : "failed (expected)")};
}

Verdict weak_order() {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 0) = 1.0;
  a(1, 1) = 3.0;
  const QuadraticEnsemble q(a, Matrix::Zero(2, 1));
  Vector x0(2);
  x0 << 1.0, -0.5;
  const std::vector<double> rates{0.1, 0.05, 0.025, 0.0125};
  const auto res = weak_error_probe(q, 0.0, x0, rates, 1.0);
  std::string d = "slope=" + fmt(res.slope) + " errors=";
  for (const auto& pt : res.points) d += fmt(pt.error, 3) + " ";
  return {res.slope >= 0.8 && res.slope <= 1.5, d};
}

Verdict protocol_equivalence(const fs::path& out) {
  Json cfg{{"objective", mnist_objective()},
           {"lr", 0.005},
           {"momentum", 0.9},
           {"nesterov", true},
           {"batch_size", 256},
           {"epochs", 30},
           {"protocols", Json::array({Json{{"kind", "constant"}}, Json{{"kind", "random"}, {"delta", 1.0}},
                                      Json{{"kind", "cyclic"}, {"period", 6}}, Json{{"kind", "cyclic"}, {"period", 18}},
                                      Json{{"kind", "cyclic"}, {"period", 30}}})},
           {"seeds", {0, 1, 2, 3, 4}}};
  const auto sweep = run_protocol_sweep(ExperimentConfig::from_json(cfg), out / "protocol_sweep", jobs());
  bool overlap = true;
  bool complete = true;
  std::string d;
  for (std::size_t i = 0; i < sweep.aggregate.size(); ++i) {
    const auto& a = sweep.aggregate[i];
    complete = complete && a.best.size() >= 5;
    d += a.label + "=" + fmt(a.best_mean) + "+-" + fmt(a.best_std, 2) + " ";
    for (std::size_t j = i + 1; j < sweep.aggregate.size(); ++j) {
      const auto& b = sweep.aggregate[j];
      const double pooled = stats::pooled_stddev({a.best, b.best});
      if (std::abs(a.best_mean - b.best_mean) > 2.0 * pooled) overlap = false;
    }
  }
  return {overlap && complete, d};
}

Verdict equal_temperature(const fs::path& out) {
  Json cfg{{"objective", mnist_objective()},
           {"momentum", 0.0},
           {"nesterov", false},
           {"epochs", 30},
           {"protocols", Json::array({Json{{"kind", "constant"}}})},
           {"seeds", {0, 1, 2, 3, 4}}};
  const auto base = ExperimentConfig::from_json(cfg);
  const auto r = run_equal_temperature_experiment(base, {{2e-4, 60, 0.0}, {1e-4, 30, 0.0}},
                                                  TemperatureTuple{1e-4, 60, 0.0}, out / "equal_temperature", jobs());
  std::string d;
  for (const auto& t : r.tuples) {
    d += t.tuple.label() + "(" + t.role + "): test=" + fmt(stats::mean(t.final_test)) + "+-" +
         fmt(stats::stddev(t.final_test), 2) + " loss=" + fmt(stats::mean(t.final_loss)) + "; ";
  }
  d += "group gap=" + fmt(r.group_max_gap, 3) + " pooled sd, control gap=" + fmt(r.control_min_gap, 3) + " pooled sd";
  return {r.passed && r.comparison_made, d};
}

Verdict references_declared() {
  std::string readme;
  try {
    readme = read_text_file(kSource / "README.md");
  } catch (const std::exception& e) {
    return {false, e.what()};
  }
  const bool values = readme.find("0.73036 ± 0.00444") != std::string::npos &&
                      readme.find("0.73002 ± 0.00526") != std::string::npos;
  const bool marked = readme.find("reference-only") != std::string::npos;
  return {values && marked, std::string("values present:") + (values ? "yes" : "no") +
                                " marked reference-only:" + (marked ? "yes" : "no")};
}

Verdict determinism() {
  const auto obj = load_mnist_subset(kMnist, 2000, 1000, 0);
  HyperParams h;
  h.momentum = 0.9;
  h.nesterov = true;
  h.batch_size = 256;
  h.protocol = ProtocolSpec::random_uniform(0.005, 1.0);
  TrainOptions opts;
  opts.seed = 7;
  const auto a = training_csv(train(obj, h, 2, opts));
  const auto b = training_csv(train(obj, h, 2, opts));
  const bool same_csv = a == b;

  HyperParams c = h;
  c.protocol = ProtocolSpec::constant(0.005);
  HyperParams z = h;
  z.protocol = ProtocolSpec::random_uniform(0.005, 0.0);
  const auto rc = train(obj, c, 2, opts);
  const auto rz = train(obj, z, 2, opts);
  const bool reduction = rc.final_x == rz.final_x && training_csv(rc) == training_csv(rz);

  Rng rng(3, kInitStream);
  const Vector x = obj.initial_point(rng);
  Rng pick(11);
  std::vector<Index> batch;
  for (int i = 0; i < 8; ++i) batch.push_back(pick.below(obj.sample_count()));
  const Vector g = minibatch_grad(obj, x, batch);
  double worst = 0.0;
  const double step = 1e-4;
  for (int k = 0; k < 20; ++k) {
    const auto j = static_cast<Eigen::Index>(pick.below(obj.dim()));
    Vector xp = x, xm = x;
    xp(j) += step;
    xm(j) -= step;
    const double fd = (obj.batch_loss(xp, batch) - obj.batch_loss(xm, batch)) / (2.0 * step);
    worst = std::max(worst, std::abs(fd - g(j)) / std::max({std::abs(fd), std::abs(g(j)), 1e-8}));
  }
  return {same_csv && reduction && worst <= 1e-5,
          std::string("byte-identical CSV:") + (same_csv ? "yes" : "no") + " delta0==constant:" +
              (reduction ? "yes" : "no") + " max grad rel err=" + fmt(worst, 3)};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path out = "acceptance_out";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else {
      out = arg;
    }
  }
  fs::create_directories(out);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"alpha-moment suite", alpha_moments},
      {"covariance oracle equivalence", covariance_oracle},
      {"stationary Gibbs verification", gibbs},
      {"weak order-1 approximation", weak_order},
      {"protocol equivalence at small l", [&] { return protocol_equivalence(out); }},
      {"equal-temperature equivalence", [&] { return equal_temperature(out); }},
      {"non-reproducible results declared", references_declared},
      {"determinism and reduction", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!v.passed) ++failures;
    std::printf("%s %d %s (%.1fs): %s\n", v.passed ? "PASS" : "FAIL", id, criteria[i].first.c_str(), secs,
                v.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
