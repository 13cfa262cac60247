#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "randlr/error.hpp"
#include "randlr/sde.hpp"

using namespace randlr;

namespace {

QuadraticEnsemble quadratic_1d(double k) { return QuadraticEnsemble(Matrix::Constant(1, 1, k), Matrix::Zero(1, 1)); }

class Flat final : public Objective {
 public:
  Index sample_count() const override { return 1; }
  Index dim() const override { return 2; }
  std::string name() const override { return "flat"; }
  double sample_loss(const Vector&, Index) const override { return 0.0; }
  void sample_gradient(const Vector& x, Index, Vector& g) const override { g = Vector::Zero(x.size()); }
};

struct Moments {
  double var_x = 0.0, var_v = 0.0, cov = 0.0;
};

Moments moments(const StationarySamples& s, double center = 0.0) {
  Moments m;
  const auto n = static_cast<double>(s.size());
  for (Eigen::Index k = 0; k < s.positions.cols(); ++k) {
    const double x = s.positions(0, k) - center, v = s.velocities(0, k);
    m.var_x += x * x;
    m.var_v += v * v;
    m.cov += x * v;
  }
  m.var_x /= n;
  m.var_v /= n;
  m.cov /= n;
  return m;
}

// Stationary moments of the Euler-Maruyama chain, l = 0.05, mu = 0.5, k = 1,
// D = 1, C = 1, from the discrete Lyapunov equation.
struct EmOracle {
  double dt, var_v, var_x, cov;
};
constexpr EmOracle kEm[] = {
    {0.05, 0.06779661016949153, 0.0025423728813559316, 0.0016949152542372894},
    {0.0125, 0.05337781484570474, 0.0025020850708924046, 0.0003336113427856643},
    {0.003125, 0.050796170444962506, 0.002500124014087988, 7.936901632027504e-05},
};

}  // namespace

TEST_CASE("temperature arithmetic") {
  const auto p = SdeParams::from(0.005, 0.9, 1.0, 256);
  CHECK(p.temperature() == doctest::Approx(9.765625e-5).epsilon(1e-12));
  CHECK(p.friction() == doctest::Approx(20.0));
  CHECK(p.noise_amplitude() == doctest::Approx(1.0 / 16.0));
  CHECK(p.dt == doctest::Approx(0.0005));
}

TEST_CASE("parameter validation") {
  auto p = SdeParams::from(0.1, 0.5, 1.0, 1);
  p.dt = 0.4;  // gamma dt = 2
  CHECK_THROWS_AS(p.validate_explicit(), InvalidArgument);
  p.dt = 0.3;
  CHECK_NOTHROW(p.validate_explicit());
  p.momentum = 1.0;
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
  CHECK_THROWS_AS(SdeParams::from(0.0, 0.5, 1.0, 1).validate(), InvalidArgument);
  CHECK_THROWS_AS(SdeParams::from(0.1, 0.5, -1.0, 1).validate(), InvalidArgument);
}

TEST_CASE("expm2 against Eigen's matrix exponential") {
  std::vector<Eigen::Matrix2d> cases;
  Eigen::Matrix2d m;
  m << 0, 1, -3, -2;
  cases.push_back(m);
  m << 0, 1, -200, -20;  // underdamped
  cases.push_back(m);
  m << 0, 1, -100, -20;  // critically damped
  cases.push_back(m);
  m << 0, 1, -99.9999, -20;  // just off critical
  cases.push_back(m);
  m << 0, 1, -1e-3, -2000;  // strongly overdamped
  cases.push_back(m);
  m << -0.5, 2, 0.1, -0.3;
  cases.push_back(m);
  m << 1e-9, 0, 0, -1e-9;
  cases.push_back(m);
  for (double t : {1e-4, 0.05, 1.0, 3.0}) {
    for (const auto& c : cases) {
      const Eigen::Matrix2d a = c * t;
      const Eigen::Matrix2d ref = a.exp();
      const Eigen::Matrix2d got = expm2(a);
      CHECK((got - ref).norm() <= 1e-11 * std::max(1.0, ref.norm()));
    }
  }
}

TEST_CASE("expm2 matches frozen reference values") {
  Eigen::Matrix2d m;
  m << 0, 1, -200, -20;
  Eigen::Matrix2d want;
  want << 0.8230670184283626, 0.029078628821269187, -5.815725764253837, 0.24149444200297887;
  CHECK((expm2(m * 0.05) - want).norm() < 1e-13);
  m << 0, 1, -100, -20;
  want << 0.9097959895689501, 0.030326532985631673, -3.032653298563167, 0.3032653298563167;
  CHECK((expm2(m * 0.05) - want).norm() < 1e-13);
}

TEST_CASE("pure friction decays the velocity geometrically") {
  const Flat flat;
  SdeParams p = SdeParams::from(0.5, 0.5, 0.0, 1);  // gamma = 1
  p.dt = 0.1;
  SdeState s{Vector::Zero(2), Vector::Ones(2), 0.0, 0};
  Rng rng(1);
  for (int k = 1; k <= 10; ++k) {
    em_step(s, flat, p, rng);
    CHECK(s.velocity(0) == doctest::Approx(std::pow(0.9, k)).epsilon(1e-14));
  }
  CHECK(s.steps == 10);
  CHECK(s.time == doctest::Approx(1.0));
}

TEST_CASE("noiseless exact dynamics lose energy") {
  const auto q = quadratic_1d(4.0);
  SdeParams p = SdeParams::from(0.1, 0.5, 0.0, 1);
  const OuKernel kernel(q.curvature(), q.centroid(), p);
  Vector x = Vector::Constant(1, 1.0), v = Vector::Constant(1, 0.5);
  auto energy = [&] { return 0.5 * v.squaredNorm() + q.full_loss(x) / p.rate; };
  double last = energy();
  for (int k = 0; k < 200; ++k) {
    kernel.propagate_mean(x, v, 0.01);
    const double e = energy();
    CHECK(e <= last * (1.0 + 1e-12));
    last = e;
  }
}

TEST_CASE("correction term enters the drift as a modified potential") {
  const auto q = quadratic_1d(3.0);
  SdeParams p = SdeParams::from(0.2, 0.0, 0.0, 1);
  p.dt = 0.01;
  p.correction = true;
  SdeState s{Vector::Constant(1, 1.0), Vector::Zero(1), 0.0, 0};
  Rng rng(0);
  em_step(s, q, p, rng);
  // drift = -(k x + (l/2) k^2 x) / l
  const double expected_v = -0.01 * (3.0 + 0.1 * 9.0) / 0.2;
  CHECK(s.velocity(0) == doctest::Approx(expected_v).epsilon(1e-6));
}

TEST_CASE("em_step flags runaway states") {
  const auto q = quadratic_1d(1.0);
  SdeParams p = SdeParams::from(0.1, 0.0, 0.0, 1);
  SdeState s{Vector::Zero(1), Vector::Constant(1, 1e13), 0.0, 0};
  Rng rng(0);
  CHECK_THROWS_AS(em_step(s, q, p, rng), DivergedError);
}

TEST_CASE("Euler-Maruyama stationary moments match the discrete Lyapunov oracle") {
  const auto q = quadratic_1d(1.0);
  for (int i = 0; i < 2; ++i) {
    auto p = SdeParams::from(0.05, 0.5, 1.0, 1);
    p.dt = kEm[i].dt;
    SamplingPlan plan;
    plan.samples = 1'000'000;
    plan.integrator = Integrator::EulerMaruyama;
    plan.interval = 4.0 * 0.05;
    plan.seed = 3 + i;
    const auto m = moments(sample_stationary(q, p, plan));
    CHECK(m.var_v == doctest::Approx(kEm[i].var_v).epsilon(0.02));
    CHECK(m.var_x == doctest::Approx(kEm[i].var_x).epsilon(0.02));
    CHECK(m.cov == doctest::Approx(kEm[i].cov).epsilon(0.1));
  }
  // The velocity bias relative to T shrinks linearly in dt.
  const double t = 0.05;
  const double b0 = kEm[0].var_v - t, b1 = kEm[1].var_v - t, b2 = kEm[2].var_v - t;
  CHECK(b0 / b1 > 3.5);
  CHECK(b1 / b2 > 3.5);
}

TEST_CASE("exact kernel reproduces the OU stationary covariance") {
  const double k = 2.0;
  const auto q = quadratic_1d(k);
  const auto p = SdeParams::from(0.005, 0.9, 1.0, 256);
  SamplingPlan plan;
  plan.samples = 1'000'000;
  plan.interval = 0.05;
  plan.seed = 12;
  const auto m = moments(sample_stationary(q, p, plan));
  const double t = p.temperature();
  CHECK(m.var_v / t == doctest::Approx(1.0).epsilon(0.01));
  CHECK(m.var_x / (p.rate * t / k) == doctest::Approx(1.0).epsilon(0.01));
  CHECK(std::abs(m.cov) / std::sqrt(m.var_x * m.var_v) < 0.01);
}

TEST_CASE("infinite step draws from the stationary law") {
  const auto q = quadratic_1d(1.0);
  auto p = SdeParams::from(0.05, 0.5, 1.0, 1);
  p.dt = std::numeric_limits<double>::infinity();
  const OuKernel kernel(q.curvature(), q.centroid(), p);
  Rng rng(6);
  std::vector<SdeState> states;
  for (int k = 0; k < 200'000; ++k) {
    SdeState s{Vector::Constant(1, 5.0), Vector::Constant(1, -3.0), 0.0, 0};
    kernel.step(s, rng);
    states.push_back(s);
  }
  const auto m = moments(StationarySamples::from_states(states));
  CHECK(m.var_v == doctest::Approx(p.temperature()).epsilon(0.02));
  CHECK(m.var_x == doctest::Approx(p.rate * p.temperature()).epsilon(0.02));
}

TEST_CASE("exact kernel and Euler-Maruyama agree as dt shrinks") {
  const auto q = quadratic_1d(1.0);
  auto p = SdeParams::from(0.05, 0.5, 1.0, 1);
  SamplingPlan plan;
  plan.samples = 400'000;
  plan.interval = 0.2;
  plan.seed = 21;
  const auto exact = moments(sample_stationary(q, p, plan));
  plan.integrator = Integrator::EulerMaruyama;
  std::vector<double> gaps;
  for (double dt : {0.05, 0.0125}) {
    p.dt = dt;
    gaps.push_back(std::abs(moments(sample_stationary(q, p, plan)).var_v - exact.var_v));
  }
  CHECK(gaps[1] < gaps[0] / 2.5);
}

TEST_CASE("exact kernel rejects a curvature that is not positive definite") {
  const auto p = SdeParams::from(0.1, 0.5, 1.0, 1);
  CHECK_THROWS_AS(OuKernel(-Matrix::Identity(2, 2), Vector::Zero(2), p), InvalidArgument);
  CHECK_THROWS_AS(OuKernel(Matrix::Identity(2, 2), Vector::Zero(3), p), InvalidArgument);
}

TEST_CASE("weak error probe") {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 0) = 1.0;
  a(1, 1) = 3.0;
  const QuadraticEnsemble q(a, Matrix::Zero(2, 1));
  Vector x0(2);
  x0 << 1.0, -0.5;
  const std::vector<double> rates{0.1, 0.05, 0.025, 0.0125};
  const auto res = weak_error_probe(q, 0.0, x0, rates, 1.0);
  // |E x_K - E X(K l)| from a scripted recursion and scipy's expm.
  const double want[] = {0.024681608212730924, 0.010436749271808312, 0.004922260435849013, 0.0024003049624348196};
  REQUIRE(res.points.size() == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(res.points[i].error == doctest::Approx(want[i]).epsilon(1e-9));
    CHECK(res.points[i].steps == static_cast<std::uint64_t>(std::lround(1.0 / rates[i])));
  }
  CHECK(res.slope >= 0.8);
  CHECK(res.slope <= 1.5);
  const std::vector<double> tiny{1e-3, 1e-4};
  const auto small = weak_error_probe(q, 0.0, x0, tiny, 1.0);
  CHECK(small.points[1].error < small.points[0].error);
  CHECK(small.points[1].error < 1e-4);
}

TEST_CASE("noiseless trajectories differ by O(l)") {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 0) = 1.0;
  a(1, 1) = 3.0;
  const QuadraticEnsemble q(a, Matrix::Zero(2, 1));
  Vector x0(2);
  x0 << 1.0, -0.5;
  const double g1 = max_trajectory_gap(q, 0.0, x0, 0.02, 1.0);
  const double g2 = max_trajectory_gap(q, 0.0, x0, 0.01, 1.0);
  const double g3 = max_trajectory_gap(q, 0.0, x0, 0.005, 1.0);
  CHECK(g2 / g1 == doctest::Approx(0.5).epsilon(0.15));
  CHECK(g3 / g2 == doctest::Approx(0.5).epsilon(0.15));
}

TEST_CASE("log-log slope") {
  const std::vector<double> xs{1, 2, 4, 8}, ys{3, 12, 48, 192};
  CHECK(log_log_slope(xs, ys) == doctest::Approx(2.0));
}
