#include "randlr/thermo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "randlr/diffusion.hpp"
#include "randlr/error.hpp"
#include "randlr/stats.hpp"

namespace randlr {

ThermoParams effective_temperature(double rate, double diffusion, Index batch_size, double momentum) {
  if (!(rate > 0.0)) throw InvalidArgument("temperature: rate must be positive");
  if (!(diffusion >= 0.0)) throw InvalidArgument("temperature: diffusion must be non-negative");
  if (batch_size == 0) throw InvalidArgument("temperature: batch size must be positive");
  if (momentum >= 1.0) throw InvalidArgument("temperature: momentum 1 gives zero friction (division by zero)");
  if (!(momentum >= 0.0)) throw InvalidArgument("temperature: momentum must lie in [0, 1)");
  ThermoParams p;
  p.rate = rate;
  p.diffusion = diffusion;
  p.batch_size = batch_size;
  p.momentum = momentum;
  p.temperature = rate * diffusion / (2.0 * static_cast<double>(batch_size) * (1.0 - momentum));
  p.beta = p.temperature > 0.0 ? 1.0 / p.temperature : std::numeric_limits<double>::infinity();
  return p;
}

double TemperatureKey::ratio() const { return rate / (static_cast<double>(batch_size) * (1.0 - momentum)); }

bool same_temperature(const TemperatureKey& a, const TemperatureKey& b, double rel_tol) {
  for (const auto* k : {&a, &b}) {
    if (!(k->rate > 0.0) || k->batch_size == 0 || !(k->momentum >= 0.0 && k->momentum < 1.0)) {
      throw InvalidArgument("same_temperature: invalid (l, C, mu) tuple");
    }
  }
  const double lhs = a.rate * static_cast<double>(b.batch_size) * (1.0 - b.momentum);
  const double rhs = b.rate * static_cast<double>(a.batch_size) * (1.0 - a.momentum);
  return std::abs(lhs - rhs) <= rel_tol * std::max(std::abs(lhs), std::abs(rhs));
}

GibbsDensity::GibbsDensity(Matrix curvature, Vector center, double rate, double temperature)
    : curvature_(std::move(curvature)), center_(std::move(center)), rate_(rate), temperature_(temperature) {
  if (!(rate_ > 0.0)) throw InvalidArgument("Gibbs density: rate must be positive");
  if (!(temperature_ > 0.0)) throw InvalidArgument("Gibbs density: temperature must be positive");
  if (curvature_.rows() != center_.size() || curvature_.cols() != center_.size()) {
    throw InvalidArgument("Gibbs density: curvature and center dimensions disagree");
  }
  if (Eigen::LLT<Matrix>(curvature_).info() != Eigen::Success) {
    throw InvalidArgument("Gibbs density: curvature must be positive definite");
  }
}

double GibbsDensity::hamiltonian(const Vector& velocity, const Vector& position) const {
  const Vector d = position - center_;
  return 0.5 * velocity.squaredNorm() + 0.5 * d.dot(curvature_ * d) / rate_;
}

double GibbsDensity::log_unnormalized(const Vector& velocity, const Vector& position) const {
  return -hamiltonian(velocity, position) / temperature_;
}

Matrix GibbsDensity::position_covariance() const {
  return rate_ * temperature_ * curvature_.inverse();
}

Matrix GibbsDensity::velocity_covariance() const {
  return temperature_ * Matrix::Identity(center_.size(), center_.size());
}

StationarySamples GibbsDensity::sample(std::uint64_t count, std::uint64_t seed) const {
  const auto n = center_.size();
  const Matrix lx = Eigen::LLT<Matrix>(position_covariance()).matrixL();
  const double sv = std::sqrt(temperature_);
  Rng rng(seed, 0x61bb5);
  StationarySamples s;
  s.positions.resize(n, static_cast<Eigen::Index>(count));
  s.velocities.resize(n, static_cast<Eigen::Index>(count));
  Vector z(n);
  for (std::uint64_t k = 0; k < count; ++k) {
    for (auto& v : z) v = rng.normal();
    s.positions.col(static_cast<Eigen::Index>(k)) = center_ + lx * z;
    for (Eigen::Index i = 0; i < n; ++i) s.velocities(i, static_cast<Eigen::Index>(k)) = sv * rng.normal();
  }
  return s;
}

namespace {

Matrix covariance_about(const Matrix& samples, const Vector& mean) {
  const Matrix centered = samples.colwise() - mean;
  return centered * centered.transpose() / static_cast<double>(samples.cols());
}

}  // namespace

GibbsComparison compare_to_gibbs(const StationarySamples& samples, const GibbsDensity& density,
                                 const GibbsTolerances& tol) {
  const Index m = samples.size();
  const double needed = 18.0 / (tol.variance_rel * tol.variance_rel);
  if (static_cast<double>(m) < needed) {
    throw CapacityError("compare_to_gibbs: " + std::to_string(m) + " samples cannot resolve a relative variance "
                        "tolerance of " + std::to_string(tol.variance_rel) + " (need at least " +
                        std::to_string(static_cast<long long>(std::ceil(needed))) + ")");
  }
  const auto n = density.center().size();
  if (samples.positions.rows() != n || samples.velocities.rows() != n) {
    throw InvalidArgument("compare_to_gibbs: sample dimension does not match the density");
  }

  GibbsComparison r;
  r.samples = m;
  const Vector pos_mean = samples.positions.rowwise().mean();
  const Vector vel_mean = samples.velocities.rowwise().mean();
  r.empirical_position_cov = covariance_about(samples.positions, pos_mean);
  r.empirical_velocity_cov = covariance_about(samples.velocities, vel_mean);
  r.analytic_position_cov = density.position_covariance();
  r.analytic_velocity_cov = density.velocity_covariance();
  r.position_cov_error = frobenius_relative_error(r.empirical_position_cov, r.analytic_position_cov);
  r.velocity_cov_error = frobenius_relative_error(r.empirical_velocity_cov, r.analytic_velocity_cov);

  bool ok = r.position_cov_error <= tol.variance_rel && r.velocity_cov_error <= tol.variance_rel;

  auto check = [&](const std::string& name, const Matrix& data, Eigen::Index row, double analytic_mean,
                   double analytic_var, double empirical_mean, double empirical_var) {
    MarginalCheck c;
    c.name = name;
    c.empirical_mean = empirical_mean;
    c.analytic_mean = analytic_mean;
    c.empirical_variance = empirical_var;
    c.analytic_variance = analytic_var;
    c.variance_ratio = empirical_var / analytic_var;
    const double sigma = std::sqrt(analytic_var);
    std::vector<double> values(data.cols());
    for (Eigen::Index k = 0; k < data.cols(); ++k) values[static_cast<std::size_t>(k)] = data(row, k);
    c.ks_distance = stats::ks_distance_normal(std::move(values), analytic_mean, sigma);
    c.passed = std::abs(c.variance_ratio - 1.0) <= tol.variance_rel &&
               std::abs(empirical_mean - analytic_mean) <= tol.mean_sigmas * sigma && c.ks_distance <= tol.ks;
    ok = ok && c.passed;
    r.marginals.push_back(std::move(c));
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    check("X" + std::to_string(i), samples.positions, i, density.center()[i], r.analytic_position_cov(i, i),
          pos_mean[i], r.empirical_position_cov(i, i));
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    check("V" + std::to_string(i), samples.velocities, i, 0.0, r.analytic_velocity_cov(i, i), vel_mean[i],
          r.empirical_velocity_cov(i, i));
  }

  // Position and velocity decouple in the stationary state.
  const Matrix xc = samples.positions.colwise() - pos_mean;
  const Matrix vc = samples.velocities.colwise() - vel_mean;
  const Matrix cross = xc * vc.transpose() / static_cast<double>(m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double denom = std::sqrt(r.empirical_position_cov(i, i) * r.empirical_velocity_cov(j, j));
      if (denom > 0.0) r.max_cross_correlation = std::max(r.max_cross_correlation, std::abs(cross(i, j)) / denom);
    }
  }
  ok = ok && r.max_cross_correlation <= tol.correlation;
  r.passed = ok;
  return r;
}

}  // namespace randlr
