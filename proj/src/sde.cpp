#include "randlr/sde.hpp"

#include <cmath>
#include <limits>

#include "randlr/error.hpp"

namespace randlr {

namespace {

constexpr double kVelocityLimit = 1e12;

}  // namespace

double SdeParams::noise_amplitude() const { return std::sqrt(diffusion / static_cast<double>(batch_size)); }

double SdeParams::temperature() const {
  return rate * diffusion / (2.0 * static_cast<double>(batch_size) * (1.0 - momentum));
}

void SdeParams::validate() const {
  if (!(rate > 0.0)) throw InvalidArgument("SDE rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("SDE momentum must lie in [0, 1)");
  if (!(diffusion >= 0.0)) throw InvalidArgument("diffusion coefficient must be non-negative");
  if (batch_size == 0) throw InvalidArgument("batch size must be positive");
  if (!(dt > 0.0)) throw InvalidArgument("time step must be positive");
}

void SdeParams::validate_explicit() const {
  validate();
  if (!(friction() * dt < 2.0)) {
    throw InvalidArgument("explicit step unstable: gamma * dt = " + std::to_string(friction() * dt) + " >= 2");
  }
}

SdeParams SdeParams::from(double rate, double momentum, double diffusion, Index batch_size) {
  SdeParams p;
  p.rate = rate;
  p.momentum = momentum;
  p.diffusion = diffusion;
  p.batch_size = batch_size;
  p.dt = rate / 10.0;
  return p;
}

void em_step(SdeState& state, const Objective& obj, const SdeParams& params, Rng& rng) {
  params.validate_explicit();
  const double gamma = params.friction();
  Vector force = obj.full_gradient(state.position);
  if (params.correction) {
    // grad of (l/4) |grad f|^2 is (l/2) H grad f.
    force += (params.rate / 2.0) * obj.hessian_vector_product(state.position, force);
  }
  force /= params.rate;
  const double kick = params.noise_amplitude() * std::sqrt(params.dt);
  state.velocity += params.dt * (-gamma * state.velocity - force);
  if (kick != 0.0) {
    for (auto& v : state.velocity) v += kick * rng.normal();
  }
  state.position += params.dt * state.velocity;
  state.time += params.dt;
  ++state.steps;
  const double vnorm = state.velocity.norm();
  if (!std::isfinite(vnorm) || !state.position.allFinite() || vnorm > kVelocityLimit) {
    throw DivergedError(state.steps, "SDE state left the finite range");
  }
}

Eigen::Matrix2d expm2(const Eigen::Matrix2d& m) {
  const double half_trace = 0.5 * m.trace();
  const double q = half_trace * half_trace - m.determinant();
  const Eigen::Matrix2d shifted = m - half_trace * Eigen::Matrix2d::Identity();
  double c;  // e^{tr/2} * cosh(s)   (or cos)
  double s;  // e^{tr/2} * sinh(s)/s (or sin(s)/s)
  if (std::abs(q) < 1e-4) {
    // Series of cosh(sqrt q) and sinh(sqrt q)/sqrt q; truncation error ~ q^3.
    const double e = std::exp(half_trace);
    c = e * (1.0 + q / 2.0 + q * q / 24.0);
    s = e * (1.0 + q / 6.0 + q * q / 120.0);
  } else if (q > 0.0) {
    const double r = std::sqrt(q);
    const double ep = std::exp(half_trace + r);
    const double em = std::exp(half_trace - r);
    c = 0.5 * (ep + em);
    s = 0.5 * (ep - em) / r;
  } else {
    const double r = std::sqrt(-q);
    const double e = std::exp(half_trace);
    c = e * std::cos(r);
    s = e * std::sin(r) / r;
  }
  return c * Eigen::Matrix2d::Identity() + s * shifted;
}

OuKernel::OuKernel(const Matrix& curvature, const Vector& center, const SdeParams& params)
    : params_(params), center_(center) {
  params_.validate();
  if (curvature.rows() != curvature.cols() || curvature.rows() != center.size()) {
    throw InvalidArgument("curvature and center dimensions disagree");
  }
  if (!curvature.isApprox(curvature.transpose(), 1e-12)) throw InvalidArgument("curvature must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(curvature);
  if (eig.info() != Eigen::Success) throw InvalidArgument("eigendecomposition of the curvature failed");
  eigenvalues_ = eig.eigenvalues();
  if (eigenvalues_.minCoeff() <= 0.0) throw InvalidArgument("curvature must be positive definite");
  basis_ = eig.eigenvectors();

  const double temperature = params_.temperature();
  const double dt = params_.dt;
  for (Eigen::Index k = 0; k < eigenvalues_.size(); ++k) {
    Mode mode;
    if (std::isinf(dt)) {
      mode.transition.setZero();
    } else {
      mode.transition = expm2(drift(eigenvalues_[k]) * dt);
    }
    // Stationary covariance diag(l T / lambda, T); step covariance
    // S - E S E^T.
    Eigen::Matrix2d stationary = Eigen::Matrix2d::Zero();
    stationary(0, 0) = params_.rate * temperature / eigenvalues_[k];
    stationary(1, 1) = temperature;
    Eigen::Matrix2d cov = stationary - mode.transition * stationary * mode.transition.transpose();
    cov = 0.5 * (cov + cov.transpose()).eval();
    mode.noise_factor.setZero();
    if (cov(0, 0) > 0.0) {
      const double l00 = std::sqrt(cov(0, 0));
      const double l10 = cov(1, 0) / l00;
      mode.noise_factor(0, 0) = l00;
      mode.noise_factor(1, 0) = l10;
      mode.noise_factor(1, 1) = std::sqrt(std::max(0.0, cov(1, 1) - l10 * l10));
    } else {
      mode.noise_factor(1, 1) = std::sqrt(std::max(0.0, cov(1, 1)));
    }
    modes_.push_back(mode);
  }
}

Eigen::Matrix2d OuKernel::drift(double eigenvalue) const {
  Eigen::Matrix2d b;
  b << 0.0, 1.0, -eigenvalue / params_.rate, -params_.friction();
  return b;
}

void OuKernel::step(SdeState& state, Rng& rng) const {
  const Vector y = basis_.transpose() * (state.position - center_);
  const Vector u = basis_.transpose() * state.velocity;
  Vector y_next(y.size());
  Vector u_next(u.size());
  for (Eigen::Index k = 0; k < y.size(); ++k) {
    const Mode& mode = modes_[static_cast<std::size_t>(k)];
    Eigen::Vector2d z = mode.transition * Eigen::Vector2d(y[k], u[k]);
    const Eigen::Vector2d eta(rng.normal(), rng.normal());
    z += mode.noise_factor * eta;
    y_next[k] = z[0];
    u_next[k] = z[1];
  }
  state.position = center_ + basis_ * y_next;
  state.velocity = basis_ * u_next;
  state.time += params_.dt;
  ++state.steps;
}

void OuKernel::propagate_mean(Vector& position, Vector& velocity, double time) const {
  const Vector y = basis_.transpose() * (position - center_);
  const Vector u = basis_.transpose() * velocity;
  Vector y_next(y.size());
  Vector u_next(u.size());
  for (Eigen::Index k = 0; k < y.size(); ++k) {
    const Eigen::Vector2d z = expm2(drift(eigenvalues_[k]) * time) * Eigen::Vector2d(y[k], u[k]);
    y_next[k] = z[0];
    u_next[k] = z[1];
  }
  position = center_ + basis_ * y_next;
  velocity = basis_ * u_next;
}

void exact_ou_step(SdeState& state, const Matrix& curvature, const Vector& center, const SdeParams& params,
                   Rng& rng) {
  OuKernel(curvature, center, params).step(state, rng);
}

StationarySamples StationarySamples::from_states(std::span<const SdeState> states) {
  StationarySamples s;
  if (states.empty()) return s;
  const auto n = states.front().position.size();
  s.positions.resize(n, static_cast<Eigen::Index>(states.size()));
  s.velocities.resize(n, static_cast<Eigen::Index>(states.size()));
  for (std::size_t k = 0; k < states.size(); ++k) {
    s.positions.col(static_cast<Eigen::Index>(k)) = states[k].position;
    s.velocities.col(static_cast<Eigen::Index>(k)) = states[k].velocity;
  }
  return s;
}

StationarySamples sample_stationary(const QuadraticEnsemble& obj, const SdeParams& params, const SamplingPlan& plan) {
  params.validate();
  if (plan.samples == 0) throw InvalidArgument("sample_stationary needs at least one sample");
  const double interval = plan.interval > 0.0 ? plan.interval : params.dt;
  const double burn_in = plan.burn_in >= 0.0 ? plan.burn_in : 10.0 * params.rate / (1.0 - params.momentum);

  SdeParams step_params = params;
  step_params.dt = interval;
  Rng rng(plan.seed, 0x5de);
  SdeState state{obj.centroid(), Vector::Zero(obj.centroid().size()), 0.0, 0};

  StationarySamples out;
  const auto n = static_cast<Eigen::Index>(obj.dim());
  out.positions.resize(n, static_cast<Eigen::Index>(plan.samples));
  out.velocities.resize(n, static_cast<Eigen::Index>(plan.samples));

  const auto burn_steps = static_cast<std::uint64_t>(std::ceil(burn_in / interval));
  if (plan.integrator == Integrator::ExactOu) {
    const OuKernel kernel(obj.curvature(), obj.centroid(), step_params);
    for (std::uint64_t k = 0; k < burn_steps; ++k) kernel.step(state, rng);
    for (std::uint64_t k = 0; k < plan.samples; ++k) {
      kernel.step(state, rng);
      out.positions.col(static_cast<Eigen::Index>(k)) = state.position;
      out.velocities.col(static_cast<Eigen::Index>(k)) = state.velocity;
    }
  } else {
    // The explicit integrator keeps its own dt and records every stride-th state.
    params.validate_explicit();
    const auto stride = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(interval / params.dt)));
    for (std::uint64_t k = 0; k < burn_steps * stride; ++k) em_step(state, obj, params, rng);
    for (std::uint64_t k = 0; k < plan.samples; ++k) {
      for (std::uint64_t s = 0; s < stride; ++s) em_step(state, obj, params, rng);
      out.positions.col(static_cast<Eigen::Index>(k)) = state.position;
      out.velocities.col(static_cast<Eigen::Index>(k)) = state.velocity;
    }
  }
  return out;
}

namespace {

// Mean of momentum SGD on a quadratic: E[alpha g_Gamma] = grad f, so the mean
// obeys the noiseless recursion exactly.
void discrete_mean_step(const QuadraticEnsemble& obj, double momentum, double rate, Vector& x, Vector& v) {
  v = momentum * v - obj.full_gradient(x);
  x += rate * v;
}

OuKernel noiseless_kernel(const QuadraticEnsemble& obj, double momentum, double rate) {
  SdeParams p = SdeParams::from(rate, momentum, 0.0, 1);
  return OuKernel(obj.curvature(), obj.centroid(), p);
}

}  // namespace

WeakErrorResult weak_error_probe(const QuadraticEnsemble& obj, double momentum, const Vector& x0,
                                 std::span<const double> rates, double horizon) {
  if (rates.size() < 2) throw InvalidArgument("weak_error_probe needs at least two rates");
  if (!(horizon > 0.0)) throw InvalidArgument("horizon must be positive");
  WeakErrorResult result;
  std::vector<double> ls, errs;
  for (double l : rates) {
    if (!(l > 0.0)) throw InvalidArgument("rates must be positive");
    const auto steps = static_cast<std::uint64_t>(std::llround(horizon / l));
    Vector x = x0;
    Vector v = Vector::Zero(x0.size());
    for (std::uint64_t k = 0; k < steps; ++k) discrete_mean_step(obj, momentum, l, x, v);

    Vector X = x0;
    Vector V = Vector::Zero(x0.size());
    noiseless_kernel(obj, momentum, l).propagate_mean(X, V, static_cast<double>(steps) * l);
    const double err = (x - X).norm();
    result.points.push_back({l, steps, err});
    ls.push_back(l);
    errs.push_back(err);
  }
  result.slope = log_log_slope(ls, errs);
  return result;
}

double max_trajectory_gap(const QuadraticEnsemble& obj, double momentum, const Vector& x0, double rate,
                          double horizon) {
  const auto steps = static_cast<std::uint64_t>(std::llround(horizon / rate));
  const OuKernel kernel = noiseless_kernel(obj, momentum, rate);
  Vector x = x0, v = Vector::Zero(x0.size());
  Vector X = x0, V = Vector::Zero(x0.size());
  double gap = 0.0;
  for (std::uint64_t k = 0; k < steps; ++k) {
    discrete_mean_step(obj, momentum, rate, x, v);
    kernel.propagate_mean(X, V, rate);
    gap = std::max(gap, (x - X).norm());
  }
  return gap;
}

double log_log_slope(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) throw InvalidArgument("log_log_slope needs matching pairs");
  double mx = 0, my = 0;
  const double n = static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) throw InvalidArgument("log_log_slope needs positive values");
    mx += std::log(xs[i]);
    my += std::log(ys[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = std::log(xs[i]) - mx;
    sxy += dx * (std::log(ys[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace randlr
