#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "randlr/objectives.hpp"
#include "randlr/rng.hpp"

namespace randlr {

/// Continuous-time approximation of momentum SGD:
///   dV = [-gamma V - grad f(X) / l] dt + sqrt(D / C) dW,   dX = V dt,
/// with gamma = (1 - mu) / l.
struct SdeParams {
  double rate = 0.0;      // l
  double momentum = 0.0;  // mu
  double diffusion = 0.0; // D
  Index batch_size = 1;   // C
  double dt = 0.0;
  bool correction = false;  // drift from f + (l/4) |grad f|^2

  double friction() const { return (1.0 - momentum) / rate; }
  double noise_amplitude() const;  // sqrt(D / C)
  /// l D / (2 C (1 - mu)).
  double temperature() const;
  /// Throws InvalidArgument unless l > 0, 0 <= mu < 1, D >= 0, C >= 1,
  /// dt > 0.
  void validate() const;
  /// validate() plus gamma * dt < 2 (explicit integrator stability).
  void validate_explicit() const;

  /// Defaults: dt = l / 10, no correction.
  static SdeParams from(double rate, double momentum, double diffusion, Index batch_size);
};

struct SdeState {
  Vector position;
  Vector velocity;
  double time = 0.0;
  std::uint64_t steps = 0;
};

/// Euler-Maruyama step with the velocity updated first and the position
/// advanced with the new velocity. Throws DivergedError when the state stops
/// being finite or |V| exceeds 1e12.
void em_step(SdeState& state, const Objective& obj, const SdeParams& params, Rng& rng);

/// exp of a real 2x2 matrix in closed form (Cayley-Hamilton), stable for
/// strongly damped arguments.
Eigen::Matrix2d expm2(const Eigen::Matrix2d& m);

/// Exact transition kernel of the linear SDE for a quadratic potential
/// f(X) = 1/2 (X - c)^T A (X - c): the curvature is diagonalized once and each
/// eigenmode evolves as an independent two-dimensional Ornstein-Uhlenbeck
/// process. There is no discretization bias for any dt, including dt = inf.
class OuKernel {
 public:
  /// Throws InvalidArgument if A is not symmetric positive definite.
  OuKernel(const Matrix& curvature, const Vector& center, const SdeParams& params);

  void step(SdeState& state, Rng& rng) const;
  /// Noise-free propagation of the mean over `time`.
  void propagate_mean(Vector& position, Vector& velocity, double time) const;

  const Vector& eigenvalues() const { return eigenvalues_; }

 private:
  struct Mode {
    Eigen::Matrix2d transition;
    Eigen::Matrix2d noise_factor;  // lower Cholesky factor of the step covariance
  };

  Eigen::Matrix2d drift(double eigenvalue) const;

  SdeParams params_;
  Vector center_;
  Matrix basis_;  // eigenvectors of A, one per column
  Vector eigenvalues_;
  std::vector<Mode> modes_;
};

void exact_ou_step(SdeState& state, const Matrix& curvature, const Vector& center, const SdeParams& params,
                   Rng& rng);

enum class Integrator { ExactOu, EulerMaruyama };

/// Post-burn-in samples; one column per sample.
struct StationarySamples {
  Matrix positions;
  Matrix velocities;

  Index size() const { return static_cast<Index>(positions.cols()); }
  static StationarySamples from_states(std::span<const SdeState> states);
};

struct SamplingPlan {
  std::uint64_t samples = 1'000'000;
  double interval = 0.0;  // time between recorded samples; 0 -> params.dt (rounded to whole dt steps for Euler-Maruyama)
  double burn_in = -1.0;  // < 0 -> ten friction times, 10 l / (1 - mu)
  Integrator integrator = Integrator::ExactOu;
  std::uint64_t seed = 0;
};

/// Runs one chain on the quadratic ensemble's full loss from the minimizer at
/// rest, discards the burn-in and records `plan.samples` states.
StationarySamples sample_stationary(const QuadraticEnsemble& obj, const SdeParams& params, const SamplingPlan& plan);

struct WeakErrorPoint {
  double rate = 0.0;
  std::uint64_t steps = 0;
  double error = 0.0;
};

struct WeakErrorResult {
  std::vector<WeakErrorPoint> points;
  double slope = 0.0;  // least-squares slope of log(error) against log(l)
};

/// For each l: |E[x_K] - E[X(K l)]| with K = round(horizon / l), the discrete
/// mean from the exact linear recursion of momentum SGD and the continuous one
/// from the exact mode propagator. No sampling is involved.
WeakErrorResult weak_error_probe(const QuadraticEnsemble& obj, double momentum, const Vector& x0,
                                 std::span<const double> rates, double horizon);

/// max_k |x_k - X(k l)| for the noiseless discrete and continuous dynamics.
double max_trajectory_gap(const QuadraticEnsemble& obj, double momentum, const Vector& x0, double rate,
                          double horizon);

double log_log_slope(std::span<const double> xs, std::span<const double> ys);

}  // namespace randlr
