#pragma once

#include <string>
#include <vector>

#include "randlr/objectives.hpp"
#include "randlr/sde.hpp"

namespace randlr {

/// Effective temperature T = l D / (2 C (1 - mu)) and Gibbs coefficient
/// beta = 1 / T, with the inputs echoed.
struct ThermoParams {
  double temperature = 0.0;
  double beta = 0.0;  // +inf when D = 0
  double rate = 0.0;
  double diffusion = 0.0;
  Index batch_size = 1;
  double momentum = 0.0;
};

/// Throws InvalidArgument unless l > 0, D >= 0, C >= 1 and 0 <= mu < 1.
ThermoParams effective_temperature(double rate, double diffusion, Index batch_size, double momentum);

/// The (l, C, mu) part of a training configuration that fixes T up to D.
struct TemperatureKey {
  double rate = 0.0;
  Index batch_size = 1;
  double momentum = 0.0;

  /// l / (C (1 - mu)).
  double ratio() const;
};

/// True iff l_a / (C_a (1 - mu_a)) and l_b / (C_b (1 - mu_b)) agree within
/// rel_tol. Compared by cross-multiplication so that rel_tol = 0 is exact
/// equality on exactly representable inputs.
bool same_temperature(const TemperatureKey& a, const TemperatureKey& b, double rel_tol = 1e-9);

/// P(V, X) proportional to exp(-H / T) with H = 1/2 V.V + f(X) / l for the
/// quadratic f(X) = 1/2 (X - c)^T A (X - c).
class GibbsDensity {
 public:
  GibbsDensity(Matrix curvature, Vector center, double rate, double temperature);

  double hamiltonian(const Vector& velocity, const Vector& position) const;
  /// -H / T.
  double log_unnormalized(const Vector& velocity, const Vector& position) const;

  Matrix position_covariance() const;  // l T A^{-1}
  Matrix velocity_covariance() const;  // T I
  const Vector& center() const { return center_; }
  double temperature() const { return temperature_; }
  double rate() const { return rate_; }

  /// Independent draws from the density (for self-tests).
  StationarySamples sample(std::uint64_t count, std::uint64_t seed) const;

 private:
  Matrix curvature_;
  Vector center_;
  double rate_;
  double temperature_;
};

struct GibbsTolerances {
  double variance_rel = 0.05;  // |empirical / analytic - 1| per marginal, and Frobenius
  double mean_sigmas = 0.05;   // |mean error| in units of the analytic std
  double correlation = 0.05;   // |corr(X_i, V_j)|, analytically zero
  double ks = 0.02;            // per-marginal KS distance
};

struct MarginalCheck {
  std::string name;  // "X0", "V1", ...
  double empirical_mean = 0.0;
  double analytic_mean = 0.0;
  double empirical_variance = 0.0;
  double analytic_variance = 0.0;
  double variance_ratio = 0.0;
  double ks_distance = 0.0;
  bool passed = false;
};

struct GibbsComparison {
  Index samples = 0;
  std::vector<MarginalCheck> marginals;
  Matrix empirical_position_cov, analytic_position_cov;
  Matrix empirical_velocity_cov, analytic_velocity_cov;
  double position_cov_error = 0.0;  // Frobenius relative
  double velocity_cov_error = 0.0;
  double max_cross_correlation = 0.0;
  bool passed = false;
};

/// Empirical moments and marginal distributions of the samples against the
/// analytic Gaussian marginals of `density`. Throws CapacityError when there
/// are too few samples to resolve `tol.variance_rel` (fewer than
/// 18 / variance_rel^2, i.e. a three-sigma variance estimate).
GibbsComparison compare_to_gibbs(const StationarySamples& samples, const GibbsDensity& density,
                                 const GibbsTolerances& tol = {});

}  // namespace randlr
