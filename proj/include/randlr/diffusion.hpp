#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "randlr/objectives.hpp"
#include "randlr/rng.hpp"

namespace randlr {

/// Second moment of alpha used in the diagonal piece.
///   Exact:       <alpha^2> = 1 + delta^2 / 3
///   PaperCompat: <alpha^2> = 1 + delta / 3
enum class MomentMode { Exact, PaperCompat };

/// How a mini-batch of size C is drawn.
///   FixedPartition:    uniform over the N / C contiguous blocks of the index range
///   SubsetEnumeration: uniform over all C-subsets (sampling without replacement)
///   WithReplacement:   C independent uniform indices
enum class BatchScheme { FixedPartition, SubsetEnumeration, WithReplacement };

std::string to_string(MomentMode mode);
std::string to_string(BatchScheme scheme);
MomentMode moment_mode_from_string(const std::string& name);
BatchScheme batch_scheme_from_string(const std::string& name);

double alpha_second_moment(double half_width, MomentMode mode);

/// Draws one batch of size C under `scheme` (indices may repeat only for
/// WithReplacement). FixedPartition requires C to divide N.
std::vector<Index> draw_batch(Index sample_count, Index batch_size, BatchScheme scheme, Rng& rng);

/// xi = grad f(x) - alpha * grad f_Gamma(x) with alpha ~ U[1 - delta, 1 + delta].
Vector noise_sample(const Objective& obj, const Vector& x, double half_width, Index batch_size,
                    BatchScheme scheme, Rng& rng);

/// Covariance of xi split into its diagonal-in-sample-index and off-diagonal
/// pieces: sigma = dhat / C + d_offdiag.
struct DiffusionReport {
  Matrix sigma;
  Matrix dhat;
  Matrix d_offdiag;
  double d_scalar = 0.0;  // trace(dhat) / n
  MomentMode moment_mode = MomentMode::Exact;
  BatchScheme scheme = BatchScheme::SubsetEnumeration;
  double half_width = 0.0;
  Index batch_size = 1;
  std::uint64_t batches = 0;  // batches summed over (0 for closed forms)
};

struct CovarianceLimits {
  std::uint64_t max_batches = 5'000'000;  // subset enumeration
  Index max_dim = 2048;                    // dense n x n storage
};

/// Analytic covariance from the per-sample gradients at x. Sigma, dhat and
/// d_offdiag are each accumulated from their own sums, so the split identity
/// is a genuine check. Throws CapacityError when the enumeration or the dense
/// storage would exceed `limits`.
DiffusionReport analytic_covariance(const Objective& obj, const Vector& x, double half_width, Index batch_size,
                                    BatchScheme scheme, MomentMode mode, const CovarianceLimits& limits = {});

/// D = trace(dhat) / n: the multiple of the identity closest to dhat in
/// Frobenius norm.
double isotropic_scalar(const DiffusionReport& report);

/// ||dhat - D I||_F / ||dhat||_F.
double off_isotropy(const DiffusionReport& report);

/// Monte Carlo covariance of xi from `samples` draws, centered at the known
/// mean zero. Deterministic given the seed.
Matrix empirical_covariance(const Objective& obj, const Vector& x, double half_width, Index batch_size,
                            BatchScheme scheme, std::uint64_t samples, std::uint64_t seed);

/// Diagonal-only summary for models too large for dense covariances.
struct DiffusionSummary {
  Vector dhat_diagonal;
  double d_scalar = 0.0;
  double gradient_norm = 0.0;  // |grad f(x)|
};

DiffusionSummary diagonal_summary(const Objective& obj, const Vector& x, double half_width, MomentMode mode);

double frobenius_relative_error(const Matrix& estimate, const Matrix& reference);

}  // namespace randlr
