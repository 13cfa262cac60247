#include "randlr/diffusion.hpp"

#include <cmath>
#include <limits>

#include "randlr/error.hpp"

namespace randlr {

std::string to_string(MomentMode mode) { return mode == MomentMode::Exact ? "exact" : "paper_compat"; }

std::string to_string(BatchScheme scheme) {
  switch (scheme) {
    case BatchScheme::FixedPartition:
      return "fixed_partition";
    case BatchScheme::SubsetEnumeration:
      return "subset_enumeration";
    case BatchScheme::WithReplacement:
      return "with_replacement";
  }
  return "unknown";
}

MomentMode moment_mode_from_string(const std::string& name) {
  if (name == "exact") return MomentMode::Exact;
  if (name == "paper_compat") return MomentMode::PaperCompat;
  throw ConfigError("unknown moment mode '" + name + "'");
}

BatchScheme batch_scheme_from_string(const std::string& name) {
  if (name == "fixed_partition") return BatchScheme::FixedPartition;
  if (name == "subset_enumeration") return BatchScheme::SubsetEnumeration;
  if (name == "with_replacement") return BatchScheme::WithReplacement;
  throw ConfigError("unknown batch scheme '" + name + "'");
}

double alpha_second_moment(double half_width, MomentMode mode) {
  if (!(half_width >= 0.0 && half_width <= 1.0)) throw InvalidArgument("half-width must lie in [0, 1]");
  return mode == MomentMode::Exact ? 1.0 + half_width * half_width / 3.0 : 1.0 + half_width / 3.0;
}

namespace {

void check_batch(Index n, Index c, BatchScheme scheme) {
  if (c == 0) throw InvalidArgument("batch size must be positive");
  if (scheme != BatchScheme::WithReplacement && c > n) {
    throw InvalidArgument("batch size exceeds the sample count");
  }
  if (scheme == BatchScheme::FixedPartition && n % c != 0) {
    throw InvalidArgument("fixed partition requires the batch size to divide the sample count");
  }
}

std::vector<Vector> per_sample_gradients(const Objective& obj, const Vector& x) {
  std::vector<Vector> g(obj.sample_count());
  for (Index i = 0; i < g.size(); ++i) obj.sample_gradient(x, i, g[i]);
  return g;
}

double binomial(Index n, Index k) {
  double r = 1.0;
  for (Index i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

// Accumulates sigma, dhat and d_offdiag over an explicit list of batches, each
// weighted equally.
class BatchAccumulator {
 public:
  BatchAccumulator(const std::vector<Vector>& grads, const Vector& mean_grad, double m2, Index c)
      : grads_(grads), mean_outer_(mean_grad * mean_grad.transpose()), m2_(m2), c_(c) {
    const auto n = mean_grad.size();
    sigma_.setZero(n, n);
    diag_.setZero(n, n);
    off_.setZero(n, n);
    batch_sum_.resize(n);
  }

  void add(const std::vector<Index>& batch) {
    const double cd = static_cast<double>(c_);
    // sigma: m2 g_B g_B^T - gbar gbar^T with g_B the batch mean.
    batch_sum_.setZero();
    for (Index j : batch) batch_sum_ += grads_[j];
    sigma_.noalias() += (m2_ / (cd * cd)) * batch_sum_ * batch_sum_.transpose();
    sigma_ -= mean_outer_;
    // dhat: (1/C) sum_j (m2 g_j g_j^T - gbar gbar^T).
    for (Index j : batch) {
      diag_.noalias() += (m2_ / cd) * grads_[j] * grads_[j].transpose();
      diag_ -= mean_outer_ / cd;
    }
    // d_offdiag: (1/C^2) sum_{j != k} (m2 g_j g_k^T - gbar gbar^T), by positions.
    for (Index a = 0; a < batch.size(); ++a) {
      for (Index b = 0; b < batch.size(); ++b) {
        if (a == b) continue;
        off_.noalias() += (m2_ / (cd * cd)) * grads_[batch[a]] * grads_[batch[b]].transpose();
        off_ -= mean_outer_ / (cd * cd);
      }
    }
    ++count_;
  }

  void finish(DiffusionReport& r) const {
    const double inv = 1.0 / static_cast<double>(count_);
    r.sigma = sigma_ * inv;
    r.dhat = diag_ * inv;
    r.d_offdiag = off_ * inv;
    r.batches = count_;
  }

 private:
  const std::vector<Vector>& grads_;
  Matrix mean_outer_;
  double m2_;
  Index c_;
  Matrix sigma_, diag_, off_;
  Vector batch_sum_;
  std::uint64_t count_ = 0;
};

}  // namespace

std::vector<Index> draw_batch(Index sample_count, Index batch_size, BatchScheme scheme, Rng& rng) {
  check_batch(sample_count, batch_size, scheme);
  std::vector<Index> batch(batch_size);
  switch (scheme) {
    case BatchScheme::FixedPartition: {
      const Index block = rng.below(sample_count / batch_size);
      for (Index k = 0; k < batch_size; ++k) batch[k] = block * batch_size + k;
      break;
    }
    case BatchScheme::SubsetEnumeration: {
      // Partial Fisher-Yates: the first C slots of a random permutation.
      std::vector<Index> pool(sample_count);
      for (Index i = 0; i < sample_count; ++i) pool[i] = i;
      for (Index k = 0; k < batch_size; ++k) {
        const Index j = k + rng.below(sample_count - k);
        std::swap(pool[k], pool[j]);
        batch[k] = pool[k];
      }
      break;
    }
    case BatchScheme::WithReplacement:
      for (Index k = 0; k < batch_size; ++k) batch[k] = rng.below(sample_count);
      break;
  }
  return batch;
}

Vector noise_sample(const Objective& obj, const Vector& x, double half_width, Index batch_size,
                    BatchScheme scheme, Rng& rng) {
  const auto batch = draw_batch(obj.sample_count(), batch_size, scheme, rng);
  const double alpha = half_width == 0.0 ? 1.0 : rng.uniform(1.0 - half_width, 1.0 + half_width);
  return obj.full_gradient(x) - alpha * minibatch_grad(obj, x, batch);
}

DiffusionReport analytic_covariance(const Objective& obj, const Vector& x, double half_width, Index batch_size,
                                    BatchScheme scheme, MomentMode mode, const CovarianceLimits& limits) {
  const Index n = obj.dim();
  const Index count = obj.sample_count();
  check_batch(count, batch_size, scheme);
  if (n > limits.max_dim) {
    throw CapacityError("dense covariance of dimension " + std::to_string(n) + " exceeds the limit of " +
                        std::to_string(limits.max_dim) + "; use diagonal_summary");
  }
  const double m2 = alpha_second_moment(half_width, mode);
  const auto grads = per_sample_gradients(obj, x);
  Vector mean_grad = Vector::Zero(static_cast<Eigen::Index>(n));
  for (const auto& g : grads) mean_grad += g;
  mean_grad /= static_cast<double>(count);

  DiffusionReport r;
  r.moment_mode = mode;
  r.scheme = scheme;
  r.half_width = half_width;
  r.batch_size = batch_size;

  switch (scheme) {
    case BatchScheme::FixedPartition: {
      BatchAccumulator acc(grads, mean_grad, m2, batch_size);
      std::vector<Index> batch(batch_size);
      for (Index block = 0; block < count / batch_size; ++block) {
        for (Index k = 0; k < batch_size; ++k) batch[k] = block * batch_size + k;
        acc.add(batch);
      }
      acc.finish(r);
      break;
    }
    case BatchScheme::SubsetEnumeration: {
      const double total = binomial(count, batch_size);
      if (total > static_cast<double>(limits.max_batches)) {
        throw CapacityError("enumerating C(" + std::to_string(count) + ", " + std::to_string(batch_size) +
                            ") batches exceeds the limit of " + std::to_string(limits.max_batches));
      }
      BatchAccumulator acc(grads, mean_grad, m2, batch_size);
      std::vector<Index> batch(batch_size);
      for (Index k = 0; k < batch_size; ++k) batch[k] = k;
      while (true) {
        acc.add(batch);
        // Next combination in lexicographic order.
        Index k = batch_size;
        while (k > 0 && batch[k - 1] == count - batch_size + (k - 1)) --k;
        if (k == 0) break;
        ++batch[k - 1];
        for (Index j = k; j < batch_size; ++j) batch[j] = batch[j - 1] + 1;
      }
      acc.finish(r);
      break;
    }
    case BatchScheme::WithReplacement: {
      // Positions are i.i.d., so distinct positions contribute E[g_j g_k^T] = gbar gbar^T.
      const double cd = static_cast<double>(batch_size);
      Matrix second = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
      for (const auto& g : grads) second.noalias() += g * g.transpose();
      second /= static_cast<double>(count);
      const Matrix outer = mean_grad * mean_grad.transpose();
      r.sigma = m2 * (second / cd + ((cd - 1.0) / cd) * outer) - outer;
      r.dhat = m2 * second - outer;
      r.d_offdiag = ((cd - 1.0) / cd) * (m2 * outer - outer);
      break;
    }
  }
  r.d_scalar = isotropic_scalar(r);
  return r;
}

double isotropic_scalar(const DiffusionReport& report) {
  if (report.dhat.size() == 0) throw InvalidArgument("isotropic_scalar: diffusion matrix not computed");
  return report.dhat.trace() / static_cast<double>(report.dhat.rows());
}

double off_isotropy(const DiffusionReport& report) {
  const double d = isotropic_scalar(report);
  const Matrix iso = d * Matrix::Identity(report.dhat.rows(), report.dhat.cols());
  const double norm = report.dhat.norm();
  return norm == 0.0 ? 0.0 : (report.dhat - iso).norm() / norm;
}

Matrix empirical_covariance(const Objective& obj, const Vector& x, double half_width, Index batch_size,
                            BatchScheme scheme, std::uint64_t samples, std::uint64_t seed) {
  if (samples == 0) throw InvalidArgument("empirical_covariance needs at least one sample");
  const auto n = static_cast<Eigen::Index>(obj.dim());
  check_batch(obj.sample_count(), batch_size, scheme);
  // Per-sample gradients are cached; each draw only averages them.
  const auto grads = per_sample_gradients(obj, x);
  Vector mean_grad = Vector::Zero(n);
  for (const auto& g : grads) mean_grad += g;
  mean_grad /= static_cast<double>(grads.size());

  Rng rng(seed, 0xd1ff);
  Matrix acc = Matrix::Zero(n, n);
  Vector batch_mean(n);
  for (std::uint64_t s = 0; s < samples; ++s) {
    const auto batch = draw_batch(obj.sample_count(), batch_size, scheme, rng);
    const double alpha = half_width == 0.0 ? 1.0 : rng.uniform(1.0 - half_width, 1.0 + half_width);
    batch_mean.setZero();
    for (Index j : batch) batch_mean += grads[j];
    batch_mean /= static_cast<double>(batch_size);
    const Vector xi = mean_grad - alpha * batch_mean;
    acc.noalias() += xi * xi.transpose();
  }
  return acc / static_cast<double>(samples);
}

DiffusionSummary diagonal_summary(const Objective& obj, const Vector& x, double half_width, MomentMode mode) {
  const double m2 = alpha_second_moment(half_width, mode);
  const auto n = static_cast<Eigen::Index>(obj.dim());
  Vector sq = Vector::Zero(n);
  Vector mean_grad = Vector::Zero(n);
  Vector g;
  for (Index i = 0; i < obj.sample_count(); ++i) {
    obj.sample_gradient(x, i, g);
    sq += g.cwiseAbs2();
    mean_grad += g;
  }
  const double inv = 1.0 / static_cast<double>(obj.sample_count());
  sq *= inv;
  mean_grad *= inv;
  DiffusionSummary s;
  s.dhat_diagonal = m2 * sq - mean_grad.cwiseAbs2();
  s.d_scalar = s.dhat_diagonal.sum() / static_cast<double>(n);
  s.gradient_norm = mean_grad.norm();
  return s;
}

double frobenius_relative_error(const Matrix& estimate, const Matrix& reference) {
  const double ref = reference.norm();
  if (ref == 0.0) return estimate.norm() == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return (estimate - reference).norm() / ref;
}

}  // namespace randlr
