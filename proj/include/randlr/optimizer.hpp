#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "randlr/objectives.hpp"
#include "randlr/protocols.hpp"

namespace randlr {

/// Iterate norm beyond which a run is declared diverged.
inline constexpr double kDivergenceNorm = 1e12;

struct HyperParams {
  double momentum = 0.0;
  Index batch_size = 1;
  bool nesterov = false;
  double weight_decay = 0.0;
  ProtocolSpec protocol;

  /// Throws InvalidArgument unless 0 <= momentum < 1, batch_size >= 1,
  /// weight_decay >= 0 and the protocol is valid.
  void validate() const;

  /// gamma = (1 - mu) / l.
  double friction() const { return (1.0 - momentum) / protocol.base_rate; }
};

struct OptimizerState {
  Vector x;
  Vector v;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;

  static OptimizerState at(Vector x0) {
    OptimizerState s;
    s.v = Vector::Zero(x0.size());
    s.x = std::move(x0);
    return s;
  }
};

/// Point at which the mini-batch gradient is taken: x, or x + l * mu * v with
/// Nesterov acceleration.
Vector gradient_point(const OptimizerState& state, double rate, const HyperParams& hyper);

/// One update
///   g = grad + w * x_eval
///   v <- mu * v - alpha * g
///   x <- x + rate * v
/// where x_eval is gradient_point(). Throws DivergedError carrying the step
/// index when the result is non-finite or |x| exceeds kDivergenceNorm.
void sgd_step(OptimizerState& state, const Vector& grad, const Vector& x_eval, double alpha, double rate,
              const HyperParams& hyper);

/// Convenience overload without Nesterov/weight decay bookkeeping at the call
/// site: x_eval is the current iterate.
void sgd_step(OptimizerState& state, const Vector& grad, double alpha, double rate, const HyperParams& hyper);

struct AlphaSummary {
  std::uint64_t count = 0;
  double mean = 0.0;
  double variance = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct EpochRecord {
  std::uint64_t epoch = 0;  // completed epochs after this row
  double rate = 0.0;        // l_tau used during the epoch
  double train_loss = 0.0;
  std::optional<double> train_accuracy;
  std::optional<double> test_accuracy;
  AlphaSummary alpha;
};

struct TrainingRecord {
  std::vector<EpochRecord> epochs;
  AlphaSummary alpha;  // whole run
  std::uint64_t steps = 0;
  Vector final_x;
  double initial_loss = 0.0;

  std::optional<double> best_test_accuracy() const;
  std::optional<double> final_test_accuracy() const;
};

struct TrainOptions {
  std::uint64_t seed = 0;
  /// Starting point; drawn from objective.initial_point() when absent.
  std::optional<Vector> x0;
  /// Called after every epoch with the freshly appended record.
  std::function<void(const EpochRecord&, const OptimizerState&)> on_epoch;
};

/// Shuffle-then-partition schedule: each epoch permutes the sample indices and
/// cuts them into N / C batches; a trailing short batch is dropped.
std::vector<std::vector<Index>> epoch_batches(Index sample_count, Index batch_size, Rng& rng);

/// Runs `epochs` epochs of SGD. The seed feeds three substreams (initial
/// point, shuffling, alpha) so protocols sharing a seed see the same batches.
/// Deterministic given (objective, hyper, epochs, options.seed, options.x0).
TrainingRecord train(const Objective& objective, const HyperParams& hyper, std::uint64_t epochs,
                     const TrainOptions& options = {});

}  // namespace randlr
