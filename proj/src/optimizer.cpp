#include "randlr/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "randlr/error.hpp"

namespace randlr {

namespace {

class AlphaAccumulator {
 public:
  void add(double a) {
    ++count_;
    const double delta = a - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta * (a - mean_);
    min_ = std::min(min_, a);
    max_ = std::max(max_, a);
  }

  AlphaSummary summary() const {
    AlphaSummary s;
    s.count = count_;
    if (count_ == 0) return s;
    s.mean = mean_;
    s.variance = count_ > 1 ? m2_ / static_cast<double>(count_ - 1) : 0.0;
    s.min = min_;
    s.max = max_;
    return s;
  }

 private:
  std::uint64_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
  double min_ = std::numeric_limits<double>::infinity();
  double max_ = -std::numeric_limits<double>::infinity();
};

}  // namespace

void HyperParams::validate() const {
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("momentum must lie in [0, 1)");
  if (batch_size == 0) throw InvalidArgument("batch size must be positive");
  if (!(weight_decay >= 0.0)) throw InvalidArgument("weight decay must be non-negative");
  protocol.validate();
}

Vector gradient_point(const OptimizerState& state, double rate, const HyperParams& hyper) {
  if (!hyper.nesterov) return state.x;
  return state.x + (rate * hyper.momentum) * state.v;
}

void sgd_step(OptimizerState& state, const Vector& grad, const Vector& x_eval, double alpha, double rate,
              const HyperParams& hyper) {
  if (grad.size() != state.x.size() || x_eval.size() != state.x.size()) {
    throw InvalidArgument("sgd_step: gradient dimension does not match the iterate");
  }
  if (!(alpha >= 0.0)) throw InvalidArgument("sgd_step: alpha must be non-negative");
  if (hyper.weight_decay != 0.0) {
    state.v = hyper.momentum * state.v - alpha * (grad + hyper.weight_decay * x_eval);
  } else {
    state.v = hyper.momentum * state.v - alpha * grad;
  }
  state.x += rate * state.v;
  ++state.step;
  const double norm = state.x.norm();
  if (!std::isfinite(norm) || !state.v.allFinite()) {
    throw DivergedError(state.step, "non-finite iterate");
  }
  if (norm > kDivergenceNorm) throw DivergedError(state.step, "iterate norm exceeded 1e12");
}

void sgd_step(OptimizerState& state, const Vector& grad, double alpha, double rate, const HyperParams& hyper) {
  sgd_step(state, grad, gradient_point(state, rate, hyper), alpha, rate, hyper);
}

std::optional<double> TrainingRecord::best_test_accuracy() const {
  std::optional<double> best;
  for (const auto& e : epochs) {
    if (e.test_accuracy && (!best || *e.test_accuracy > *best)) best = e.test_accuracy;
  }
  return best;
}

std::optional<double> TrainingRecord::final_test_accuracy() const {
  if (epochs.empty()) return std::nullopt;
  return epochs.back().test_accuracy;
}

std::vector<std::vector<Index>> epoch_batches(Index sample_count, Index batch_size, Rng& rng) {
  if (batch_size == 0) throw InvalidArgument("batch size must be positive");
  if (batch_size > sample_count) {
    throw InvalidArgument("batch size " + std::to_string(batch_size) + " exceeds sample count " +
                          std::to_string(sample_count));
  }
  std::vector<Index> order(sample_count);
  for (Index i = 0; i < sample_count; ++i) order[i] = i;
  rng.shuffle(order.begin(), order.end());
  const Index batches = sample_count / batch_size;
  std::vector<std::vector<Index>> out(batches);
  for (Index b = 0; b < batches; ++b) {
    out[b].assign(order.begin() + static_cast<std::ptrdiff_t>(b * batch_size),
                  order.begin() + static_cast<std::ptrdiff_t>((b + 1) * batch_size));
  }
  return out;
}

TrainingRecord train(const Objective& objective, const HyperParams& hyper, std::uint64_t epochs,
                     const TrainOptions& options) {
  hyper.validate();
  if (epochs == 0) throw InvalidArgument("train: at least one epoch is required");

  Rng init_rng(options.seed, kInitStream);
  Rng shuffle_rng(options.seed, kShuffleStream);
  Rng alpha_rng(options.seed, kAlphaStream);

  Vector x0 = options.x0 ? *options.x0 : objective.initial_point(init_rng);
  if (static_cast<Index>(x0.size()) != objective.dim()) {
    throw InvalidArgument("train: starting point has the wrong dimension");
  }
  OptimizerState state = OptimizerState::at(std::move(x0));

  TrainingRecord record;
  record.initial_loss = objective.full_loss(state.x);
  AlphaAccumulator run_alpha;
  const bool cyclic = hyper.protocol.kind == ProtocolKind::CyclicCosine;
  Vector grad;

  for (std::uint64_t epoch = 0; epoch < epochs; ++epoch) {
    const double rate = rate_at_epoch(hyper.protocol, epoch);
    AlphaAccumulator epoch_alpha;
    for (const auto& batch : epoch_batches(objective.sample_count(), hyper.batch_size, shuffle_rng)) {
      const double alpha = cyclic ? 1.0 : sample_alpha(hyper.protocol, alpha_rng);
      const Vector x_eval = gradient_point(state, rate, hyper);
      objective.batch_loss_gradient(x_eval, batch, grad);
      sgd_step(state, grad, x_eval, alpha, rate, hyper);
      epoch_alpha.add(alpha);
      run_alpha.add(alpha);
    }
    state.epoch = epoch + 1;

    const Evaluation eval = objective.evaluate(state.x);
    if (!std::isfinite(eval.loss)) throw DivergedError(state.step, "non-finite training loss");
    EpochRecord row;
    row.epoch = state.epoch;
    row.rate = rate;
    row.train_loss = eval.loss;
    row.train_accuracy = eval.train_accuracy;
    row.test_accuracy = eval.test_accuracy;
    row.alpha = epoch_alpha.summary();
    record.epochs.push_back(row);
    if (options.on_epoch) options.on_epoch(record.epochs.back(), state);
  }
  record.alpha = run_alpha.summary();
  record.steps = state.step;
  record.final_x = std::move(state.x);
  return record;
}

}  // namespace randlr
