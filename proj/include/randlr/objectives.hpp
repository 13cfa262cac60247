#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "randlr/rng.hpp"

namespace randlr {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = std::size_t;

/// Full-dataset evaluation of an iterate.
struct Evaluation {
  double loss = 0.0;
  std::optional<double> train_accuracy;
  std::optional<double> test_accuracy;
};

/// Finite-sum objective f(x) = (1/N) sum_i f_i(x).
///
/// Implementations are immutable after construction; every method is const
/// and reentrant.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual Index sample_count() const = 0;
  virtual Index dim() const = 0;
  virtual std::string name() const = 0;

  virtual double sample_loss(const Vector& x, Index i) const = 0;
  /// Writes grad f_i(x) into `grad` (resized to dim()).
  virtual void sample_gradient(const Vector& x, Index i, Vector& grad) const = 0;

  /// Mean loss over `batch`; writes the mean gradient into `grad`.
  /// The default loops over samples; models with batched kernels override it.
  virtual double batch_loss_gradient(const Vector& x, std::span<const Index> batch, Vector& grad) const;
  virtual double batch_loss(const Vector& x, std::span<const Index> batch) const;

  double full_loss(const Vector& x) const;
  virtual Vector full_gradient(const Vector& x) const;

  /// Hessian of the full loss applied to `u`. Default: central difference of
  /// full gradients with step eps * max(1, |x|) / |u|.
  virtual Vector hessian_vector_product(const Vector& x, const Vector& u) const;

  /// Full training loss plus accuracies for classifiers.
  virtual Evaluation evaluate(const Vector& x) const;

  /// Seeded starting point for training.
  virtual Vector initial_point(Rng& rng) const;
};

/// Mean gradient (1/C) sum_{j in batch} grad f_j(x). Throws InvalidArgument
/// on an empty batch, an out-of-range index or a dimension mismatch.
Vector minibatch_grad(const Objective& obj, const Vector& x, std::span<const Index> batch);

/// f_i(x) = 1/2 (x - c_i)^T A (x - c_i) with A symmetric positive definite.
class QuadraticEnsemble final : public Objective {
 public:
  /// `centers` holds one center per column (dim x N).
  QuadraticEnsemble(Matrix curvature, Matrix centers);

  Index sample_count() const override { return static_cast<Index>(centers_.cols()); }
  Index dim() const override { return static_cast<Index>(centers_.rows()); }
  std::string name() const override { return "quadratic"; }

  double sample_loss(const Vector& x, Index i) const override;
  void sample_gradient(const Vector& x, Index i, Vector& grad) const override;
  Vector full_gradient(const Vector& x) const override;
  Vector hessian_vector_product(const Vector& x, const Vector& u) const override;
  Vector initial_point(Rng& rng) const override;

  const Matrix& curvature() const { return curvature_; }
  const Matrix& centers() const { return centers_; }
  /// Minimizer of the full loss: the centroid of the centers.
  const Vector& centroid() const { return centroid_; }

 private:
  Matrix curvature_;
  Matrix centers_;
  Vector centroid_;
};

/// Labeled feature matrix, one sample per column.
struct Dataset {
  Matrix features;                  // features x N
  std::vector<std::uint8_t> labels;  // N entries

  Index size() const { return labels.size(); }
};

/// Binary logistic regression with a bias term; labels are 0/1.
/// f_i(w, b) = log(1 + exp(-s_i (w.z_i + b))) with s_i = 2 y_i - 1.
class LogisticRegression final : public Objective {
 public:
  LogisticRegression(Dataset train, Dataset test);

  /// Two Gaussian clouds in `features` dimensions, separated along a random
  /// direction; deterministic given the seed.
  static LogisticRegression synthetic(Index features, Index train_samples, Index test_samples,
                                      std::uint64_t seed);

  Index sample_count() const override { return train_.size(); }
  Index dim() const override { return static_cast<Index>(train_.features.rows()) + 1; }
  std::string name() const override { return "logistic"; }

  double sample_loss(const Vector& x, Index i) const override;
  void sample_gradient(const Vector& x, Index i, Vector& grad) const override;
  Evaluation evaluate(const Vector& x) const override;

 private:
  double accuracy(const Vector& x, const Dataset& data) const;

  Dataset train_;
  Dataset test_;
};

/// Two-layer perceptron inputs -> hidden (ReLU) -> classes with softmax
/// cross-entropy. Parameters are packed as [W1 | b1 | W2 | b2], matrices
/// column-major.
class PerceptronClassifier final : public Objective {
 public:
  static constexpr Index kMnistInputs = 28 * 28;
  static constexpr Index kMnistHidden = 100;
  static constexpr Index kMnistClasses = 10;

  PerceptronClassifier(Dataset train, Dataset test, Index hidden, Index classes);

  /// The 784 -> 100 -> 10 network used for the MNIST experiments.
  static PerceptronClassifier mnist_model(Dataset train, Dataset test);

  static Index parameter_count(Index inputs, Index hidden, Index classes) {
    return hidden * inputs + hidden + classes * hidden + classes;
  }

  Index sample_count() const override { return train_.size(); }
  Index dim() const override { return parameter_count(inputs_, hidden_, classes_); }
  std::string name() const override { return "perceptron"; }

  double sample_loss(const Vector& x, Index i) const override;
  void sample_gradient(const Vector& x, Index i, Vector& grad) const override;
  double batch_loss_gradient(const Vector& x, std::span<const Index> batch, Vector& grad) const override;
  double batch_loss(const Vector& x, std::span<const Index> batch) const override;
  Evaluation evaluate(const Vector& x) const override;

  /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer, biases included.
  Vector initial_point(Rng& rng) const override;

  /// argmax over logits, ties to the lowest class index.
  std::vector<std::uint8_t> predict(const Vector& x, const Dataset& data) const;

  const Dataset& train_set() const { return train_; }
  const Dataset& test_set() const { return test_; }

 private:
  Matrix logits(const Vector& x, const Matrix& inputs, Matrix* hidden_out) const;
  double loss_and_backprop(const Vector& x, const Matrix& inputs, std::span<const std::uint8_t> labels,
                           Vector* grad) const;
  double accuracy(const Vector& x, const Dataset& data) const;
  Matrix gather(std::span<const Index> batch, std::vector<std::uint8_t>& labels) const;

  Dataset train_;
  Dataset test_;
  Index inputs_;
  Index hidden_;
  Index classes_;
};

/// Index of the largest entry; ties resolve to the lowest index.
Index argmax_lowest(const Eigen::Ref<const Vector>& values);

}  // namespace randlr
