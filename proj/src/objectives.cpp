#include "randlr/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "randlr/error.hpp"

namespace randlr {

double Objective::batch_loss_gradient(const Vector& x, std::span<const Index> batch, Vector& grad) const {
  grad.setZero(static_cast<Eigen::Index>(dim()));
  Vector g(static_cast<Eigen::Index>(dim()));
  double loss = 0.0;
  for (Index i : batch) {
    sample_gradient(x, i, g);
    grad += g;
    loss += sample_loss(x, i);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  grad *= inv;
  return loss * inv;
}

double Objective::batch_loss(const Vector& x, std::span<const Index> batch) const {
  double loss = 0.0;
  for (Index i : batch) loss += sample_loss(x, i);
  return loss / static_cast<double>(batch.size());
}

double Objective::full_loss(const Vector& x) const {
  std::vector<Index> all(sample_count());
  for (Index i = 0; i < all.size(); ++i) all[i] = i;
  return batch_loss(x, all);
}

Vector Objective::full_gradient(const Vector& x) const {
  std::vector<Index> all(sample_count());
  for (Index i = 0; i < all.size(); ++i) all[i] = i;
  Vector g;
  batch_loss_gradient(x, all, g);
  return g;
}

Vector Objective::hessian_vector_product(const Vector& x, const Vector& u) const {
  const double unorm = u.norm();
  if (unorm == 0.0) return Vector::Zero(u.size());
  const double eps = 1e-5 * std::max(1.0, x.norm()) / unorm;
  return (full_gradient(x + eps * u) - full_gradient(x - eps * u)) / (2.0 * eps);
}

Evaluation Objective::evaluate(const Vector& x) const { return Evaluation{full_loss(x), {}, {}}; }

Vector Objective::initial_point(Rng&) const { return Vector::Zero(static_cast<Eigen::Index>(dim())); }

Vector minibatch_grad(const Objective& obj, const Vector& x, std::span<const Index> batch) {
  if (batch.empty()) throw InvalidArgument("minibatch_grad: empty batch");
  if (static_cast<Index>(x.size()) != obj.dim()) {
    throw InvalidArgument("minibatch_grad: weight dimension " + std::to_string(x.size()) +
                          " does not match objective dimension " + std::to_string(obj.dim()));
  }
  const Index n = obj.sample_count();
  for (Index i : batch) {
    if (i >= n) throw InvalidArgument("minibatch_grad: sample index " + std::to_string(i) + " out of range");
  }
  Vector g;
  obj.batch_loss_gradient(x, batch, g);
  return g;
}

Index argmax_lowest(const Eigen::Ref<const Vector>& values) {
  Index best = 0;
  for (Eigen::Index k = 1; k < values.size(); ++k) {
    if (values[k] > values[static_cast<Eigen::Index>(best)]) best = static_cast<Index>(k);
  }
  return best;
}

// ---------------------------------------------------------------------------
// QuadraticEnsemble

QuadraticEnsemble::QuadraticEnsemble(Matrix curvature, Matrix centers)
    : curvature_(std::move(curvature)), centers_(std::move(centers)) {
  if (centers_.cols() == 0 || centers_.rows() == 0) throw InvalidArgument("quadratic ensemble needs centers");
  if (curvature_.rows() != centers_.rows() || curvature_.cols() != centers_.rows()) {
    throw InvalidArgument("curvature must be dim x dim");
  }
  if (!curvature_.isApprox(curvature_.transpose(), 1e-12)) throw InvalidArgument("curvature must be symmetric");
  Eigen::LLT<Matrix> llt(curvature_);
  if (llt.info() != Eigen::Success) throw InvalidArgument("curvature must be positive definite");
  centroid_ = centers_.rowwise().mean();
}

double QuadraticEnsemble::sample_loss(const Vector& x, Index i) const {
  const Vector d = x - centers_.col(static_cast<Eigen::Index>(i));
  return 0.5 * d.dot(curvature_ * d);
}

void QuadraticEnsemble::sample_gradient(const Vector& x, Index i, Vector& grad) const {
  grad = curvature_ * (x - centers_.col(static_cast<Eigen::Index>(i)));
}

Vector QuadraticEnsemble::full_gradient(const Vector& x) const { return curvature_ * (x - centroid_); }

Vector QuadraticEnsemble::hessian_vector_product(const Vector&, const Vector& u) const { return curvature_ * u; }

Vector QuadraticEnsemble::initial_point(Rng&) const { return Vector::Zero(centers_.rows()); }

// ---------------------------------------------------------------------------
// LogisticRegression

namespace {

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

LogisticRegression::LogisticRegression(Dataset train, Dataset test)
    : train_(std::move(train)), test_(std::move(test)) {
  if (train_.size() == 0) throw InvalidArgument("logistic regression needs training samples");
  if (static_cast<Index>(train_.features.cols()) != train_.size()) {
    throw InvalidArgument("feature/label count mismatch");
  }
}

LogisticRegression LogisticRegression::synthetic(Index features, Index train_samples, Index test_samples,
                                                 std::uint64_t seed) {
  if (features == 0 || train_samples == 0) throw InvalidArgument("synthetic logistic data needs a positive size");
  Rng rng(seed, 0x10915);
  Vector direction(static_cast<Eigen::Index>(features));
  for (auto& d : direction) d = rng.normal();
  direction.normalize();
  auto make = [&](Index count) {
    Dataset data;
    data.features.resize(static_cast<Eigen::Index>(features), static_cast<Eigen::Index>(count));
    data.labels.resize(count);
    for (Index i = 0; i < count; ++i) {
      const std::uint8_t label = static_cast<std::uint8_t>(rng.below(2));
      data.labels[i] = label;
      auto col = data.features.col(static_cast<Eigen::Index>(i));
      for (auto& v : col) v = rng.normal();
      col += (label ? 1.0 : -1.0) * direction;
    }
    return data;
  };
  Dataset train = make(train_samples);
  Dataset test = make(test_samples);
  return LogisticRegression(std::move(train), std::move(test));
}

double LogisticRegression::sample_loss(const Vector& x, Index i) const {
  const Eigen::Index p = train_.features.rows();
  const double margin = x.head(p).dot(train_.features.col(static_cast<Eigen::Index>(i))) + x[p];
  const double sign = train_.labels[i] ? 1.0 : -1.0;
  return softplus(-sign * margin);
}

void LogisticRegression::sample_gradient(const Vector& x, Index i, Vector& grad) const {
  const Eigen::Index p = train_.features.rows();
  const auto z = train_.features.col(static_cast<Eigen::Index>(i));
  const double margin = x.head(p).dot(z) + x[p];
  const double sign = train_.labels[i] ? 1.0 : -1.0;
  const double coeff = -sign * sigmoid(-sign * margin);
  grad.resize(p + 1);
  grad.head(p) = coeff * z;
  grad[p] = coeff;
}

double LogisticRegression::accuracy(const Vector& x, const Dataset& data) const {
  if (data.size() == 0) return 0.0;
  const Eigen::Index p = data.features.rows();
  const Vector margins = (data.features.transpose() * x.head(p)).array() + x[p];
  Index correct = 0;
  for (Index i = 0; i < data.size(); ++i) {
    const std::uint8_t predicted = margins[static_cast<Eigen::Index>(i)] > 0.0 ? 1 : 0;
    correct += predicted == data.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

Evaluation LogisticRegression::evaluate(const Vector& x) const {
  Evaluation e;
  e.loss = full_loss(x);
  e.train_accuracy = accuracy(x, train_);
  if (test_.size() > 0) e.test_accuracy = accuracy(x, test_);
  return e;
}

// ---------------------------------------------------------------------------
// PerceptronClassifier

namespace {

struct LayerViews {
  Eigen::Map<const Matrix> w1;
  Eigen::Map<const Vector> b1;
  Eigen::Map<const Matrix> w2;
  Eigen::Map<const Vector> b2;
};

LayerViews views(const Vector& x, Index inputs, Index hidden, Index classes) {
  const auto ni = static_cast<Eigen::Index>(inputs);
  const auto nh = static_cast<Eigen::Index>(hidden);
  const auto nc = static_cast<Eigen::Index>(classes);
  const double* p = x.data();
  return LayerViews{Eigen::Map<const Matrix>(p, nh, ni), Eigen::Map<const Vector>(p + nh * ni, nh),
                    Eigen::Map<const Matrix>(p + nh * ni + nh, nc, nh),
                    Eigen::Map<const Vector>(p + nh * ni + nh + nc * nh, nc)};
}

}  // namespace

PerceptronClassifier::PerceptronClassifier(Dataset train, Dataset test, Index hidden, Index classes)
    : train_(std::move(train)),
      test_(std::move(test)),
      inputs_(static_cast<Index>(train_.features.rows())),
      hidden_(hidden),
      classes_(classes) {
  if (train_.size() == 0) throw InvalidArgument("perceptron needs training samples");
  if (static_cast<Index>(train_.features.cols()) != train_.size()) {
    throw InvalidArgument("feature/label count mismatch");
  }
  if (test_.size() > 0 && static_cast<Index>(test_.features.rows()) != inputs_) {
    throw InvalidArgument("train and test feature sizes differ");
  }
  if (hidden_ == 0 || classes_ < 2) throw InvalidArgument("perceptron needs hidden units and >= 2 classes");
  auto check_labels = [&](const Dataset& d) {
    for (auto y : d.labels) {
      if (y >= classes_) throw InvalidArgument("label " + std::to_string(y) + " exceeds class count");
    }
  };
  check_labels(train_);
  check_labels(test_);
}

PerceptronClassifier PerceptronClassifier::mnist_model(Dataset train, Dataset test) {
  if (static_cast<Index>(train.features.rows()) != kMnistInputs) {
    throw InvalidArgument("MNIST model expects 784 input features");
  }
  return PerceptronClassifier(std::move(train), std::move(test), kMnistHidden, kMnistClasses);
}

Matrix PerceptronClassifier::logits(const Vector& x, const Matrix& inputs, Matrix* hidden_out) const {
  const auto L = views(x, inputs_, hidden_, classes_);
  Matrix hidden = (L.w1 * inputs).colwise() + L.b1;
  hidden = hidden.cwiseMax(0.0);
  Matrix z = (L.w2 * hidden).colwise() + L.b2;
  if (hidden_out) *hidden_out = std::move(hidden);
  return z;
}

double PerceptronClassifier::loss_and_backprop(const Vector& x, const Matrix& inputs,
                                               std::span<const std::uint8_t> labels, Vector* grad) const {
  const auto batch = static_cast<Eigen::Index>(labels.size());
  Matrix hidden;
  Matrix z = logits(x, inputs, &hidden);

  // Softmax cross-entropy, stabilized per column.
  double loss = 0.0;
  for (Eigen::Index j = 0; j < batch; ++j) {
    auto col = z.col(j);
    const double m = col.maxCoeff();
    col.array() -= m;
    const double log_norm = std::log(col.array().exp().sum());
    loss += log_norm - col[labels[static_cast<Index>(j)]];
    if (grad) {
      col = (col.array() - log_norm).exp();  // probabilities
      col[labels[static_cast<Index>(j)]] -= 1.0;
    }
  }
  const double inv = 1.0 / static_cast<double>(batch);
  if (!grad) return loss * inv;

  const auto ni = static_cast<Eigen::Index>(inputs_);
  const auto nh = static_cast<Eigen::Index>(hidden_);
  const auto nc = static_cast<Eigen::Index>(classes_);
  grad->resize(static_cast<Eigen::Index>(dim()));
  double* g = grad->data();
  Eigen::Map<Matrix> dw1(g, nh, ni);
  Eigen::Map<Vector> db1(g + nh * ni, nh);
  Eigen::Map<Matrix> dw2(g + nh * ni + nh, nc, nh);
  Eigen::Map<Vector> db2(g + nh * ni + nh + nc * nh, nc);

  const auto L = views(x, inputs_, hidden_, classes_);
  const Matrix dz = z * inv;
  dw2.noalias() = dz * hidden.transpose();
  db2 = dz.rowwise().sum();
  Matrix dh = L.w2.transpose() * dz;
  dh = (hidden.array() > 0.0).select(dh, 0.0);
  dw1.noalias() = dh * inputs.transpose();
  db1 = dh.rowwise().sum();
  return loss * inv;
}

Matrix PerceptronClassifier::gather(std::span<const Index> batch, std::vector<std::uint8_t>& labels) const {
  Matrix inputs(train_.features.rows(), static_cast<Eigen::Index>(batch.size()));
  labels.resize(batch.size());
  for (Index k = 0; k < batch.size(); ++k) {
    inputs.col(static_cast<Eigen::Index>(k)) = train_.features.col(static_cast<Eigen::Index>(batch[k]));
    labels[k] = train_.labels[batch[k]];
  }
  return inputs;
}

double PerceptronClassifier::sample_loss(const Vector& x, Index i) const {
  const Index one[] = {i};
  return batch_loss(x, one);
}

void PerceptronClassifier::sample_gradient(const Vector& x, Index i, Vector& grad) const {
  const Index one[] = {i};
  batch_loss_gradient(x, one, grad);
}

double PerceptronClassifier::batch_loss_gradient(const Vector& x, std::span<const Index> batch, Vector& grad) const {
  std::vector<std::uint8_t> labels;
  const Matrix inputs = gather(batch, labels);
  return loss_and_backprop(x, inputs, labels, &grad);
}

double PerceptronClassifier::batch_loss(const Vector& x, std::span<const Index> batch) const {
  std::vector<std::uint8_t> labels;
  const Matrix inputs = gather(batch, labels);
  return loss_and_backprop(x, inputs, labels, nullptr);
}

std::vector<std::uint8_t> PerceptronClassifier::predict(const Vector& x, const Dataset& data) const {
  const Matrix z = logits(x, data.features, nullptr);
  std::vector<std::uint8_t> out(data.size());
  for (Index j = 0; j < data.size(); ++j) {
    out[j] = static_cast<std::uint8_t>(argmax_lowest(z.col(static_cast<Eigen::Index>(j))));
  }
  return out;
}

double PerceptronClassifier::accuracy(const Vector& x, const Dataset& data) const {
  if (data.size() == 0) return 0.0;
  const auto predicted = predict(x, data);
  Index correct = 0;
  for (Index j = 0; j < data.size(); ++j) correct += predicted[j] == data.labels[j];
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

Evaluation PerceptronClassifier::evaluate(const Vector& x) const {
  Evaluation e;
  e.loss = loss_and_backprop(x, train_.features, train_.labels, nullptr);
  e.train_accuracy = accuracy(x, train_);
  if (test_.size() > 0) e.test_accuracy = accuracy(x, test_);
  return e;
}

Vector PerceptronClassifier::initial_point(Rng& rng) const {
  Vector x(static_cast<Eigen::Index>(dim()));
  const Index first_layer = hidden_ * inputs_ + hidden_;
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(inputs_));
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(hidden_));
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double b = static_cast<Index>(k) < first_layer ? bound1 : bound2;
    x[k] = rng.uniform(-b, b);
  }
  return x;
}

}  // namespace randlr
