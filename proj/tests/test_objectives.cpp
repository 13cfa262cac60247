#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "randlr/error.hpp"
#include "randlr/objectives.hpp"
#include "randlr/optimizer.hpp"
#include "randlr/rng.hpp"

using namespace randlr;

namespace {

QuadraticEnsemble small_ensemble() {
  Matrix a(2, 2);
  a << 2.0, 0.5, 0.5, 1.0;
  Matrix c(2, 4);
  c << 1, 0, -1, 2,  //
      0, 1, 2, -1;
  return QuadraticEnsemble(a, c);
}

Dataset random_dataset(Index features, Index n, Index classes, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  d.features.resize(static_cast<Eigen::Index>(features), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < d.features.size(); ++i) d.features.data()[i] = rng.uniform();
  for (Index i = 0; i < n; ++i) d.labels.push_back(static_cast<std::uint8_t>(rng.below(classes)));
  return d;
}

// Largest relative error between the analytic batch gradient and central
// differences of the batch loss on `coords` random coordinates.
double gradient_check(const Objective& obj, const Vector& x, const std::vector<Index>& batch, int coords,
                      std::uint64_t seed, double h = 1e-4) {
  const Vector g = minibatch_grad(obj, x, batch);
  Rng rng(seed, 99);
  double worst = 0.0;
  for (int k = 0; k < coords; ++k) {
    const auto j = static_cast<Eigen::Index>(rng.below(obj.dim()));
    Vector xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    const double fd = (obj.batch_loss(xp, batch) - obj.batch_loss(xm, batch)) / (2.0 * h);
    const double scale = std::max({std::abs(fd), std::abs(g(j)), 1e-8});
    worst = std::max(worst, std::abs(fd - g(j)) / scale);
  }
  return worst;
}

}  // namespace

TEST_CASE("quadratic single-sample gradient is A (x - c_i)") {
  const auto q = small_ensemble();
  Vector x(2);
  x << 0.3, -0.7;
  for (Index i = 0; i < 4; ++i) {
    const std::vector<Index> batch{i};
    const Vector expected = q.curvature() * (x - q.centers().col(static_cast<Eigen::Index>(i)));
    CHECK((minibatch_grad(q, x, batch) - expected).norm() < 1e-15);
  }
}

TEST_CASE("full batch gradient equals the full gradient") {
  const auto q = small_ensemble();
  Vector x(2);
  x << 1.5, 0.25;
  const std::vector<Index> all{0, 1, 2, 3};
  CHECK((minibatch_grad(q, x, all) - q.full_gradient(x)).norm() < 1e-14);
  CHECK(q.full_gradient(q.centroid()).norm() < 1e-15);
  CHECK(q.centroid()(0) == doctest::Approx(0.5));
  CHECK(q.centroid()(1) == doctest::Approx(0.5));
}

TEST_CASE("full loss is minimal at the centroid") {
  const auto q = small_ensemble();
  const double fmin = q.full_loss(q.centroid());
  Rng rng(5);
  for (int k = 0; k < 50; ++k) {
    Vector x = q.centroid();
    x(0) += rng.normal() * 0.1;
    x(1) += rng.normal() * 0.1;
    CHECK(q.full_loss(x) >= fmin);
  }
}

TEST_CASE("quadratic rejects a curvature that is not positive definite") {
  Matrix a(2, 2);
  a << 1.0, 0.0, 0.0, -1.0;
  CHECK_THROWS_AS(QuadraticEnsemble(a, Matrix::Zero(2, 3)), InvalidArgument);
  Matrix b(2, 2);
  b << 1.0, 0.3, 0.0, 1.0;
  CHECK_THROWS_AS(QuadraticEnsemble(b, Matrix::Zero(2, 3)), InvalidArgument);
}

TEST_CASE("minibatch_grad argument checks") {
  const auto q = small_ensemble();
  const Vector x = Vector::Zero(2);
  CHECK_THROWS_AS(minibatch_grad(q, x, std::vector<Index>{}), InvalidArgument);
  CHECK_THROWS_AS(minibatch_grad(q, Vector::Zero(3), std::vector<Index>{0}), InvalidArgument);
  CHECK_THROWS_AS(minibatch_grad(q, x, std::vector<Index>{4}), InvalidArgument);
}

TEST_CASE("epoch partition averages to the full gradient") {
  const auto obj = LogisticRegression::synthetic(4, 60, 20, 3);
  Rng rng(11);
  Vector x = Vector::Zero(static_cast<Eigen::Index>(obj.dim()));
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
  const auto batches = epoch_batches(obj.sample_count(), 6, rng);
  REQUIRE(batches.size() == 10);
  Vector mean = Vector::Zero(x.size());
  for (const auto& b : batches) mean += minibatch_grad(obj, x, b);
  mean /= static_cast<double>(batches.size());
  CHECK((mean - obj.full_gradient(x)).norm() < 1e-13);
}

TEST_CASE("gradient checks") {
  SUBCASE("quadratic") {
    const auto q = small_ensemble();
    Vector x(2);
    x << 0.2, 0.9;
    CHECK(gradient_check(q, x, {0, 2, 3}, 2, 1) < 1e-8);
  }
  SUBCASE("logistic") {
    const auto obj = LogisticRegression::synthetic(6, 50, 10, 9);
    Rng rng(2);
    Vector x(static_cast<Eigen::Index>(obj.dim()));
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
    CHECK(gradient_check(obj, x, {1, 5, 7, 30}, 7, 4) < 1e-7);
  }
  SUBCASE("small perceptron") {
    const auto train = random_dataset(5, 12, 3, 1);
    const PerceptronClassifier obj(train, random_dataset(5, 4, 3, 2), 7, 3);
    Rng rng(4);
    const Vector x = obj.initial_point(rng);
    // Central differences are only valid away from ReLU kinks.
    const Eigen::Map<const Matrix> w1(x.data(), 7, 5);
    const Eigen::Map<const Vector> b1(x.data() + 35, 7);
    const Matrix pre = (w1 * train.features.leftCols(8)).colwise() + b1;
    REQUIRE(pre.cwiseAbs().minCoeff() > 1e-2);
    CHECK(gradient_check(obj, x, {0, 1, 2, 3, 4, 5, 6, 7}, 40, 5) < 1e-6);
  }
}

TEST_CASE("Model 1 gradient check on 20 random coordinates") {
  const auto obj = PerceptronClassifier::mnist_model(random_dataset(784, 16, 10, 21), random_dataset(784, 4, 10, 22));
  CHECK(obj.dim() == 79510);
  Rng rng(8);
  const Vector x = obj.initial_point(rng);
  CHECK(gradient_check(obj, x, {0, 2, 3, 5, 8, 9, 12, 15}, 20, 77) <= 1e-5);
}

TEST_CASE("perceptron batched and per-sample paths agree") {
  const PerceptronClassifier obj(random_dataset(9, 10, 4, 3), random_dataset(9, 5, 4, 4), 6, 4);
  Rng rng(1);
  const Vector x = obj.initial_point(rng);
  const std::vector<Index> batch{1, 4, 6, 9};
  Vector batched;
  const double loss = obj.batch_loss_gradient(x, batch, batched);
  Vector sum = Vector::Zero(x.size()), g;
  double loss_sum = 0.0;
  for (Index i : batch) {
    obj.sample_gradient(x, i, g);
    sum += g;
    loss_sum += obj.sample_loss(x, i);
  }
  CHECK((batched - sum / 4.0).norm() < 1e-13);
  CHECK(loss == doctest::Approx(loss_sum / 4.0).epsilon(1e-13));
}

TEST_CASE("initial weights are bounded by 1/sqrt(fan_in)") {
  const PerceptronClassifier obj(random_dataset(16, 4, 3, 3), random_dataset(16, 2, 3, 4), 9, 3);
  Rng rng(6);
  const Vector x = obj.initial_point(rng);
  // [W1 | b1 | W2 | b2]
  const Eigen::Index first = 9 * 16 + 9;
  CHECK(x.head(first).cwiseAbs().maxCoeff() <= 0.25);
  CHECK(x.tail(x.size() - first).cwiseAbs().maxCoeff() <= 1.0 / 3.0);
  CHECK(x.head(first).cwiseAbs().maxCoeff() > 0.2);
}

TEST_CASE("argmax ties go to the lowest index") {
  Vector v(4);
  v << 0.5, 2.0, 2.0, -1.0;
  CHECK(argmax_lowest(v) == 1);
  v << 3.0, 3.0, 3.0, 3.0;
  CHECK(argmax_lowest(v) == 0);
}

TEST_CASE("classifier accuracy at all-zero weights") {
  // Zero weights give equal logits; every prediction is class 0.
  Dataset train = random_dataset(3, 10, 2, 1);
  std::fill(train.labels.begin(), train.labels.end(), std::uint8_t{0});
  train.labels[3] = 1;
  const PerceptronClassifier obj(train, train, 4, 2);
  const auto eval = obj.evaluate(Vector::Zero(static_cast<Eigen::Index>(obj.dim())));
  REQUIRE(eval.train_accuracy.has_value());
  CHECK(*eval.train_accuracy == doctest::Approx(0.9));
  CHECK(eval.loss == doctest::Approx(std::log(2.0)));
}
