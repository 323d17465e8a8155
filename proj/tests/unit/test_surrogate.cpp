#include "dinomc/reduced_map.hpp"
#include "dinomc/training.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace dinomc;

namespace {

Dataset toy_dataset(const LinearGaussianModel& model, const ReducedBasis& basis, Index n, std::uint64_t seed) {
  DatasetOptions o;
  o.samples = n;
  o.seed = seed;
  return generate_dataset(model, basis, o);
}

std::vector<Index> all_indices(Index n) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  return idx;
}

}  // namespace

TEST_CASE("GELU derivatives match finite differences") {
  for (double z : {-3.0, -0.7, 0.0, 0.4, 2.5}) {
    const double e = 1e-5;
    CHECK(gelu_prime(z) == doctest::Approx((gelu(z + e) - gelu(z - e)) / (2 * e)).epsilon(1e-8));
    CHECK(gelu_second(z) == doctest::Approx((gelu_prime(z + e) - gelu_prime(z - e)) / (2 * e)).epsilon(1e-7));
  }
  CHECK(gelu(0.0) == 0.0);
  CHECK(gelu(10.0) == doctest::Approx(10.0));
}

TEST_CASE("network Jacobian matches central differences") {
  const Mlp net({5, 12, 9, 3}, 4);
  const Vector x = testing::random_vector(5, 5);
  Vector value;
  Matrix J;
  net.forward_jacobian(x, value, J);
  CHECK((value - net.forward(x)).norm() == 0.0);
  CHECK((J - net.jacobian(x)).norm() < 1e-14);
  for (Index k = 0; k < 5; ++k) {
    Vector e = Vector::Zero(5);
    e(k) = 1e-6;
    const Vector fd = (net.forward(x + e) - net.forward(x - e)) / 2e-6;
    CHECK((fd - J.col(k)).norm() < 1e-7 * (1.0 + J.col(k).norm()));
  }
}

TEST_CASE("identity activation collapses to an affine map") {
  Mlp net({4, 6, 3}, 1, Activation::Identity);
  const Matrix W = net.weights[1] * net.weights[0];
  const Vector b = net.weights[1] * net.biases[0] + net.biases[1];
  const Vector x = testing::random_vector(4, 2);
  CHECK((net.forward(x) - (W * x + b)).norm() < 1e-12);
  CHECK((net.jacobian(x) - W).norm() < 1e-12);
}

TEST_CASE("parameter vector round trips") {
  Mlp net({3, 7, 2}, 8);
  const Vector p = net.parameters();
  CHECK(p.size() == net.parameter_count());
  CHECK(p.size() == 3 * 7 + 7 + 7 * 2 + 2);
  Mlp other({3, 7, 2}, 99);
  other.set_parameters(p);
  CHECK((other.parameters() - p).norm() == 0.0);
  CHECK_THROWS_AS(other.set_parameters(Vector::Zero(3)), DimensionError);
}

TEST_CASE("non-finite weights poison the network") {
  Mlp net({3, 4, 2}, 8);
  net.weights[0](1, 1) = NAN;
  CHECK_THROWS_AS(net.forward(Vector::Ones(3)), PoisonedModelError);
}

TEST_CASE("loss gradients match finite differences for both losses") {
  auto model = testing::make_toy(5, 3);
  const ReducedBasis basis = kle_basis(model->prior_ptr(), 4);
  const Dataset data = toy_dataset(*model, basis, 6, 2);
  Mlp net({4, 5, 3}, 3);
  net.output_scale = Vector::Constant(3, 1.7);
  net.output_shift = Vector::Constant(3, -0.2);
  const auto idx = all_indices(data.size());
  for (LossKind kind : {LossKind::L2, LossKind::H1}) {
    Vector g;
    const LossValue lv = loss_gradient(net, data, idx, kind, g);
    CHECK(lv.total == doctest::Approx(evaluate_loss(net, data, kind).total).epsilon(1e-12));
    const Vector p = net.parameters();
    for (Index k = 0; k < p.size(); k += 4) {
      Mlp a = net, b = net;
      Vector pa = p, pb = p;
      pa(k) += 1e-6;
      pb(k) -= 1e-6;
      a.set_parameters(pa);
      b.set_parameters(pb);
      const double fd = (evaluate_loss(a, data, kind).total - evaluate_loss(b, data, kind).total) / 2e-6;
      CHECK(fd == doctest::Approx(g(k)).epsilon(1e-5).scale(1e-6));
    }
  }
}

TEST_CASE("H1 loss adds the Jacobian term to the L2 loss") {
  auto model = testing::make_toy(5, 3);
  const ReducedBasis basis = kle_basis(model->prior_ptr(), 4);
  const Dataset data = toy_dataset(*model, basis, 5, 3);
  const Mlp net({4, 6, 3}, 1);
  const LossValue l2 = evaluate_loss(net, data, LossKind::L2);
  const LossValue h1 = evaluate_loss(net, data, LossKind::H1);
  CHECK(l2.jacobian == 0.0);
  CHECK(h1.observable == doctest::Approx(l2.total));
  CHECK(h1.total == doctest::Approx(h1.observable + h1.jacobian));
  Dataset bare = data;
  bare.Jac.resize(0, 0);
  CHECK_THROWS_AS(evaluate_loss(net, bare, LossKind::H1), ConfigError);
}

TEST_CASE("dataset records match direct model evaluation") {
  auto model = testing::make_toy(6, 4);
  DisOptions o;
  o.rank = 6;
  o.samples = 2;
  const ReducedBasis basis = dis_basis(*model, o);
  const Dataset data = toy_dataset(*model, basis, 5, 9);
  CHECK(data.size() == 5);
  CHECK(data.with_jacobian());
  // The DIS complement is in the kernel of B, so Y = J_r X exactly.
  auto point = model->evaluate(Vector::Zero(36));
  const Matrix Jr = reduced_jacobian(*model, *point, basis);
  CHECK((data.Y - Jr * data.X).norm() < 1e-8 * data.Y.norm());
  for (Index k = 0; k < 5; ++k) CHECK((Matrix(data.jacobian(k)) - Jr).norm() < 1e-10 * Jr.norm());
  const Dataset sub = data.subset({1, 3});
  CHECK((sub.X.col(1) - data.X.col(3)).norm() == 0.0);
  CHECK((Matrix(sub.jacobian(0)) - Matrix(data.jacobian(1))).norm() == 0.0);
}

TEST_CASE("an exact network has zero generalization error") {
  auto model = testing::make_toy(6, 4);
  DisOptions o;
  o.rank = 6;
  o.samples = 2;
  const ReducedBasis basis = dis_basis(*model, o);
  const Dataset data = toy_dataset(*model, basis, 8, 4);
  auto point = model->evaluate(Vector::Zero(36));
  Mlp net({6, 4}, 1, Activation::Identity);
  net.weights[0] = reduced_jacobian(*model, *point, basis);
  net.biases[0].setZero();
  const GeneralizationError e = generalization_errors(net, data);
  CHECK(e.observable < 1e-8);
  CHECK(e.jacobian < 1e-8);
}

TEST_CASE("training reduces the loss and keeps the best validation weights") {
  auto model = testing::make_toy(5, 3);
  const ReducedBasis basis = kle_basis(model->prior_ptr(), 5);
  const Dataset data = toy_dataset(*model, basis, 64, 1);
  const Mlp initial({5, 16, 3}, 2);
  TrainOptions o;
  o.loss = LossKind::H1;
  o.epochs = 60;
  o.learning_rate = 3e-3;
  o.seed = 5;
  const TrainResult res = train(initial, data, o);
  REQUIRE(!res.train_loss.empty());
  CHECK(res.train_loss.back() < 0.5 * res.train_loss.front());
  CHECK(res.validation_loss.size() == res.train_loss.size());
  const auto best = std::min_element(res.validation_loss.begin(), res.validation_loss.end());
  CHECK(res.best_epoch == 1 + static_cast<int>(best - res.validation_loss.begin()));

  // Same options, same result.
  const TrainResult again = train(initial, data, o);
  CHECK((again.network.parameters() - res.network.parameters()).norm() == 0.0);

  o.epochs = 0;
  const TrainResult none = train(initial, data, o);
  CHECK((none.network.parameters() - initial.parameters()).norm() == 0.0);
}

TEST_CASE("reduced maps report values, Jacobians and costs") {
  auto model = testing::make_toy(6, 4);
  DisOptions o;
  o.rank = 6;
  o.samples = 2;
  const ReducedBasis basis = dis_basis(*model, o);
  const auto exact = exact_linear_reduced_map(*model, basis);
  const SampleAverageReducedMap saa(model, basis, 3, 7);
  const Vector x = testing::random_vector(6, 8);
  CostCounters c;
  const ReducedEval a = exact->evaluate(x);
  const ReducedEval b = saa.evaluate(x, &c);
  // The complement anchors contribute nothing for a linear map orthogonal to them.
  CHECK((a.value - b.value).norm() < 1e-8 * a.value.norm());
  CHECK((a.jacobian - b.jacobian).norm() < 1e-8 * a.jacobian.norm());
  CHECK(c.surrogate_solves == 3);
  CHECK(c.forward_solves == 0);

  NetworkReducedMap net(Mlp({6, 8, 4}, 3));
  CostCounters n;
  const ReducedEval e = net.evaluate(x, &n);
  CHECK(n.network_evals == 1);
  CHECK((e.jacobian - net.network().jacobian(x)).norm() < 1e-14);
}
