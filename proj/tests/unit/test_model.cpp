#include "dinomc/diffusion_reaction.hpp"
#include "dinomc/linear_toy.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <cmath>

using namespace dinomc;

TEST_CASE("without reaction and with unit conductivity the state is u = y") {
  auto prior = make_prior(8, 0.03, 3.33);
  DiffusionReactionModel model(prior, random_observation_points(10, 3));
  model.set_reaction(false);
  const Grid& g = prior->grid();
  const Vector u = model.solve_state(Vector::Zero(g.dofs()));
  for (int j = 0; j < g.n; ++j) {
    for (int i = 0; i < g.n; ++i) CHECK(u(g.index(i, j)) == doctest::Approx(g.y(j)).epsilon(1e-10));
  }
  // Bilinear interpolation reproduces the linear field at every observation point.
  auto point = model.evaluate(Vector::Zero(g.dofs()));
  for (std::size_t k = 0; k < model.points().size(); ++k) {
    CHECK(point->observable()(static_cast<Index>(k)) == doctest::Approx(model.points()[k].y).epsilon(1e-10));
  }
}

TEST_CASE("observation operator rows are interpolation weights") {
  auto prior = make_prior(6, 0.03, 3.33);
  DiffusionReactionModel model(prior, random_observation_points(12, 5));
  const SparseMatrix& O = model.observation_operator();
  const Vector row_sums = O * Vector::Ones(prior->dim()) + model.observation_offset();
  // Weights on the bottom Dirichlet row carry value 0, so sums are at most 1.
  for (Index k = 0; k < row_sums.size(); ++k) {
    CHECK(row_sums(k) <= 1.0 + 1e-12);
    CHECK(row_sums(k) > 0.0);
  }
  for (int k = 0; k < O.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(O, k); it; ++it) CHECK(it.value() >= 0.0);
  }
}

TEST_CASE("residual derivatives match central differences") {
  auto prior = make_prior(5, 0.03, 3.33);
  DiffusionReactionModel model(prior, random_observation_points(4, 1));
  const Index d = prior->dim();
  Rng rng(2);
  const Vector m = prior->sample(rng);
  const Vector u = Vector::Constant(d, 0.5) + 0.1 * testing::random_vector(d, 3);
  const Matrix Ju(model.state_jacobian(u, m));
  const Matrix Jm(model.parameter_jacobian(u, m));
  const double eps = 1e-6;
  for (Index k = 0; k < d; k += 3) {
    Vector du = Vector::Zero(d);
    du(k) = eps;
    const Vector fd_u = (model.residual(u + du, m) - model.residual(u - du, m)) / (2 * eps);
    CHECK((fd_u - Ju.col(k)).norm() < 1e-7 * (1.0 + Ju.col(k).norm()));
    const Vector fd_m = (model.residual(u, m + du) - model.residual(u, m - du)) / (2 * eps);
    CHECK((fd_m - Jm.col(k)).norm() < 1e-7 * (1.0 + Jm.col(k).norm()));
  }
}

TEST_CASE("Newton converges to a zero residual") {
  auto model = testing::make_diffusion_reaction(10, 9);
  Rng rng(4);
  const Vector m = model->prior().sample(rng);
  const Vector u = model->solve_state(m);
  CHECK(model->residual(u, m).norm() < 1e-9);
  CHECK_THROWS_AS(model->solve_state(Vector::Constant(model->parameter_dim(), NAN)), SolverError);
}

TEST_CASE("jvp matches central differences on the diffusion-reaction model") {
  auto model = testing::make_diffusion_reaction(8, 10);
  Rng rng(5);
  const Vector m = model->prior().sample(rng);
  auto point = model->evaluate(m);
  for (int k = 0; k < 3; ++k) {
    const Vector dm = model->prior().sample(rng);
    const double eps = 1e-5;
    const Vector fd = (model->evaluate(m + eps * dm)->observable() - model->evaluate(m - eps * dm)->observable()) / (2 * eps);
    const Vector jv = point->jvp(dm);
    CHECK((fd - jv).norm() <= 1e-6 * jv.norm());
  }
}

TEST_CASE("adjoint is consistent with jvp in the CM and noise inner products") {
  auto model = testing::make_diffusion_reaction(8, 10);
  Rng rng(6);
  const Vector m = model->prior().sample(rng);
  auto point = model->evaluate(m);
  const Vector dm = model->prior().sample(rng);
  const Vector dy = standard_normal(rng, model->observable_dim());
  const double lhs = point->jvp(dm).dot(dy) / model->noise_variance();
  const Vector v = vjp(*model, *point, dy);
  const double rhs = model->prior().cm_inner(dm, v);
  const double scale = std::max(point->jvp(dm).norm() * dy.norm() / model->noise_variance(),
                                std::sqrt(model->prior().cm_norm_sq(dm) * model->prior().cm_norm_sq(v)));
  CHECK(std::abs(lhs - rhs) <= 1e-10 * scale);
}

TEST_CASE("whitened dual rows are adjoints of scaled unit vectors") {
  auto model = testing::make_toy(6, 5);
  const Vector m = testing::random_vector(36, 7);
  auto point = model->evaluate(m);
  const Matrix rows = whitened_dual_rows(*model, *point);
  const double sn = std::sqrt(model->noise_variance());
  const Matrix expect = model->operator_matrix() / sn;
  CHECK((rows - expect).norm() < 1e-12 * expect.norm());
}

TEST_CASE("misfit gradient of the toy is C B^T (Bm - y) / v_n") {
  auto model = testing::make_toy(6, 5);
  const Vector m = testing::random_vector(36, 8);
  auto point = model->evaluate(m);
  const Matrix& B = model->operator_matrix();
  const Vector expect = model->prior().dense_covariance() * B.transpose() * (B * m - model->data()) / model->noise_variance();
  CHECK((misfit_gradient(*model, *point) - expect).norm() < 1e-9 * expect.norm());
  CHECK(misfit(*model, point->observable()) ==
        doctest::Approx(0.5 * (B * m - model->data()).squaredNorm() / model->noise_variance()));
}

TEST_CASE("closed-form toy posterior solves the normal equations") {
  auto model = testing::make_toy(5, 6, 0.2);
  const Matrix& B = model->operator_matrix();
  const double v = model->noise_variance();
  const Matrix P = model->prior().dense_precision() + B.transpose() * B / v;
  const Matrix S = model->posterior_covariance();
  CHECK((P * S - Matrix::Identity(25, 25)).norm() < 1e-8);
  const Vector mean = model->posterior_mean();
  CHECK((P * mean - B.transpose() * model->data() / v).norm() < 1e-8 * (B.transpose() * model->data() / v).norm());
}

TEST_CASE("synthetic noise gives a chi-square misfit at the truth") {
  auto prior = make_prior(6, 0.03, 3.33);
  DiffusionReactionModel model(prior, random_observation_points(25, 7));
  Rng rng(1);
  const Vector truth = prior->sample(rng);
  const Vector clean = model.evaluate(truth)->observable();
  const int R = 400;
  double sum = 0.0;
  for (int k = 0; k < R; ++k) {
    const SyntheticData data = synthesize_data(model, truth, 0.02, rng);
    CHECK((data.clean - clean).norm() == 0.0);
    sum += 0.5 * (data.y - clean).squaredNorm() / data.noise_variance;
  }
  const double mean = sum / R;
  // Phi is chi^2_{d_y}/2: mean d_y/2, standard deviation sqrt(2 d_y)/2.
  CHECK(std::abs(mean - 12.5) < 4.0 * std::sqrt(50.0) / 2.0 / std::sqrt(double(R)));
  CHECK_THROWS_AS(synthesize_data(model, truth, 0.0, rng), ParameterError);
}

TEST_CASE("observation points are seeded and inside the window") {
  const auto a = random_observation_points(25, 11);
  const auto b = random_observation_points(25, 11);
  REQUIRE(a.size() == 25);
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].x == b[k].x);
    CHECK(a[k].x >= 0.1);
    CHECK(a[k].y <= 0.9);
  }
}
