#pragma once

#include "dinomc/diffusion_reaction.hpp"
#include "dinomc/linear_toy.hpp"
#include "dinomc/model.hpp"

#include <memory>

namespace dinomc::testing {

inline Vector random_vector(Index n, std::uint64_t seed) {
  Rng rng(seed);
  return standard_normal(rng, n);
}

// Linear toy with data drawn from a prior sample; noise_pct sets how informative it is.
inline std::shared_ptr<LinearGaussianModel> make_toy(int grid_n = 8, Index d_y = 8, double noise_pct = 0.5,
                                                     std::uint64_t seed = 1) {
  auto prior = make_prior(grid_n, 0.03, 3.33);
  auto model = std::make_shared<LinearGaussianModel>(
      prior, LinearGaussianModel::random_operator(d_y, prior->dim(), 1.0, seed));
  Rng rng(seed + 100);
  const Vector truth = prior->sample(rng);
  const SyntheticData data = synthesize_data(*model, truth, noise_pct, rng);
  model->set_data(data.y, data.noise_variance);
  return model;
}

inline std::shared_ptr<DiffusionReactionModel> make_diffusion_reaction(int grid_n = 16, int obs = 25,
                                                                       double noise_pct = 0.02,
                                                                       std::uint64_t seed = 7) {
  auto prior = make_prior(grid_n, 0.03, 3.33);
  auto model = std::make_shared<DiffusionReactionModel>(prior, random_observation_points(obs, seed));
  Rng rng(seed + 1);
  const Vector truth = prior->sample(rng);
  const SyntheticData data = synthesize_data(*model, truth, noise_pct, rng);
  model->set_data(data.y, data.noise_variance);
  return model;
}

// G(m) = z + kappa z.^2 with z = B m: a cheap nonlinear map whose posterior is not Gaussian.
class QuadraticModel : public ForwardModel {
 public:
  QuadraticModel(PriorPtr prior, Matrix B, double kappa) : ForwardModel(std::move(prior)), B_(std::move(B)), kappa_(kappa) {}

  Index observable_dim() const override { return B_.rows(); }

  std::unique_ptr<ModelPoint> evaluate(const Vector& m) const override {
    require_dim(m.size(), parameter_dim(), "quadratic model");
    return std::make_unique<Point>(*this, m);
  }

  const Matrix& operator_matrix() const { return B_; }
  double kappa() const { return kappa_; }

 private:
  class Point : public ModelPoint {
   public:
    Point(const QuadraticModel& model, const Vector& m)
        : m_(m), z_(model.B_ * m), B_(model.B_), kappa_(model.kappa_), v_(model.noise_variance()) {
      g_ = z_.array() + kappa_ * z_.array().square();
    }
    const Vector& parameter() const override { return m_; }
    const Vector& observable() const override { return g_; }
    Vector jvp(const Vector& dm) const override {
      return ((1.0 + 2.0 * kappa_ * z_.array()) * (B_ * dm).array()).matrix();
    }
    Vector adjoint_dual(const Vector& dy) const override {
      return B_.transpose() * ((1.0 + 2.0 * kappa_ * z_.array()) * dy.array()).matrix() / v_;
    }

   private:
    Vector m_, z_, g_;
    Matrix B_;
    double kappa_;
    double v_;
  };

  Matrix B_;
  double kappa_;
};

// Defaults keep the fold at z = -1/(2 kappa) about three prior standard deviations away, so the
// posterior is unimodal; the mirror mode z -> -1/kappa - z carries negligible prior mass.
inline std::shared_ptr<QuadraticModel> make_quadratic(int grid_n = 4, Index d_y = 3, double kappa = 0.1,
                                                      double noise_pct = 0.3, std::uint64_t seed = 3,
                                                      double scale = 0.2) {
  auto prior = make_prior(grid_n, 0.1, 1.0);
  auto model = std::make_shared<QuadraticModel>(
      prior, LinearGaussianModel::random_operator(d_y, prior->dim(), scale, seed), kappa);
  Rng rng(seed + 50);
  const Vector truth = prior->sample(rng);
  const SyntheticData data = synthesize_data(*model, truth, noise_pct, rng);
  model->set_data(data.y, data.noise_variance);
  return model;
}

}  // namespace dinomc::testing
