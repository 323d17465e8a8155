#pragma once

#include "dinomc/model.hpp"

namespace dinomc {

// G(m) = B m with a Gaussian prior: the posterior is Gaussian and known in closed form.
class LinearGaussianModel : public ForwardModel {
 public:
  LinearGaussianModel(PriorPtr prior, Matrix B);

  // B with i.i.d. N(0, scale^2) entries; seeded.
  static Matrix random_operator(Index d_y, Index d_m, double scale, std::uint64_t seed);

  Index observable_dim() const override { return B_.rows(); }
  std::unique_ptr<ModelPoint> evaluate(const Vector& m) const override;

  const Matrix& operator_matrix() const { return B_; }

  // Dense closed-form posterior; requires data.
  Matrix posterior_covariance() const;
  Vector posterior_mean() const;

 private:
  Matrix B_;
};

}  // namespace dinomc
