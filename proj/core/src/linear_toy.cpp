#include "dinomc/linear_toy.hpp"

#include <Eigen/Cholesky>

namespace dinomc {

namespace {

class LinearPoint : public ModelPoint {
 public:
  LinearPoint(Vector m, const Matrix& B, double v_n) : m_(std::move(m)), B_(B), v_n_(v_n) { G_ = B_ * m_; }

  const Vector& parameter() const override { return m_; }
  const Vector& observable() const override { return G_; }
  Vector jvp(const Vector& dm) const override {
    require_dim(dm.size(), m_.size(), "jvp");
    return B_ * dm;
  }
  Vector adjoint_dual(const Vector& dy) const override {
    require_dim(dy.size(), G_.size(), "adjoint_dual");
    return B_.transpose() * (dy / v_n_);
  }

 private:
  Vector m_, G_;
  Matrix B_;
  double v_n_;
};

}  // namespace

LinearGaussianModel::LinearGaussianModel(PriorPtr prior, Matrix B) : ForwardModel(std::move(prior)), B_(std::move(B)) {
  require_dim(B_.cols(), parameter_dim(), "linear operator columns");
  if (B_.rows() == 0) throw ParameterError("linear operator has no rows");
}

Matrix LinearGaussianModel::random_operator(Index d_y, Index d_m, double scale, std::uint64_t seed) {
  Rng rng(seed);
  Matrix B(d_y, d_m);
  for (Index j = 0; j < d_m; ++j)
    for (Index i = 0; i < d_y; ++i) B(i, j) = scale * standard_normal(rng);
  return B;
}

std::unique_ptr<ModelPoint> LinearGaussianModel::evaluate(const Vector& m) const {
  require_dim(m.size(), parameter_dim(), "linear model parameter");
  return std::make_unique<LinearPoint>(m, B_, noise_variance_);
}

Matrix LinearGaussianModel::posterior_covariance() const {
  if (!has_data()) throw ConfigError("posterior_covariance: model has no data");
  Matrix P = prior().dense_precision() + B_.transpose() * B_ / noise_variance_;
  Eigen::LLT<Matrix> llt(P);
  return llt.solve(Matrix::Identity(P.rows(), P.cols()));
}

Vector LinearGaussianModel::posterior_mean() const {
  return posterior_covariance() * (B_.transpose() * data()) / noise_variance_;
}

}  // namespace dinomc
