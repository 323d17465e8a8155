#pragma once

#include "dinomc/prior.hpp"
#include "dinomc/types.hpp"

#include <memory>

namespace dinomc {

// A converged forward solve at one parameter. Linearizations reuse the cached
// factorization, so each jvp / adjoint_dual call costs one linear back-substitution.
class ModelPoint {
 public:
  virtual ~ModelPoint() = default;

  virtual const Vector& parameter() const = 0;
  virtual const Vector& observable() const = 0;

  // DG(m) dm.
  virtual Vector jvp(const Vector& dm) const = 0;
  // DG(m)^T C_n^{-1} dy as a Euclidean dual vector on the parameter grid.
  virtual Vector adjoint_dual(const Vector& dy) const = 0;
};

// Parameter-to-observable map G with Gaussian noise C_n = v_n I and data y.
class ForwardModel {
 public:
  explicit ForwardModel(PriorPtr prior) : prior_(std::move(prior)) {}
  virtual ~ForwardModel() = default;

  const GaussianPrior& prior() const { return *prior_; }
  const PriorPtr& prior_ptr() const { return prior_; }
  Index parameter_dim() const { return prior_->dim(); }
  virtual Index observable_dim() const = 0;

  // Throws SolverError if the forward solve fails.
  virtual std::unique_ptr<ModelPoint> evaluate(const Vector& m) const = 0;

  const Vector& data() const { return data_; }
  double noise_variance() const { return noise_variance_; }
  void set_data(Vector y, double noise_variance);
  bool has_data() const { return data_.size() == observable_dim(); }

 protected:
  double noise_variance_ = 1.0;

 private:
  PriorPtr prior_;
  Vector data_;
};

using ModelPtr = std::shared_ptr<ForwardModel>;

// Phi(m) = 1/2 |y - G|^2 / v_n.
double misfit(const ForwardModel& model, const Vector& observable);

// DG^* applied to dy, i.e. the CM representer C DG^T C_n^{-1} dy.
Vector vjp(const ForwardModel& model, const ModelPoint& point, const Vector& dy);

// CM-gradient representer of the misfit, DG^*(G - y).
Vector misfit_gradient(const ForwardModel& model, const ModelPoint& point);

// Euclidean dual rows of DG^T C_n^{-1/2}: row j = adjoint_dual(sqrt(v_n) e_j).
Matrix whitened_dual_rows(const ForwardModel& model, const ModelPoint& point, CostCounters* counters = nullptr);

struct SyntheticData {
  Vector y;
  Vector clean;
  double noise_variance = 0.0;
};

// y = G(m_true) + eta, eta ~ N(0, v_n I), v_n = (noise_pct * max|G(m_true)|)^2.
SyntheticData synthesize_data(const ForwardModel& model, const Vector& m_true, double noise_pct, Rng& rng);

}  // namespace dinomc
