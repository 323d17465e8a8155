#include "dinomc/model.hpp"

#include <cmath>

namespace dinomc {

void ForwardModel::set_data(Vector y, double noise_variance) {
  require_dim(y.size(), observable_dim(), "data");
  if (!(noise_variance > 0.0) || !std::isfinite(noise_variance)) {
    throw ParameterError("noise variance must be positive and finite");
  }
  data_ = std::move(y);
  noise_variance_ = noise_variance;
}

double misfit(const ForwardModel& model, const Vector& observable) {
  require_dim(observable.size(), model.observable_dim(), "misfit observable");
  if (!model.has_data()) throw ConfigError("misfit: model has no data");
  return 0.5 * (model.data() - observable).squaredNorm() / model.noise_variance();
}

Vector vjp(const ForwardModel& model, const ModelPoint& point, const Vector& dy) {
  return model.prior().apply_covariance(point.adjoint_dual(dy));
}

Vector misfit_gradient(const ForwardModel& model, const ModelPoint& point) {
  if (!model.has_data()) throw ConfigError("misfit_gradient: model has no data");
  return vjp(model, point, point.observable() - model.data());
}

Matrix whitened_dual_rows(const ForwardModel& model, const ModelPoint& point, CostCounters* counters) {
  const Index dy = model.observable_dim();
  const double sn = std::sqrt(model.noise_variance());
  Matrix rows(dy, model.parameter_dim());
  Vector e = Vector::Zero(dy);
  for (Index j = 0; j < dy; ++j) {
    e.setZero();
    e[j] = sn;
    rows.row(j) = point.adjoint_dual(e).transpose();
  }
  if (counters) counters->vjp_solves += static_cast<std::uint64_t>(dy);
  return rows;
}

SyntheticData synthesize_data(const ForwardModel& model, const Vector& m_true, double noise_pct, Rng& rng) {
  if (!(noise_pct > 0.0)) throw ParameterError("noise_pct must be positive");
  SyntheticData out;
  out.clean = model.evaluate(m_true)->observable();
  const double scale = noise_pct * out.clean.cwiseAbs().maxCoeff();
  if (!(scale > 0.0)) throw ParameterError("synthesize_data: observable is identically zero");
  out.noise_variance = scale * scale;
  out.y = out.clean + scale * standard_normal(rng, out.clean.size());
  return out;
}

}  // namespace dinomc
