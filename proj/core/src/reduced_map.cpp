#include "dinomc/reduced_map.hpp"

#include <cmath>

namespace dinomc {

ReducedEval NetworkReducedMap::evaluate(const Vector& x, CostCounters* counters) const {
  ReducedEval e;
  net_.forward_jacobian(x, e.value, e.jacobian);
  if (counters) counters->network_evals += 1;
  return e;
}

AffineReducedMap::AffineReducedMap(Matrix K, Vector c) : K_(std::move(K)), c_(std::move(c)) {
  require_dim(c_.size(), K_.rows(), "affine reduced map offset");
}

ReducedEval AffineReducedMap::evaluate(const Vector& x, CostCounters* counters) const {
  require_dim(x.size(), K_.cols(), "affine reduced map input");
  if (counters) counters->network_evals += 1;
  return {K_ * x + c_, K_};
}

std::shared_ptr<AffineReducedMap> exact_linear_reduced_map(const ForwardModel& linear_model,
                                                           const ReducedBasis& basis) {
  const auto point = linear_model.evaluate(Vector::Zero(linear_model.parameter_dim()));
  const Matrix Jr = reduced_jacobian(linear_model, *point, basis);
  const Vector c = project_observable(linear_model, point->observable());
  return std::make_shared<AffineReducedMap>(Jr, c);
}

SampleAverageReducedMap::SampleAverageReducedMap(std::shared_ptr<const ForwardModel> model, ReducedBasis basis,
                                                 int anchors, std::uint64_t seed)
    : model_(std::move(model)), basis_(std::move(basis)) {
  if (anchors < 1) throw ParameterError("sample-average map: need at least one anchor");
  require_dim(basis_.parameter_dim(), model_->parameter_dim(), "sample-average map basis");
  complements_.resize(model_->parameter_dim(), anchors);
  for (int j = 0; j < anchors; ++j) {
    Rng rng(derive_seed(seed, 0xA2C, static_cast<std::uint64_t>(j)));
    const Vector m = model_->prior().sample(rng);
    complements_.col(j) = m - basis_.project(m);
  }
}

ReducedEval SampleAverageReducedMap::evaluate(const Vector& x, CostCounters* counters) const {
  require_dim(x.size(), basis_.rank(), "sample-average map input");
  const Vector head = basis_.decode(x);
  ReducedEval e{Vector::Zero(output_dim()), Matrix::Zero(output_dim(), input_dim())};
  CostCounters local;
  for (Index j = 0; j < complements_.cols(); ++j) {
    const auto point = model_->evaluate(head + complements_.col(j));
    e.value += project_observable(*model_, point->observable());
    e.jacobian += reduced_jacobian(*model_, *point, basis_, &local);
  }
  const double n = static_cast<double>(complements_.cols());
  e.value /= n;
  e.jacobian /= n;
  if (counters) {
    counters->surrogate_solves += static_cast<std::uint64_t>(complements_.cols());
    counters->jvp_solves += local.jvp_solves;
    counters->vjp_solves += local.vjp_solves;
  }
  return e;
}

}  // namespace dinomc
