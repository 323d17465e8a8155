#pragma once

#include "dinomc/mlp.hpp"
#include "dinomc/subspace.hpp"

#include <memory>

namespace dinomc {

struct ReducedEval {
  Vector value;    // d_y, noise-whitened coordinates
  Matrix jacobian; // d_y x r
};

// A map R^r -> R^{d_y} in noise-whitened coordinates with its Jacobian, standing in for
// m_r -> V^* G(Psi m_r + complement).
class ReducedMap {
 public:
  virtual ~ReducedMap() = default;
  virtual Index input_dim() const = 0;
  virtual Index output_dim() const = 0;
  virtual ReducedEval evaluate(const Vector& x, CostCounters* counters = nullptr) const = 0;
};

using ReducedMapPtr = std::shared_ptr<const ReducedMap>;

class NetworkReducedMap : public ReducedMap {
 public:
  explicit NetworkReducedMap(Mlp net) : net_(std::move(net)) {}
  Index input_dim() const override { return net_.input_dim(); }
  Index output_dim() const override { return net_.output_dim(); }
  ReducedEval evaluate(const Vector& x, CostCounters* counters = nullptr) const override;
  const Mlp& network() const { return net_; }

 private:
  Mlp net_;
};

// f(x) = K x + c.
class AffineReducedMap : public ReducedMap {
 public:
  AffineReducedMap(Matrix K, Vector c);
  Index input_dim() const override { return K_.cols(); }
  Index output_dim() const override { return K_.rows(); }
  ReducedEval evaluate(const Vector& x, CostCounters* counters = nullptr) const override;

 private:
  Matrix K_;
  Vector c_;
};

// Exact reduced map of a linear model when span(Psi) contains the data-informed directions:
// V^* B Psi.
std::shared_ptr<AffineReducedMap> exact_linear_reduced_map(const ForwardModel& linear_model,
                                                           const ReducedBasis& basis);

// Sample-average approximation of the optimal reduced map: averages V^* G and J_r over
// frozen complement anchors (I - P) m_j. Each evaluation costs n_rm forward solves.
class SampleAverageReducedMap : public ReducedMap {
 public:
  SampleAverageReducedMap(std::shared_ptr<const ForwardModel> model, ReducedBasis basis, int anchors,
                          std::uint64_t seed);
  Index input_dim() const override { return basis_.rank(); }
  Index output_dim() const override { return model_->observable_dim(); }
  ReducedEval evaluate(const Vector& x, CostCounters* counters = nullptr) const override;
  Index anchors() const { return complements_.cols(); }

 private:
  std::shared_ptr<const ForwardModel> model_;
  ReducedBasis basis_;
  Matrix complements_;
};

}  // namespace dinomc
