#pragma once

#include "dinomc/model.hpp"

#include <Eigen/SparseCholesky>

#include <vector>

namespace dinomc {

struct ObservationPoint {
  double x = 0.0;
  double y = 0.0;
};

// Seeded uniform points in [lo, hi]^2.
std::vector<ObservationPoint> random_observation_points(int count, std::uint64_t seed, double lo = 0.1,
                                                        double hi = 0.9);

struct NewtonOptions {
  double tolerance = 1e-10;
  int max_iterations = 50;
  int max_halvings = 20;
};

// -div(e^m grad u) + u^3 = 0 on the unit square with u = 0 at y = 0, u = 1 at y = 1 and
// zero flux on x = 0, 1. Finite differences on the prior grid, face conductivity is the
// arithmetic mean of e^m at the two nodes and e^m at the node for Dirichlet faces.
// Observables are bilinear point evaluations of u.
class DiffusionReactionModel : public ForwardModel {
 public:
  DiffusionReactionModel(PriorPtr prior, std::vector<ObservationPoint> points, NewtonOptions options = {});

  Index observable_dim() const override { return static_cast<Index>(points_.size()); }
  std::unique_ptr<ModelPoint> evaluate(const Vector& m) const override;

  const std::vector<ObservationPoint>& points() const { return points_; }
  const NewtonOptions& options() const { return options_; }

  // Debug switch: drop the u^3 term. With m = 0 the solution is then u = y exactly.
  void set_reaction(bool on) { reaction_ = on; }
  bool reaction() const { return reaction_; }

  // Interior solution field at m (n^2 nodal values).
  Vector solve_state(const Vector& m) const;

  // Observation map on interior values: G = O u + c.
  const SparseMatrix& observation_operator() const { return O_; }
  const Vector& observation_offset() const { return c_; }

  // R(u; m) and its derivatives; exposed for finite-difference checks.
  Vector residual(const Vector& u, const Vector& m) const;
  SparseMatrix state_jacobian(const Vector& u, const Vector& m) const;
  SparseMatrix parameter_jacobian(const Vector& u, const Vector& m) const;

 private:
  std::vector<ObservationPoint> points_;
  NewtonOptions options_;
  bool reaction_ = true;
  SparseMatrix O_;
  Vector c_;
};

}  // namespace dinomc
