#pragma once

#include "dinomc/reduced_map.hpp"

namespace dinomc {

// H = U diag(d) U^* with CM-orthonormal columns U and nonincreasing d >= 0.
struct LowRankEig {
  Matrix U;
  Vector d;
  Index rank() const { return d.size(); }
};

// CM representer of the misfit gradient at a solved point.
Vector ppg(const ForwardModel& model, const ModelPoint& point);

// Leading eigenpairs of the Gauss-Newton Hessian DG^* DG via the d_y x d_y Gram matrix of
// the adjoint rows. Requires k <= d_y; numerically null directions (relative 1e-12) are dropped.
LowRankEig ppgnh_eig(const ForwardModel& model, const ModelPoint& point, Index k, CostCounters* counters = nullptr);

// x -> x - U diag(d/(1+d)) U^* x, i.e. (I + H)^{-1} on the CM space.
Vector apply_inverse_shifted(const GaussianPrior& prior, const LowRankEig& eig, const Vector& x);

struct MapOptions {
  double gradient_tolerance = 1e-6;
  int max_iterations = 100;
  int cg_max_iterations = 200;
  double cg_forcing = 0.5;
  double armijo = 1e-4;
  int max_backtracks = 20;
};

struct LaplacePack {
  Vector m_map;
  LowRankEig eig;
  double objective = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Inexact Gauss-Newton on Phi(m) + 1/2 |m|_CM^2 with CG in the CM inner product and
// Armijo backtracking. Returns the best iterate, flagged when the tolerance is not met.
LaplacePack map_estimate(const ForwardModel& model, const Vector& start, const MapOptions& options = {},
                         CostCounters* counters = nullptr);

// Surrogate geometry at one reduced point: misfit, gradient J^T (f - y), and the
// eigendecomposition of J^T J (P orthogonal, d nonincreasing, clamped at 0).
struct GeometryPack {
  double misfit = 0.0;
  Vector value;
  Matrix jacobian;
  Vector gradient;
  Matrix P;
  Vector d;
};

GeometryPack surrogate_geometry(const ReducedMap& map, const Vector& m_r, const Vector& y_proj,
                                CostCounters* counters = nullptr);

}  // namespace dinomc
