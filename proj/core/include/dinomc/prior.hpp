#pragma once

#include "dinomc/rng.hpp"
#include "dinomc/types.hpp"

#include <Eigen/SparseCholesky>

#include <memory>

namespace dinomc {

// Uniform n x n grid of interior nodes on the unit square, spacing h = 1/(n+1).
// Node (i, j) sits at ((i+1)h, (j+1)h); i runs along x, j along y.
struct Grid {
  int n = 0;
  double h = 0.0;

  static Grid make(int n);

  Index dofs() const { return static_cast<Index>(n) * n; }
  Index index(int i, int j) const { return static_cast<Index>(j) * n + i; }
  double x(int i) const { return (i + 1) * h; }
  double y(int j) const { return (j + 1) * h; }
  double mass() const { return h * h; }
};

// Gaussian prior N(0, C) with C = A^{-1} M A^{-1}, A = delta*M + gamma*K on the grid,
// K the 5-point stiffness with natural (Neumann) closure and M = h^2 I lumped mass.
//
// Functions are nodal vectors. The Cameron-Martin inner product is
// <a, b>_CM = a^T A M^{-1} A b. The covariance operator acting on functions is
// A^{-1} M A^{-1} M; apply_covariance returns the matrix action A^{-1} M A^{-1} b,
// which maps a Euclidean dual vector b to its CM representer.
class GaussianPrior {
 public:
  GaussianPrior(Grid grid, double gamma, double delta);

  const Grid& grid() const { return grid_; }
  Index dim() const { return grid_.dofs(); }
  double gamma() const { return gamma_; }
  double delta() const { return delta_; }

  const SparseMatrix& precision_factor() const { return A_; }

  Vector sample(Rng& rng) const;
  Vector sample_from_noise(const Vector& xi) const;

  Vector apply_covariance(const Vector& b) const;
  Matrix apply_covariance(const Matrix& b) const;
  Vector apply_precision(const Vector& m) const;
  Matrix apply_precision(const Matrix& m) const;

  double cm_inner(const Vector& a, const Vector& b) const;
  double cm_norm_sq(const Vector& a) const;

  // w = A m / h has identity covariance; unwhiten is its inverse, h A^{-1} w.
  Vector whiten(const Vector& m) const;
  Vector unwhiten(const Vector& w) const;
  Matrix unwhiten(const Matrix& w) const;

  Matrix dense_covariance() const;
  Matrix dense_precision() const;

 private:
  Grid grid_;
  double gamma_;
  double delta_;
  SparseMatrix A_;
  Eigen::SimplicialLLT<SparseMatrix> llt_;
};

using PriorPtr = std::shared_ptr<const GaussianPrior>;

PriorPtr make_prior(int n, double gamma, double delta);

}  // namespace dinomc
