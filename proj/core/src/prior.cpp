#include "dinomc/prior.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace dinomc {

Grid Grid::make(int n) {
  if (n < 2) throw ParameterError("grid: n must be at least 2, got " + std::to_string(n));
  Grid g;
  g.n = n;
  g.h = 1.0 / (n + 1);
  return g;
}

GaussianPrior::GaussianPrior(Grid grid, double gamma, double delta)
    : grid_(grid), gamma_(gamma), delta_(delta) {
  if (grid_.n < 2) throw ParameterError("prior: grid not initialized");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ParameterError("prior: gamma must be >= 0");
  if (!(delta > 0.0) || !std::isfinite(delta)) throw ParameterError("prior: delta must be > 0");

  const int n = grid_.n;
  const double m = grid_.mass();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(5 * dim()));
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const Index p = grid_.index(i, j);
      int neighbors = 0;
      auto link = [&](int ii, int jj) {
        if (ii < 0 || ii >= n || jj < 0 || jj >= n) return;
        ++neighbors;
        trip.emplace_back(p, grid_.index(ii, jj), -gamma);
      };
      link(i - 1, j);
      link(i + 1, j);
      link(i, j - 1);
      link(i, j + 1);
      trip.emplace_back(p, p, gamma * neighbors + delta * m);
    }
  }
  A_.resize(dim(), dim());
  A_.setFromTriplets(trip.begin(), trip.end());
  A_.makeCompressed();
  llt_.compute(A_);
  if (llt_.info() != Eigen::Success) throw ParameterError("prior: factorization of A failed");
}

Vector GaussianPrior::sample(Rng& rng) const { return sample_from_noise(standard_normal(rng, dim())); }

Vector GaussianPrior::sample_from_noise(const Vector& xi) const {
  require_dim(xi.size(), dim(), "prior sample noise");
  return unwhiten(xi);
}

Vector GaussianPrior::apply_covariance(const Vector& b) const {
  require_dim(b.size(), dim(), "apply_covariance");
  Vector t = llt_.solve(b);
  t *= grid_.mass();
  return llt_.solve(t);
}

Matrix GaussianPrior::apply_covariance(const Matrix& b) const {
  require_dim(b.rows(), dim(), "apply_covariance");
  Matrix t = llt_.solve(b);
  t *= grid_.mass();
  return llt_.solve(t);
}

Vector GaussianPrior::apply_precision(const Vector& m) const {
  require_dim(m.size(), dim(), "apply_precision");
  Vector t = A_ * m;
  return (A_ * t) / grid_.mass();
}

Matrix GaussianPrior::apply_precision(const Matrix& m) const {
  require_dim(m.rows(), dim(), "apply_precision");
  Matrix t = A_ * m;
  return (A_ * t) / grid_.mass();
}

double GaussianPrior::cm_inner(const Vector& a, const Vector& b) const {
  require_dim(a.size(), dim(), "cm_inner");
  require_dim(b.size(), dim(), "cm_inner");
  const Vector Aa = A_ * a;
  const Vector Ab = A_ * b;
  return Aa.dot(Ab) / grid_.mass();
}

double GaussianPrior::cm_norm_sq(const Vector& a) const {
  require_dim(a.size(), dim(), "cm_norm_sq");
  return (A_ * a).squaredNorm() / grid_.mass();
}

Vector GaussianPrior::whiten(const Vector& m) const {
  require_dim(m.size(), dim(), "whiten");
  return (A_ * m) / grid_.h;
}

Vector GaussianPrior::unwhiten(const Vector& w) const {
  require_dim(w.size(), dim(), "unwhiten");
  Vector m = llt_.solve(w);
  return m * grid_.h;
}

Matrix GaussianPrior::unwhiten(const Matrix& w) const {
  require_dim(w.rows(), dim(), "unwhiten");
  Matrix m = llt_.solve(w);
  return m * grid_.h;
}

Matrix GaussianPrior::dense_covariance() const {
  return apply_covariance(Matrix(Matrix::Identity(dim(), dim())));
}

Matrix GaussianPrior::dense_precision() const {
  const Matrix Ad(A_);
  return Ad * Ad / grid_.mass();
}

PriorPtr make_prior(int n, double gamma, double delta) {
  return std::make_shared<const GaussianPrior>(Grid::make(n), gamma, delta);
}

}  // namespace dinomc
