#pragma once

#include "dinomc/model.hpp"

#include <string>

namespace dinomc {

enum class BasisKind { KLE, DIS, Custom };

std::string to_string(BasisKind k);
BasisKind basis_kind_from_string(const std::string& s);

// r CM-orthonormal columns Psi on the parameter grid with dual encoder Psi^* = Psi^T A M^{-1} A.
// encode(decode(x)) = x; decode(encode(m)) is the CM-orthogonal projection of m.
class ReducedBasis {
 public:
  ReducedBasis() = default;
  ReducedBasis(PriorPtr prior, Matrix decoder, Vector eigenvalues, Vector spectrum, BasisKind kind);

  Index rank() const { return decoder_.cols(); }
  Index parameter_dim() const { return decoder_.rows(); }
  BasisKind kind() const { return kind_; }

  const Matrix& decoder() const { return decoder_; }
  const Matrix& encoder() const { return encoder_; }
  const Vector& eigenvalues() const { return eigenvalues_; }
  const Vector& spectrum() const { return spectrum_; }
  const GaussianPrior& prior() const { return *prior_; }

  Vector encode(const Vector& m) const;
  Matrix encode(const Matrix& m) const;
  Vector decode(const Vector& x) const;
  Vector project(const Vector& m) const { return decode(encode(m)); }
  // Psi^T w for a Euclidean dual vector w.
  Vector encode_dual(const Vector& w) const;

  ReducedBasis truncated(Index r) const;

  // Sum of the stored spectrum beyond the first r' entries.
  double truncation_tail(Index r_prime) const;

  int samples_used = 0;

 private:
  PriorPtr prior_;
  Matrix decoder_;
  Matrix encoder_;
  Vector eigenvalues_;
  Vector spectrum_;
  BasisKind kind_ = BasisKind::Custom;
};

// Leading r eigenpairs of the prior covariance, columns scaled to CM-unit norm.
ReducedBasis kle_basis(const PriorPtr& prior, Index r);

struct DisOptions {
  Index rank = 50;
  int samples = 64;
  std::uint64_t seed = 0;
  int threads = 1;
};

// Eigenbasis of the prior-averaged Gauss-Newton Hessian E_mu[DG^* DG], estimated from
// prior samples. Failed forward solves are skipped; at least half must succeed.
ReducedBasis dis_basis(const ForwardModel& model, const DisOptions& options, CostCounters* counters = nullptr);

// Reduced Jacobian V^* DG(m) Psi with V = sqrt(v_n) I: a d_y x r matrix.
Matrix reduced_jacobian(const ForwardModel& model, const ModelPoint& point, const ReducedBasis& basis,
                        CostCounters* counters = nullptr);

// Noise-whitened observable V^* G = G / sqrt(v_n).
Vector project_observable(const ForwardModel& model, const Vector& observable);

// Monte Carlo check of E|T - E T|^2 <= E |D_H T|_HS^2 for the noise-whitened map T = V^* G
// under the prior. ratio_sigma is the delta-method standard error of ratio.
struct PoincareEstimate {
  double variance = 0.0;
  double gradient_hs = 0.0;
  double ratio = 0.0;
  double ratio_sigma = 0.0;
  int samples_used = 0;
};

PoincareEstimate poincare_estimate(const ForwardModel& model, int samples, std::uint64_t seed, int threads = 1,
                                   CostCounters* counters = nullptr);

}  // namespace dinomc
