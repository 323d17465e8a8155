#pragma once

#include "dinomc/geometry.hpp"

#include <memory>
#include <string>

namespace dinomc {

enum class KernelKind { Pcn, Mala, Mmala, DisMmala, LaPcn, SurrogateMmala, DaSurrogateMmala };

std::string to_string(KernelKind k);
KernelKind kernel_kind_from_string(const std::string& s);

// s = (4 - dt) / (4 + dt); dt must be positive.
double step_parameter(double dt);

struct StepFlags {
  bool accepted = false;
  bool stage1_pass = true;  // always true for single-stage kernels
  bool failed = false;
  double log_alpha = 0.0;
};

// A Metropolis-Hastings kernel that owns one chain position and its caches.
class Kernel {
 public:
  Kernel(KernelKind kind, double dt);
  virtual ~Kernel() = default;

  KernelKind kind() const { return kind_; }
  double dt() const { return dt_; }
  double s() const { return s_; }

  // Sets the position and fills caches; throws if the model cannot be evaluated there.
  virtual void initialize(const Vector& m0) = 0;
  virtual StepFlags step(Rng& rng) = 0;
  virtual const Vector& position() const = 0;
  virtual double current_misfit() const = 0;

  const CostCounters& counters() const { return counters_; }
  void reset_counters() { counters_ = {}; }

 protected:
  CostCounters counters_;

 private:
  KernelKind kind_;
  double dt_;
  double s_;
};

using ModelConstPtr = std::shared_ptr<const ForwardModel>;

std::unique_ptr<Kernel> make_pcn_kernel(ModelConstPtr model, double dt);
// MALA: mMALA with K = C (no Hessian), gradient retained.
std::unique_ptr<Kernel> make_mala_kernel(ModelConstPtr model, double dt);
// Exact rank-d_y Gauss-Newton geometry recomputed at every position.
std::unique_ptr<Kernel> make_mmala_kernel(ModelConstPtr model, double dt);
// Fixed geometry from a DIS basis and its eigenvalues, true gradient.
std::unique_ptr<Kernel> make_dis_mmala_kernel(ModelConstPtr model, const ReducedBasis& basis, double dt);
std::unique_ptr<Kernel> make_lapcn_kernel(ModelConstPtr model, const LaplacePack& laplace, double dt);
// Reduced mMALA driven by a reduced map on span(Psi), pCN on the complement. With
// delayed_acceptance the surrogate screens proposals before the true misfit is evaluated.
std::unique_ptr<Kernel> make_surrogate_mmala_kernel(ModelConstPtr model, const ReducedBasis& basis,
                                                    ReducedMapPtr map, double dt, bool delayed_acceptance);

// Reduced-space proposal in the eigenbasis of a GeometryPack; xi ~ N(0, I_r).
Vector reduced_proposal_sample(const GeometryPack& pack, const Vector& m_r, double s, const Vector& xi);

// log of the reduced Radon-Nikodym derivative of the mMALA transition against pCN,
// with geometry evaluated at m1_r.
double log_rho0_reduced(const GeometryPack& pack_at_m1, const Vector& m1_r, const Vector& m2_r, double dt);

// Full-space analog for a low-rank geometry (U, d) and CM gradient g evaluated at m1.
double log_rho0_full(const GaussianPrior& prior, const LowRankEig& eig, const Vector& g, const Vector& m1,
                     const Vector& m2, double dt);

// log dN(m_map, (I+H)^{-1}C) / dN(0, C) at m, up to an m-independent constant.
double laplace_log_density_ratio(const GaussianPrior& prior, const LaplacePack& laplace, const Vector& m);

// One draw from N(m_map, (I+H)^{-1}C).
Vector laplace_sample(const GaussianPrior& prior, const LaplacePack& laplace, Rng& rng);

}  // namespace dinomc
