#include "dinomc/kernels.hpp"

#include <cmath>
#include <limits>

namespace dinomc {

std::string to_string(KernelKind k) {
  switch (k) {
    case KernelKind::Pcn: return "pCN";
    case KernelKind::Mala: return "MALA";
    case KernelKind::Mmala: return "mMALA";
    case KernelKind::DisMmala: return "DIS-mMALA";
    case KernelKind::LaPcn: return "LA-pCN";
    case KernelKind::SurrogateMmala: return "surrogate-mMALA";
    case KernelKind::DaSurrogateMmala: return "DA-surrogate-mMALA";
  }
  return "unknown";
}

KernelKind kernel_kind_from_string(const std::string& s) {
  for (KernelKind k : {KernelKind::Pcn, KernelKind::Mala, KernelKind::Mmala, KernelKind::DisMmala, KernelKind::LaPcn,
                       KernelKind::SurrogateMmala, KernelKind::DaSurrogateMmala}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown kernel kind '" + s + "'");
}

double step_parameter(double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ParameterError("step size dt must be positive and finite");
  return (4.0 - dt) / (4.0 + dt);
}

Kernel::Kernel(KernelKind kind, double dt) : kind_(kind), dt_(dt), s_(step_parameter(dt)) {}

Vector reduced_proposal_sample(const GeometryPack& pack, const Vector& m_r, double s, const Vector& xi) {
  require_dim(m_r.size(), pack.d.size(), "reduced proposal point");
  require_dim(xi.size(), pack.d.size(), "reduced proposal noise");
  const Eigen::ArrayXd d = pack.d.array();
  const Eigen::ArrayXd x = (pack.P.transpose() * m_r).array();
  const Eigen::ArrayXd gx = (pack.P.transpose() * pack.gradient).array();
  const Eigen::ArrayXd coeff =
      (d + s) / (d + 1.0) * x - (1.0 - s) / (d + 1.0) * gx + ((1.0 - s * s) / (d + 1.0)).sqrt() * xi.array();
  return pack.P * coeff.matrix();
}

double log_rho0_reduced(const GeometryPack& pack, const Vector& m1_r, const Vector& m2_r, double dt) {
  require_dim(m1_r.size(), pack.d.size(), "log_rho0 point");
  require_dim(m2_r.size(), pack.d.size(), "log_rho0 point");
  const double s = step_parameter(dt);
  const double c = std::sqrt(1.0 - s * s);
  const Eigen::ArrayXd d = pack.d.array();
  const Eigen::ArrayXd y1 = (pack.P.transpose() * m1_r).array();
  const Eigen::ArrayXd yh = (pack.P.transpose() * ((m2_r - s * m1_r) / c)).array();
  const Eigen::ArrayXd gx = (pack.P.transpose() * pack.gradient).array();
  const Eigen::ArrayXd a = d * y1 - gx;
  return -dt / 8.0 * (a.square() / (1.0 + d)).sum() + 0.5 * std::sqrt(dt) * (a * yh).sum() -
         0.5 * (d * yh.square()).sum() + 0.5 * d.log1p().sum();
}

double log_rho0_full(const GaussianPrior& prior, const LowRankEig& eig, const Vector& g, const Vector& m1,
                     const Vector& m2, double dt) {
  const double s = step_parameter(dt);
  const double c = std::sqrt(1.0 - s * s);
  const Vector mh = (m2 - s * m1) / c;
  const Vector Cmh = prior.apply_precision(mh);
  const Vector Cg = prior.apply_precision(g);
  const double gg = g.dot(Cg);
  const double gm = g.dot(Cmh);
  double out = -dt / 8.0 * gg - 0.5 * std::sqrt(dt) * gm;
  if (eig.rank() > 0) {
    const Eigen::ArrayXd d = eig.d.array();
    const Eigen::ArrayXd y1 = (eig.U.transpose() * prior.apply_precision(m1)).array();
    const Eigen::ArrayXd yh = (eig.U.transpose() * Cmh).array();
    const Eigen::ArrayXd gx = (eig.U.transpose() * Cg).array();
    const Eigen::ArrayXd a = d * y1 - gx;
    // Replace the complement-only gradient terms in the eigen-directions by the full ones.
    out += -dt / 8.0 * ((a.square() / (1.0 + d)).sum() - gx.square().sum());
    out += 0.5 * std::sqrt(dt) * ((a * yh).sum() + (gx * yh).sum());
    out += -0.5 * (d * yh.square()).sum() + 0.5 * d.log1p().sum();
  }
  return out;
}

double laplace_log_density_ratio(const GaussianPrior& prior, const LaplacePack& laplace, const Vector& m) {
  const Vector Cm = prior.apply_precision(m);
  double out = Cm.dot(laplace.m_map);
  if (laplace.eig.rank() > 0) {
    const Vector proj = laplace.eig.U.transpose() * prior.apply_precision(Vector(m - laplace.m_map));
    out -= 0.5 * (laplace.eig.d.array() * proj.array().square()).sum();
  }
  return out;
}

Vector laplace_sample(const GaussianPrior& prior, const LaplacePack& laplace, Rng& rng) {
  Vector xi = prior.sample(rng);
  if (laplace.eig.rank() > 0) {
    const Eigen::ArrayXd scale = (1.0 + laplace.eig.d.array()).rsqrt() - 1.0;
    const Eigen::ArrayXd zx = (laplace.eig.U.transpose() * prior.apply_precision(xi)).array();
    xi += laplace.eig.U * (scale * zx).matrix();
  }
  return laplace.m_map + xi;
}

namespace {

bool metropolis(Rng& rng, double log_alpha) {
  if (std::isnan(log_alpha)) return false;
  if (log_alpha >= 0.0) {
    uniform01(rng);  // keep the stream aligned regardless of the outcome
    return true;
  }
  double u = uniform01(rng);
  while (u <= 0.0) u = uniform01(rng);
  return std::log(u) < log_alpha;
}

class PcnKernel : public Kernel {
 public:
  PcnKernel(ModelConstPtr model, double dt) : Kernel(KernelKind::Pcn, dt), model_(std::move(model)) {}

  void initialize(const Vector& m0) override {
    const auto p = model_->evaluate(m0);
    counters_.forward_solves += 1;
    m_ = m0;
    phi_ = misfit(*model_, p->observable());
  }

  StepFlags step(Rng& rng) override {
    StepFlags f;
    const Vector z = model_->prior().sample(rng);
    counters_.prior_draws += 1;
    const Vector prop = s() * m_ + std::sqrt(1.0 - s() * s()) * z;
    double phi_p;
    try {
      phi_p = misfit(*model_, model_->evaluate(prop)->observable());
      counters_.forward_solves += 1;
    } catch (const SolverError&) {
      counters_.solver_failures += 1;
      f.failed = true;
      f.log_alpha = -std::numeric_limits<double>::infinity();
      uniform01(rng);
      return f;
    }
    f.log_alpha = phi_ - phi_p;
    f.accepted = metropolis(rng, f.log_alpha);
    if (f.accepted) {
      m_ = prop;
      phi_ = phi_p;
    }
    return f;
  }

  const Vector& position() const override { return m_; }
  double current_misfit() const override { return phi_; }

 private:
  ModelConstPtr model_;
  Vector m_;
  double phi_ = 0.0;
};

enum class GeometryMode { GradientOnly, TrueHessian, FixedBasis };

class ManifoldKernel : public Kernel {
 public:
  ManifoldKernel(KernelKind kind, ModelConstPtr model, double dt, GeometryMode mode, LowRankEig fixed = {})
      : Kernel(kind, dt), model_(std::move(model)), mode_(mode), fixed_(std::move(fixed)) {
    if (mode_ != GeometryMode::FixedBasis) {
      fixed_.U.resize(model_->parameter_dim(), 0);
      fixed_.d.resize(0);
    }
  }

  void initialize(const Vector& m0) override {
    State st = evaluate_state(m0);
    cur_ = std::move(st);
  }

  StepFlags step(Rng& rng) override {
    StepFlags f;
    const GaussianPrior& prior = model_->prior();
    const Vector z = prior.sample(rng);
    counters_.prior_draws += 1;
    const double sc = std::sqrt(1.0 - s() * s());
    Vector prop = s() * cur_.m - (1.0 - s()) * cur_.g + sc * z;
    const LowRankEig& eig = cur_.eig;
    if (eig.rank() > 0) {
      const Eigen::ArrayXd d = eig.d.array();
      const Eigen::ArrayXd x = (eig.U.transpose() * prior.apply_precision(cur_.m)).array();
      const Eigen::ArrayXd gx = (eig.U.transpose() * prior.apply_precision(cur_.g)).array();
      const Eigen::ArrayXd zx = (eig.U.transpose() * prior.apply_precision(z)).array();
      const Eigen::ArrayXd coeff = ((d + s()) / (d + 1.0) - s()) * x - ((1.0 - s()) / (d + 1.0) - (1.0 - s())) * gx +
                                   (((1.0 - s() * s()) / (d + 1.0)).sqrt() - sc) * zx;
      prop += eig.U * coeff.matrix();
    }
    State next;
    try {
      next = evaluate_state(prop);
    } catch (const SolverError&) {
      counters_.solver_failures += 1;
      f.failed = true;
      f.log_alpha = -std::numeric_limits<double>::infinity();
      uniform01(rng);
      return f;
    }
    f.log_alpha = cur_.phi - next.phi + log_rho0_full(prior, next.eig, next.g, next.m, cur_.m, dt()) -
                  log_rho0_full(prior, cur_.eig, cur_.g, cur_.m, next.m, dt());
    f.accepted = metropolis(rng, f.log_alpha);
    if (f.accepted) cur_ = std::move(next);
    return f;
  }

  const Vector& position() const override { return cur_.m; }
  double current_misfit() const override { return cur_.phi; }

 private:
  struct State {
    Vector m;
    double phi = 0.0;
    Vector g;
    LowRankEig eig;
  };

  State evaluate_state(const Vector& m) {
    State st;
    const auto p = model_->evaluate(m);
    counters_.forward_solves += 1;
    st.m = m;
    st.phi = misfit(*model_, p->observable());
    st.g = ppg(*model_, *p);
    counters_.vjp_solves += 1;
    if (mode_ == GeometryMode::TrueHessian) {
      st.eig = ppgnh_eig(*model_, *p, model_->observable_dim(), &counters_);
    } else {
      st.eig = fixed_;
    }
    return st;
  }

  ModelConstPtr model_;
  GeometryMode mode_;
  LowRankEig fixed_;
  State cur_;
};

class LaPcnKernel : public Kernel {
 public:
  LaPcnKernel(ModelConstPtr model, LaplacePack laplace, double dt)
      : Kernel(KernelKind::LaPcn, dt), model_(std::move(model)), laplace_(std::move(laplace)) {
    require_dim(laplace_.m_map.size(), model_->parameter_dim(), "LA-pCN MAP point");
    scale_ = (1.0 + laplace_.eig.d.array()).rsqrt() - 1.0;
  }

  void initialize(const Vector& m0) override {
    const auto p = model_->evaluate(m0);
    counters_.forward_solves += 1;
    m_ = m0;
    phi_ = misfit(*model_, p->observable());
    ell_ = laplace_log_density_ratio(model_->prior(), laplace_, m_);
  }

  StepFlags step(Rng& rng) override {
    StepFlags f;
    const GaussianPrior& prior = model_->prior();
    Vector xi = prior.sample(rng);
    counters_.prior_draws += 1;
    if (laplace_.eig.rank() > 0) {
      const Eigen::ArrayXd zx = (laplace_.eig.U.transpose() * prior.apply_precision(xi)).array();
      xi += laplace_.eig.U * (scale_ * zx).matrix();
    }
    const Vector prop = laplace_.m_map + s() * (m_ - laplace_.m_map) + std::sqrt(1.0 - s() * s()) * xi;
    double phi_p;
    try {
      phi_p = misfit(*model_, model_->evaluate(prop)->observable());
      counters_.forward_solves += 1;
    } catch (const SolverError&) {
      counters_.solver_failures += 1;
      f.failed = true;
      f.log_alpha = -std::numeric_limits<double>::infinity();
      uniform01(rng);
      return f;
    }
    const double ell_p = laplace_log_density_ratio(prior, laplace_, prop);
    f.log_alpha = (phi_ + ell_) - (phi_p + ell_p);
    f.accepted = metropolis(rng, f.log_alpha);
    if (f.accepted) {
      m_ = prop;
      phi_ = phi_p;
      ell_ = ell_p;
    }
    return f;
  }

  const Vector& position() const override { return m_; }
  double current_misfit() const override { return phi_; }

 private:
  ModelConstPtr model_;
  LaplacePack laplace_;
  Eigen::ArrayXd scale_;
  Vector m_;
  double phi_ = 0.0;
  double ell_ = 0.0;
};

class SurrogateKernel : public Kernel {
 public:
  SurrogateKernel(ModelConstPtr model, ReducedBasis basis, ReducedMapPtr map, double dt, bool da)
      : Kernel(da ? KernelKind::DaSurrogateMmala : KernelKind::SurrogateMmala, dt), model_(std::move(model)),
        basis_(std::move(basis)), map_(std::move(map)), da_(da) {
    require_dim(basis_.parameter_dim(), model_->parameter_dim(), "surrogate kernel basis");
    require_dim(map_->input_dim(), basis_.rank(), "surrogate kernel map input");
    require_dim(map_->output_dim(), model_->observable_dim(), "surrogate kernel map output");
    y_proj_ = project_observable(*model_, model_->data());
  }

  void initialize(const Vector& m0) override {
    const auto p = model_->evaluate(m0);
    counters_.forward_solves += 1;
    m_ = m0;
    phi_ = misfit(*model_, p->observable());
    m_r_ = basis_.encode(m_);
    pack_ = surrogate_geometry(*map_, m_r_, y_proj_, &counters_);
  }

  StepFlags step(Rng& rng) override {
    StepFlags f;
    const Vector xi = standard_normal(rng, basis_.rank());
    const Vector mr_p = reduced_proposal_sample(pack_, m_r_, s(), xi);
    GeometryPack pack_p;
    try {
      pack_p = surrogate_geometry(*map_, mr_p, y_proj_, &counters_);
    } catch (const SolverError&) {
      // Sample-average maps solve the true model inside the surrogate.
      counters_.solver_failures += 1;
      f.failed = true;
      f.stage1_pass = false;
      f.log_alpha = -std::numeric_limits<double>::infinity();
      uniform01(rng);
      return f;
    }
    const double log_prop = log_rho0_reduced(pack_p, mr_p, m_r_, dt()) - log_rho0_reduced(pack_, m_r_, mr_p, dt());

    if (da_) {
      const double log_a1 = pack_.misfit - pack_p.misfit + log_prop;
      if (!metropolis(rng, log_a1)) {
        f.stage1_pass = false;
        f.log_alpha = log_a1;
        return f;
      }
    }

    const Vector z = model_->prior().sample(rng);
    counters_.prior_draws += 1;
    const Vector perp = s() * m_ + std::sqrt(1.0 - s() * s()) * z;
    const Vector prop = basis_.decode(mr_p) + perp - basis_.project(perp);
    double phi_p;
    try {
      phi_p = misfit(*model_, model_->evaluate(prop)->observable());
      counters_.forward_solves += 1;
    } catch (const SolverError&) {
      counters_.solver_failures += 1;
      f.failed = true;
      f.log_alpha = -std::numeric_limits<double>::infinity();
      uniform01(rng);
      return f;
    }
    f.log_alpha = da_ ? (phi_ - phi_p + pack_p.misfit - pack_.misfit) : (phi_ - phi_p + log_prop);
    f.accepted = metropolis(rng, f.log_alpha);
    if (f.accepted) {
      m_ = prop;
      phi_ = phi_p;
      m_r_ = mr_p;
      pack_ = std::move(pack_p);
    }
    return f;
  }

  const Vector& position() const override { return m_; }
  double current_misfit() const override { return phi_; }

 private:
  ModelConstPtr model_;
  ReducedBasis basis_;
  ReducedMapPtr map_;
  bool da_;
  Vector y_proj_;
  Vector m_;
  double phi_ = 0.0;
  Vector m_r_;
  GeometryPack pack_;
};

}  // namespace

std::unique_ptr<Kernel> make_pcn_kernel(ModelConstPtr model, double dt) {
  return std::make_unique<PcnKernel>(std::move(model), dt);
}

std::unique_ptr<Kernel> make_mala_kernel(ModelConstPtr model, double dt) {
  return std::make_unique<ManifoldKernel>(KernelKind::Mala, std::move(model), dt, GeometryMode::GradientOnly);
}

std::unique_ptr<Kernel> make_mmala_kernel(ModelConstPtr model, double dt) {
  return std::make_unique<ManifoldKernel>(KernelKind::Mmala, std::move(model), dt, GeometryMode::TrueHessian);
}

std::unique_ptr<Kernel> make_dis_mmala_kernel(ModelConstPtr model, const ReducedBasis& basis, double dt) {
  require_dim(basis.parameter_dim(), model->parameter_dim(), "DIS-mMALA basis");
  LowRankEig eig{basis.decoder(), basis.eigenvalues()};
  return std::make_unique<ManifoldKernel>(KernelKind::DisMmala, std::move(model), dt, GeometryMode::FixedBasis,
                                          std::move(eig));
}

std::unique_ptr<Kernel> make_lapcn_kernel(ModelConstPtr model, const LaplacePack& laplace, double dt) {
  return std::make_unique<LaPcnKernel>(std::move(model), laplace, dt);
}

std::unique_ptr<Kernel> make_surrogate_mmala_kernel(ModelConstPtr model, const ReducedBasis& basis,
                                                    ReducedMapPtr map, double dt, bool delayed_acceptance) {
  return std::make_unique<SurrogateKernel>(std::move(model), basis, std::move(map), dt, delayed_acceptance);
}

}  // namespace dinomc
