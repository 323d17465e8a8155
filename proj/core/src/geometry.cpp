#include "dinomc/geometry.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace dinomc {

Vector ppg(const ForwardModel& model, const ModelPoint& point) { return misfit_gradient(model, point); }

LowRankEig ppgnh_eig(const ForwardModel& model, const ModelPoint& point, Index k, CostCounters* counters) {
  const Index dy = model.observable_dim();
  if (k < 0 || k > dy) throw ParameterError("ppgnh_eig: rank must lie in [0, d_y]");
  LowRankEig out;
  if (k == 0) {
    out.U.resize(model.parameter_dim(), 0);
    out.d.resize(0);
    return out;
  }
  const Matrix rows = whitened_dual_rows(model, point, counters);
  const Matrix CR = model.prior().apply_covariance(Matrix(rows.transpose()));
  const Matrix gram = rows * CR;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (gram + gram.transpose()));
  if (es.info() != Eigen::Success) throw std::runtime_error("ppgnh_eig: eigensolve failed");
  const Vector lam = es.eigenvalues().reverse();
  const Matrix Q = es.eigenvectors().rowwise().reverse();
  const double cut = 1e-12 * std::max(lam[0], 0.0);
  Index keep = 0;
  while (keep < k && lam[keep] > cut && lam[keep] > 0.0) ++keep;
  out.d = lam.head(keep);
  out.U = CR * Q.leftCols(keep);
  for (Index j = 0; j < keep; ++j) out.U.col(j) /= std::sqrt(lam[j]);
  return out;
}

Vector apply_inverse_shifted(const GaussianPrior& prior, const LowRankEig& eig, const Vector& x) {
  if (eig.rank() == 0) return x;
  const Vector coeff = eig.U.transpose() * prior.apply_precision(x);
  const Vector w = eig.d.array() / (1.0 + eig.d.array());
  return x - eig.U * coeff.cwiseProduct(w);
}

namespace {

struct Evaluated {
  std::unique_ptr<ModelPoint> point;
  double objective = 0.0;
};

Evaluated evaluate_objective(const ForwardModel& model, const Vector& m, CostCounters* counters) {
  Evaluated e;
  e.point = model.evaluate(m);
  if (counters) counters->forward_solves += 1;
  e.objective = misfit(model, e.point->observable()) + 0.5 * model.prior().cm_norm_sq(m);
  return e;
}

}  // namespace

LaplacePack map_estimate(const ForwardModel& model, const Vector& start, const MapOptions& options,
                         CostCounters* counters) {
  const GaussianPrior& prior = model.prior();
  require_dim(start.size(), prior.dim(), "map_estimate start");
  if (!start.allFinite()) throw ParameterError("map_estimate: start is not finite");

  Vector m = start;
  Evaluated cur = evaluate_objective(model, m, counters);
  LaplacePack pack;
  double g0 = -1.0;
  int it = 0;
  for (;; ++it) {
    Vector g = m + ppg(model, *cur.point);
    if (counters) counters->vjp_solves += 1;
    const Vector Cg = prior.apply_precision(g);
    const double gnorm = std::sqrt(std::max(g.dot(Cg), 0.0));
    if (g0 < 0.0) g0 = gnorm;
    pack.gradient_norm = gnorm;
    if (gnorm <= options.gradient_tolerance) {
      pack.converged = true;
      break;
    }
    if (it >= options.max_iterations) break;

    // CG on (I + H) p = -g in the CM inner product.
    const double eta = std::min(options.cg_forcing, std::sqrt(gnorm / std::max(g0, 1e-300)));
    const double cg_tol = eta * gnorm;
    Vector p = Vector::Zero(m.size());
    Vector res = -g;
    Vector Cres = -Cg;
    Vector dir = res;
    double rr = res.dot(Cres);
    for (int k = 0; k < options.cg_max_iterations && std::sqrt(rr) > cg_tol; ++k) {
      const Vector Hd = dir + vjp(model, *cur.point, cur.point->jvp(dir));
      if (counters) {
        counters->jvp_solves += 1;
        counters->vjp_solves += 1;
      }
      const double dHd = dir.dot(prior.apply_precision(Hd));
      if (!(dHd > 0.0)) break;
      const double alpha = rr / dHd;
      p += alpha * dir;
      res -= alpha * Hd;
      Cres = prior.apply_precision(res);
      const double rr_new = res.dot(Cres);
      dir = res + (rr_new / rr) * dir;
      rr = rr_new;
    }
    if (p.isZero(0.0)) p = -g;

    const double slope = p.dot(Cg);
    double step = 1.0;
    bool accepted = false;
    for (int b = 0; b <= options.max_backtracks; ++b) {
      const Vector trial = m + step * p;
      try {
        Evaluated e = evaluate_objective(model, trial, counters);
        if (e.objective <= cur.objective + options.armijo * step * slope) {
          m = trial;
          cur = std::move(e);
          accepted = true;
          break;
        }
      } catch (const SolverError&) {
        if (counters) counters->solver_failures += 1;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }
  pack.iterations = it;
  pack.objective = cur.objective;
  pack.m_map = m;
  pack.eig = ppgnh_eig(model, *cur.point, model.observable_dim(), counters);
  return pack;
}

GeometryPack surrogate_geometry(const ReducedMap& map, const Vector& m_r, const Vector& y_proj,
                                CostCounters* counters) {
  require_dim(m_r.size(), map.input_dim(), "surrogate_geometry point");
  require_dim(y_proj.size(), map.output_dim(), "surrogate_geometry data");
  ReducedEval e = map.evaluate(m_r, counters);
  GeometryPack pack;
  const Vector res = e.value - y_proj;
  pack.misfit = 0.5 * res.squaredNorm();
  pack.gradient = e.jacobian.transpose() * res;
  const Matrix H = e.jacobian.transpose() * e.jacobian;
  Eigen::SelfAdjointEigenSolver<Matrix> es(H);
  if (es.info() != Eigen::Success) throw std::runtime_error("surrogate_geometry: eigensolve failed");
  pack.d = es.eigenvalues().reverse().cwiseMax(0.0);
  pack.P = es.eigenvectors().rowwise().reverse();
  pack.value = std::move(e.value);
  pack.jacobian = std::move(e.jacobian);
  return pack;
}

}  // namespace dinomc
