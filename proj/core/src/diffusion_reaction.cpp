#include "dinomc/diffusion_reaction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace dinomc {

std::vector<ObservationPoint> random_observation_points(int count, std::uint64_t seed, double lo, double hi) {
  if (count <= 0) throw ParameterError("observation count must be positive");
  if (!(lo < hi)) throw ParameterError("observation box is empty");
  Rng rng(seed);
  std::vector<ObservationPoint> pts(static_cast<std::size_t>(count));
  for (auto& p : pts) {
    p.x = lo + (hi - lo) * uniform01(rng);
    p.y = lo + (hi - lo) * uniform01(rng);
  }
  return pts;
}

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

class DiffusionReactionPoint : public ModelPoint {
 public:
  DiffusionReactionPoint(Vector m, Vector u, Vector G, SparseMatrix B, SparseMatrix O, double v_n,
                         const SparseMatrix& J)
      : m_(std::move(m)), u_(std::move(u)), G_(std::move(G)), B_(std::move(B)), O_(std::move(O)), v_n_(v_n) {
    llt_.compute(J);
    if (llt_.info() != Eigen::Success) throw SolverError("forward solve: Jacobian not SPD at solution", 0.0, 0);
  }

  const Vector& parameter() const override { return m_; }
  const Vector& observable() const override { return G_; }

  Vector jvp(const Vector& dm) const override {
    require_dim(dm.size(), m_.size(), "jvp");
    const Vector rhs = B_ * dm;
    const Vector du = llt_.solve(rhs);
    return -(O_ * du);
  }

  Vector adjoint_dual(const Vector& dy) const override {
    require_dim(dy.size(), G_.size(), "adjoint_dual");
    const Vector rhs = O_.transpose() * (dy / v_n_);
    const Vector lam = llt_.solve(rhs);
    return -(B_.transpose() * lam);
  }

 private:
  Vector m_, u_, G_;
  SparseMatrix B_;
  SparseMatrix O_;
  double v_n_;
  Eigen::SimplicialLLT<SparseMatrix> llt_;
};

}  // namespace

DiffusionReactionModel::DiffusionReactionModel(PriorPtr prior, std::vector<ObservationPoint> points,
                                               NewtonOptions options)
    : ForwardModel(std::move(prior)), points_(std::move(points)), options_(options) {
  if (points_.empty()) throw ParameterError("diffusion-reaction: no observation points");
  if (!(options_.tolerance > 0.0) || options_.max_iterations <= 0 || options_.max_halvings < 0) {
    throw ParameterError("diffusion-reaction: invalid Newton options");
  }
  const Grid& g = this->prior().grid();
  const int n = g.n;
  Triplets trip;
  c_ = Vector::Zero(observable_dim());
  for (std::size_t k = 0; k < points_.size(); ++k) {
    const auto& p = points_[k];
    if (!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0)) {
      throw ParameterError("observation point outside the unit square");
    }
    // x nodes exist only at interior columns; the side walls carry no nodes.
    double tx = std::clamp(p.x / g.h - 1.0, 0.0, static_cast<double>(n - 1));
    int i0 = std::min(static_cast<int>(std::floor(tx)), n - 2);
    double fx = tx - i0;
    // y rows include both Dirichlet boundaries: row 0 at y = 0, row n+1 at y = 1.
    double ty = std::clamp(p.y / g.h, 0.0, static_cast<double>(n + 1));
    int r0 = std::min(static_cast<int>(std::floor(ty)), n);
    double fy = ty - r0;
    const double w[2][2] = {{(1 - fx) * (1 - fy), fx * (1 - fy)}, {(1 - fx) * fy, fx * fy}};
    for (int a = 0; a < 2; ++a) {
      const int row = r0 + a;
      for (int b = 0; b < 2; ++b) {
        const double wt = w[a][b];
        if (wt == 0.0) continue;
        if (row == 0) continue;
        if (row == n + 1) {
          c_[static_cast<Index>(k)] += wt;
          continue;
        }
        trip.emplace_back(static_cast<Index>(k), g.index(i0 + b, row - 1), wt);
      }
    }
  }
  O_.resize(observable_dim(), g.dofs());
  O_.setFromTriplets(trip.begin(), trip.end());
  O_.makeCompressed();
}

namespace {

// Calls f(p, q, k_pq, dk/dm_p, dk/dm_q) for interior faces and f(p, -1|-2, k, dk, 0) for
// bottom (-1, u = 0) and top (-2, u = 1) Dirichlet faces.
template <class F>
void for_each_face(const Grid& g, const Vector& e, F&& f) {
  const int n = g.n;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const Index p = g.index(i, j);
      if (i + 1 < n) {
        const Index q = g.index(i + 1, j);
        f(p, q, 0.5 * (e[p] + e[q]), 0.5 * e[p], 0.5 * e[q]);
      }
      if (j + 1 < n) {
        const Index q = g.index(i, j + 1);
        f(p, q, 0.5 * (e[p] + e[q]), 0.5 * e[p], 0.5 * e[q]);
      }
      if (j == 0) f(p, Index{-1}, e[p], e[p], 0.0);
      if (j == n - 1) f(p, Index{-2}, e[p], e[p], 0.0);
    }
  }
}

}  // namespace

Vector DiffusionReactionModel::residual(const Vector& u, const Vector& m) const {
  const Grid& g = prior().grid();
  require_dim(u.size(), g.dofs(), "residual state");
  require_dim(m.size(), g.dofs(), "residual parameter");
  const Vector e = m.array().exp().matrix();
  Vector R = Vector::Zero(g.dofs());
  for_each_face(g, e, [&](Index p, Index q, double k, double, double) {
    if (q >= 0) {
      const double flux = k * (u[p] - u[q]);
      R[p] += flux;
      R[q] -= flux;
    } else {
      const double ub = (q == -1) ? 0.0 : 1.0;
      R[p] += k * (u[p] - ub);
    }
  });
  if (reaction_) R += g.mass() * u.array().cube().matrix();
  return R;
}

SparseMatrix DiffusionReactionModel::state_jacobian(const Vector& u, const Vector& m) const {
  const Grid& g = prior().grid();
  require_dim(u.size(), g.dofs(), "state_jacobian state");
  require_dim(m.size(), g.dofs(), "state_jacobian parameter");
  const Vector e = m.array().exp().matrix();
  Triplets trip;
  trip.reserve(static_cast<std::size_t>(5 * g.dofs()));
  for_each_face(g, e, [&](Index p, Index q, double k, double, double) {
    trip.emplace_back(p, p, k);
    if (q >= 0) {
      trip.emplace_back(q, q, k);
      trip.emplace_back(p, q, -k);
      trip.emplace_back(q, p, -k);
    }
  });
  if (reaction_) {
    for (Index p = 0; p < g.dofs(); ++p) trip.emplace_back(p, p, 3.0 * g.mass() * u[p] * u[p]);
  }
  SparseMatrix J(g.dofs(), g.dofs());
  J.setFromTriplets(trip.begin(), trip.end());
  J.makeCompressed();
  return J;
}

SparseMatrix DiffusionReactionModel::parameter_jacobian(const Vector& u, const Vector& m) const {
  const Grid& g = prior().grid();
  require_dim(u.size(), g.dofs(), "parameter_jacobian state");
  require_dim(m.size(), g.dofs(), "parameter_jacobian parameter");
  const Vector e = m.array().exp().matrix();
  Triplets trip;
  trip.reserve(static_cast<std::size_t>(9 * g.dofs()));
  for_each_face(g, e, [&](Index p, Index q, double, double dkp, double dkq) {
    if (q >= 0) {
      const double du = u[p] - u[q];
      trip.emplace_back(p, p, dkp * du);
      trip.emplace_back(p, q, dkq * du);
      trip.emplace_back(q, p, -dkp * du);
      trip.emplace_back(q, q, -dkq * du);
    } else {
      const double ub = (q == -1) ? 0.0 : 1.0;
      trip.emplace_back(p, p, dkp * (u[p] - ub));
    }
  });
  SparseMatrix B(g.dofs(), g.dofs());
  B.setFromTriplets(trip.begin(), trip.end());
  B.makeCompressed();
  return B;
}

Vector DiffusionReactionModel::solve_state(const Vector& m) const {
  const Grid& g = prior().grid();
  require_dim(m.size(), g.dofs(), "forward parameter");
  if (!m.allFinite()) throw SolverError("forward solve: non-finite parameter", std::numeric_limits<double>::infinity(), 0);

  // Initial guess: the linear lifting u = y.
  Vector u(g.dofs());
  for (int j = 0; j < g.n; ++j)
    for (int i = 0; i < g.n; ++i) u[g.index(i, j)] = g.y(j);

  Eigen::SimplicialLLT<SparseMatrix> llt;
  Vector R = residual(u, m);
  double rnorm = R.norm();
  bool analyzed = false;
  int it = 0;
  for (; it < options_.max_iterations && rnorm > options_.tolerance; ++it) {
    const SparseMatrix J = state_jacobian(u, m);
    if (!analyzed) {
      llt.analyzePattern(J);
      analyzed = true;
    }
    llt.factorize(J);
    if (llt.info() != Eigen::Success) throw SolverError("forward solve: Jacobian not SPD", rnorm, it);
    const Vector du = llt.solve(R);
    double step = 1.0;
    bool improved = false;
    for (int k = 0; k <= options_.max_halvings; ++k) {
      Vector trial = u - step * du;
      Vector Rt = residual(trial, m);
      const double tn = Rt.norm();
      if (std::isfinite(tn) && tn < rnorm) {
        u = std::move(trial);
        R = std::move(Rt);
        rnorm = tn;
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) break;
  }
  if (!(rnorm <= options_.tolerance)) {
    std::ostringstream os;
    os << "forward solve did not converge: |R| = " << rnorm << " after " << it << " iterations";
    throw SolverError(os.str(), rnorm, it);
  }
  return u;
}

std::unique_ptr<ModelPoint> DiffusionReactionModel::evaluate(const Vector& m) const {
  Vector u = solve_state(m);
  const SparseMatrix J = state_jacobian(u, m);
  Vector G = O_ * u + c_;
  SparseMatrix B = parameter_jacobian(u, m);
  return std::make_unique<DiffusionReactionPoint>(m, std::move(u), std::move(G), std::move(B), O_,
                                                  noise_variance_, J);
}

}  // namespace dinomc
