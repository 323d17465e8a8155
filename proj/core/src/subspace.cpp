#include "dinomc/subspace.hpp"

#include "dinomc/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <optional>

namespace dinomc {

std::string to_string(BasisKind k) {
  switch (k) {
    case BasisKind::KLE: return "KLE";
    case BasisKind::DIS: return "DIS";
    case BasisKind::Custom: return "custom";
  }
  return "custom";
}

BasisKind basis_kind_from_string(const std::string& s) {
  if (s == "KLE") return BasisKind::KLE;
  if (s == "DIS") return BasisKind::DIS;
  if (s == "custom") return BasisKind::Custom;
  throw ConfigError("unknown basis kind '" + s + "'");
}

ReducedBasis::ReducedBasis(PriorPtr prior, Matrix decoder, Vector eigenvalues, Vector spectrum, BasisKind kind)
    : prior_(std::move(prior)), decoder_(std::move(decoder)), eigenvalues_(std::move(eigenvalues)),
      spectrum_(std::move(spectrum)), kind_(kind) {
  require_dim(decoder_.rows(), prior_->dim(), "basis rows");
  require_dim(eigenvalues_.size(), decoder_.cols(), "basis eigenvalues");
  if (spectrum_.size() < eigenvalues_.size()) throw DimensionError("basis spectrum shorter than rank");
  encoder_ = prior_->apply_precision(decoder_).transpose();
}

Vector ReducedBasis::encode(const Vector& m) const {
  require_dim(m.size(), parameter_dim(), "encode");
  return encoder_ * m;
}

Matrix ReducedBasis::encode(const Matrix& m) const {
  require_dim(m.rows(), parameter_dim(), "encode");
  return encoder_ * m;
}

Vector ReducedBasis::decode(const Vector& x) const {
  require_dim(x.size(), rank(), "decode");
  return decoder_ * x;
}

Vector ReducedBasis::encode_dual(const Vector& w) const {
  require_dim(w.size(), parameter_dim(), "encode_dual");
  return decoder_.transpose() * w;
}

ReducedBasis ReducedBasis::truncated(Index r) const {
  if (r < 1 || r > rank()) throw ParameterError("truncated: rank out of range");
  ReducedBasis b(prior_, decoder_.leftCols(r), eigenvalues_.head(r), spectrum_, kind_);
  b.samples_used = samples_used;
  return b;
}

double ReducedBasis::truncation_tail(Index r_prime) const {
  if (r_prime < 0) throw ParameterError("truncation_tail: negative rank");
  if (r_prime >= spectrum_.size()) return 0.0;
  return spectrum_.tail(spectrum_.size() - r_prime).sum();
}

namespace {

// Descending eigenpairs of a symmetric matrix.
void descending_eigen(const Matrix& S, Vector& values, Matrix& vectors) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(S);
  if (es.info() != Eigen::Success) throw std::runtime_error("symmetric eigensolve failed");
  values = es.eigenvalues().reverse();
  vectors = es.eigenvectors().rowwise().reverse();
}

}  // namespace

ReducedBasis kle_basis(const PriorPtr& prior, Index r) {
  const Index d = prior->dim();
  if (r < 1 || r > d) throw ParameterError("kle_basis: rank must lie in [1, d_m]");
  // A e = alpha e gives C eigenpairs lambda = h^4 / alpha^2 and CM-unit columns h e / alpha.
  const Matrix A(prior->precision_factor());
  Eigen::SelfAdjointEigenSolver<Matrix> es(A);
  if (es.info() != Eigen::Success) throw std::runtime_error("kle_basis: eigensolve failed");
  const double h = prior->grid().h;
  const Vector alpha = es.eigenvalues();
  Vector spectrum(d);
  for (Index k = 0; k < d; ++k) spectrum[k] = std::pow(h, 4) / (alpha[k] * alpha[k]);
  Matrix psi(d, r);
  for (Index k = 0; k < r; ++k) psi.col(k) = es.eigenvectors().col(k) * (h / alpha[k]);
  ReducedBasis b(prior, std::move(psi), spectrum.head(r), spectrum, BasisKind::KLE);
  return b;
}

ReducedBasis dis_basis(const ForwardModel& model, const DisOptions& options, CostCounters* counters) {
  const GaussianPrior& prior = model.prior();
  const Index d = prior.dim();
  if (options.rank < 1 || options.rank > d) throw ParameterError("dis_basis: rank must lie in [1, d_m]");
  if (options.samples < 1) throw ParameterError("dis_basis: need at least one sample");
  if (!model.has_data()) throw ConfigError("dis_basis: model noise level not set");

  const std::size_t n = static_cast<std::size_t>(options.samples);
  std::vector<std::optional<Matrix>> whitened(n);
  std::vector<CostCounters> local(n);
  parallel_for(n, options.threads, [&](std::size_t k) {
    Rng rng(derive_seed(options.seed, 0xD15, k));
    const Vector m = prior.sample(rng);
    local[k].prior_draws += 1;
    try {
      auto point = model.evaluate(m);
      local[k].forward_solves += 1;
      const Matrix rows = whitened_dual_rows(model, *point, &local[k]);
      // L^T w with L = h A^{-1}: whitened gradient rows.
      whitened[k] = prior.unwhiten(Matrix(rows.transpose())).transpose();
    } catch (const SolverError&) {
      local[k].solver_failures += 1;
    }
  });

  Matrix H = Matrix::Zero(d, d);
  int ok = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (counters) *counters += local[k];
    if (!whitened[k]) continue;
    H.noalias() += whitened[k]->transpose() * (*whitened[k]);
    ++ok;
  }
  if (2 * ok < options.samples) {
    throw SolverError("dis_basis: fewer than half of the forward solves succeeded", 0.0, ok);
  }
  H /= ok;

  Vector values;
  Matrix Q;
  descending_eigen(H, values, Q);
  values = values.cwiseMax(0.0);
  const Matrix psi = prior.unwhiten(Matrix(Q.leftCols(options.rank)));
  ReducedBasis b(model.prior_ptr(), psi, values.head(options.rank), values, BasisKind::DIS);
  b.samples_used = ok;
  return b;
}

Matrix reduced_jacobian(const ForwardModel& model, const ModelPoint& point, const ReducedBasis& basis,
                        CostCounters* counters) {
  require_dim(basis.parameter_dim(), model.parameter_dim(), "reduced_jacobian basis");
  const Index dy = model.observable_dim();
  const Index r = basis.rank();
  Matrix Jr(dy, r);
  if (dy <= r) {
    const Matrix rows = whitened_dual_rows(model, point, counters);
    Jr = rows * basis.decoder();
  } else {
    const double sn = std::sqrt(model.noise_variance());
    for (Index k = 0; k < r; ++k) Jr.col(k) = point.jvp(basis.decoder().col(k)) / sn;
    if (counters) counters->jvp_solves += static_cast<std::uint64_t>(r);
  }
  return Jr;
}

Vector project_observable(const ForwardModel& model, const Vector& observable) {
  require_dim(observable.size(), model.observable_dim(), "project_observable");
  return observable / std::sqrt(model.noise_variance());
}

PoincareEstimate poincare_estimate(const ForwardModel& model, int samples, std::uint64_t seed, int threads,
                                   CostCounters* counters) {
  if (samples < 2) throw ParameterError("poincare_estimate: need at least two samples");
  if (!model.has_data()) throw ConfigError("poincare_estimate: model noise level not set");
  const GaussianPrior& prior = model.prior();
  const std::size_t n = static_cast<std::size_t>(samples);
  std::vector<std::optional<Vector>> outputs(n);
  std::vector<double> hs(n, 0.0);
  std::vector<CostCounters> local(n);
  parallel_for(n, threads, [&](std::size_t k) {
    Rng rng(derive_seed(seed, 0x9C4E, k));
    const Vector m = prior.sample(rng);
    local[k].prior_draws += 1;
    try {
      auto point = model.evaluate(m);
      local[k].forward_solves += 1;
      const Matrix rows = whitened_dual_rows(model, *point, &local[k]);
      // |row_j|_C^2 summed over j is |D_H T|_HS^2.
      hs[k] = prior.unwhiten(Matrix(rows.transpose())).squaredNorm();
      outputs[k] = project_observable(model, point->observable());
    } catch (const SolverError&) {
      local[k].solver_failures += 1;
    }
  });

  std::vector<std::size_t> ok;
  for (std::size_t k = 0; k < n; ++k) {
    if (counters) *counters += local[k];
    if (outputs[k]) ok.push_back(k);
  }
  if (ok.size() < 2) throw SolverError("poincare_estimate: too few successful solves", 0.0, static_cast<int>(ok.size()));
  const double N = static_cast<double>(ok.size());
  Vector mean = Vector::Zero(model.observable_dim());
  for (auto k : ok) mean += *outputs[k];
  mean /= N;

  PoincareEstimate est;
  est.samples_used = static_cast<int>(ok.size());
  std::vector<double> q;
  for (auto k : ok) {
    q.push_back((*outputs[k] - mean).squaredNorm() * N / (N - 1.0));
    est.variance += q.back();
    est.gradient_hs += hs[k];
  }
  est.variance /= N;
  est.gradient_hs /= N;
  est.ratio = est.variance / est.gradient_hs;
  double s2 = 0.0;
  for (std::size_t i = 0; i < ok.size(); ++i) {
    const double z = (q[i] - est.ratio * hs[ok[i]]) / est.gradient_hs;
    s2 += z * z;
  }
  est.ratio_sigma = std::sqrt(s2 / (N - 1.0) / N);
  return est;
}

}  // namespace dinomc
