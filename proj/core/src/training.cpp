#include "dinomc/training.hpp"

#include "dinomc/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

namespace dinomc {

Dataset Dataset::subset(const std::vector<Index>& idx) const {
  Dataset d;
  d.seed = seed;
  d.basis_id = basis_id;
  const Index n = static_cast<Index>(idx.size());
  const Index r = input_dim();
  d.X.resize(r, n);
  d.Y.resize(output_dim(), n);
  if (with_jacobian()) d.Jac.resize(output_dim(), r * n);
  for (Index k = 0; k < n; ++k) {
    const Index j = idx[static_cast<std::size_t>(k)];
    if (j < 0 || j >= size()) throw DimensionError("dataset subset index out of range");
    d.X.col(k) = X.col(j);
    d.Y.col(k) = Y.col(j);
    if (with_jacobian()) d.Jac.middleCols(k * r, r) = jacobian(j);
  }
  return d;
}

Dataset generate_dataset(const ForwardModel& model, const ReducedBasis& basis, const DatasetOptions& options,
                         CostCounters* counters) {
  if (options.samples < 1) throw ParameterError("generate_dataset: need at least one sample");
  if (!model.has_data()) throw ConfigError("generate_dataset: model noise level not set");
  require_dim(basis.parameter_dim(), model.parameter_dim(), "generate_dataset basis");

  struct Record {
    Vector x, y;
    Matrix J;
  };
  const Index r = basis.rank();
  const Index dy = model.observable_dim();
  std::vector<Record> kept;
  std::uint64_t attempted = 0;
  std::uint64_t failures = 0;
  CostCounters total;

  while (static_cast<Index>(kept.size()) < options.samples) {
    const std::size_t need = static_cast<std::size_t>(options.samples) - kept.size();
    std::vector<std::optional<Record>> batch(need);
    std::vector<CostCounters> local(need);
    parallel_for(need, options.threads, [&](std::size_t i) {
      Rng rng(derive_seed(options.seed, 0xDA7A, attempted + i));
      const Vector m = model.prior().sample(rng);
      local[i].prior_draws += 1;
      try {
        auto point = model.evaluate(m);
        local[i].forward_solves += 1;
        Record rec;
        rec.x = basis.encode(m);
        rec.y = project_observable(model, point->observable());
        if (options.with_jacobian) rec.J = reduced_jacobian(model, *point, basis, &local[i]);
        batch[i] = std::move(rec);
      } catch (const SolverError&) {
        local[i].solver_failures += 1;
      }
    });
    for (std::size_t i = 0; i < need; ++i) {
      total += local[i];
      if (batch[i]) {
        kept.push_back(std::move(*batch[i]));
      } else {
        ++failures;
      }
    }
    attempted += need;
    if (4 * failures > attempted) {
      throw SolverError("generate_dataset: more than 25% of forward solves failed", 0.0,
                        static_cast<int>(failures));
    }
  }
  if (counters) *counters += total;

  Dataset d;
  d.seed = options.seed;
  d.failures = failures;
  const Index n = options.samples;
  d.X.resize(r, n);
  d.Y.resize(dy, n);
  if (options.with_jacobian) d.Jac.resize(dy, r * n);
  for (Index k = 0; k < n; ++k) {
    auto& rec = kept[static_cast<std::size_t>(k)];
    d.X.col(k) = rec.x;
    d.Y.col(k) = rec.y;
    if (options.with_jacobian) d.Jac.middleCols(k * r, r) = rec.J;
  }
  return d;
}

std::string to_string(LossKind k) { return k == LossKind::L2 ? "L2" : "H1"; }

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "L2") return LossKind::L2;
  if (s == "H1") return LossKind::H1;
  throw ConfigError("unknown loss kind '" + s + "'");
}

namespace {

std::vector<Index> all_indices(Index n) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  return idx;
}

void check_loss_inputs(const Mlp& net, const Dataset& data, const std::vector<Index>& idx, LossKind kind) {
  if (idx.empty()) throw ParameterError("loss: empty batch");
  require_dim(data.input_dim(), net.input_dim(), "loss input");
  require_dim(data.output_dim(), net.output_dim(), "loss output");
  if (kind == LossKind::H1 && !data.with_jacobian()) throw ConfigError("H1 loss requires Jacobian samples");
}

double act(Activation a, double z) { return a == Activation::Gelu ? gelu(z) : z; }
double act1(Activation a, double z) { return a == Activation::Gelu ? gelu_prime(z) : 1.0; }
double act2(Activation a, double z) { return a == Activation::Gelu ? gelu_second(z) : 0.0; }

}  // namespace

LossValue evaluate_loss(const Mlp& net, const Dataset& data, LossKind kind) {
  return evaluate_loss(net, data, all_indices(data.size()), kind);
}

LossValue evaluate_loss(const Mlp& net, const Dataset& data, const std::vector<Index>& idx, LossKind kind) {
  check_loss_inputs(net, data, idx, kind);
  LossValue out;
  Vector f;
  Matrix J;
  for (Index j : idx) {
    if (kind == LossKind::H1) {
      net.forward_jacobian(data.X.col(j), f, J);
      out.jacobian += (J - data.jacobian(j)).squaredNorm();
    } else {
      f = net.forward(data.X.col(j));
    }
    out.observable += (f - data.Y.col(j)).squaredNorm();
  }
  const double scale = 0.5 / static_cast<double>(idx.size());
  out.observable *= scale;
  out.jacobian *= scale;
  out.total = out.observable + out.jacobian;
  return out;
}

LossValue loss_gradient(const Mlp& net, const Dataset& data, const std::vector<Index>& idx, LossKind kind,
                        Vector& gradient) {
  check_loss_inputs(net, data, idx, kind);
  const bool h1 = kind == LossKind::H1;
  const Activation a = net.activation();
  const std::size_t L = net.layer_count();
  const Index B = static_cast<Index>(idx.size());
  const Index r = net.input_dim();

  Matrix X(r, B), Y(net.output_dim(), B), Jd;
  if (h1) Jd.resize(net.output_dim(), r * B);
  for (Index k = 0; k < B; ++k) {
    const Index j = idx[static_cast<std::size_t>(k)];
    X.col(k) = data.X.col(j);
    Y.col(k) = data.Y.col(j);
    if (h1) Jd.middleCols(k * r, r) = data.jacobian(j);
  }

  // Forward: pre-activations Z, activations A, tangent pre-activations Zd = W T, tangents T.
  std::vector<Matrix> Z(L - 1), Zd(L - 1), Aact(L), T(L);
  Aact[0] = X;
  for (std::size_t l = 0; l + 1 < L; ++l) {
    Z[l] = net.weights[l] * Aact[l];
    Z[l].colwise() += net.biases[l];
    Aact[l + 1] = Z[l].unaryExpr([a](double v) { return act(a, v); });
    if (h1) {
      if (l == 0) {
        Zd[0].resize(net.weights[0].rows(), r * B);
        for (Index k = 0; k < B; ++k) Zd[0].middleCols(k * r, r) = net.weights[0];
      } else {
        Zd[l] = net.weights[l] * T[l];
      }
      const Matrix sp = Z[l].unaryExpr([a](double v) { return act1(a, v); });
      T[l + 1].resize(Zd[l].rows(), Zd[l].cols());
      for (Index k = 0; k < B; ++k)
        T[l + 1].middleCols(k * r, r) = sp.col(k).asDiagonal() * Zd[l].middleCols(k * r, r);
    }
  }
  Matrix out = net.weights[L - 1] * Aact[L - 1];
  out.colwise() += net.biases[L - 1];
  const Matrix F = (out.array().colwise() * net.output_scale.array()).matrix().colwise() + net.output_shift;
  const Matrix E = F - Y;
  Matrix EJ;
  LossValue loss;
  const double inv = 1.0 / static_cast<double>(B);
  loss.observable = 0.5 * inv * E.squaredNorm();
  if (h1) {
    const Matrix Jt = net.output_scale.asDiagonal() * (net.weights[L - 1] * T[L - 1]);
    EJ = Jt - Jd;
    loss.jacobian = 0.5 * inv * EJ.squaredNorm();
  }
  loss.total = loss.observable + loss.jacobian;

  gradient.resize(net.parameter_count());
  std::vector<Matrix> gW(L);
  std::vector<Vector> gb(L);

  Matrix zbar = net.output_scale.asDiagonal() * E * inv;
  Matrix tbar;
  if (h1) tbar = net.output_scale.asDiagonal() * EJ * inv;
  for (std::size_t l = L; l-- > 0;) {
    // zbar, tbar are adjoints of this layer's pre-activation and tangent pre-activation.
    gW[l] = zbar * Aact[l].transpose();
    gb[l] = zbar.rowwise().sum();
    if (h1) {
      if (l == 0) {
        for (Index k = 0; k < B; ++k) gW[0] += tbar.middleCols(k * r, r);
      } else {
        gW[l] += tbar * T[l].transpose();
      }
    }
    if (l == 0) break;
    const Matrix abar = net.weights[l].transpose() * zbar;
    const Matrix& Zp = Z[l - 1];
    const Matrix sp = Zp.unaryExpr([a](double v) { return act1(a, v); });
    zbar = sp.cwiseProduct(abar);
    if (h1) {
      const Matrix Tbar = net.weights[l].transpose() * tbar;
      const Matrix spp = Zp.unaryExpr([a](double v) { return act2(a, v); });
      Matrix next(Tbar.rows(), Tbar.cols());
      for (Index k = 0; k < B; ++k) {
        const auto tb = Tbar.middleCols(k * r, r);
        zbar.col(k) += spp.col(k).cwiseProduct(tb.cwiseProduct(Zd[l - 1].middleCols(k * r, r)).rowwise().sum());
        next.middleCols(k * r, r) = sp.col(k).asDiagonal() * tb;
      }
      tbar = std::move(next);
    }
  }

  Index k = 0;
  for (std::size_t l = 0; l < L; ++l) {
    gradient.segment(k, gW[l].size()) = Eigen::Map<const Vector>(gW[l].data(), gW[l].size());
    k += gW[l].size();
    gradient.segment(k, gb[l].size()) = gb[l];
    k += gb[l].size();
  }
  return loss;
}

TrainResult train(const Mlp& initial, const Dataset& data, const TrainOptions& options) {
  if (options.epochs < 0) throw ParameterError("train: epochs must be >= 0");
  if (options.batch_size < 1) throw ParameterError("train: batch size must be positive");
  if (data.size() < options.batch_size) throw ParameterError("train: n_t must be at least the batch size");
  if (options.loss == LossKind::H1 && !data.with_jacobian()) throw ConfigError("train: H1 loss needs Jacobians");
  if (!(options.validation_fraction >= 0.0 && options.validation_fraction < 1.0)) {
    throw ParameterError("train: validation fraction must lie in [0, 1)");
  }

  TrainResult result;
  result.network = initial;
  if (options.epochs == 0) return result;

  Rng rng(derive_seed(options.seed, 0x7A1));
  std::vector<Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::floor(options.validation_fraction * data.size()));
  std::vector<Index> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<Index> trn(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  if (trn.empty()) throw ParameterError("train: empty training split");

  Mlp net = initial;
  if (options.normalize_outputs) {
    Vector mean = Vector::Zero(data.output_dim());
    for (Index j : trn) mean += data.Y.col(j);
    mean /= static_cast<double>(trn.size());
    Vector var = Vector::Zero(data.output_dim());
    for (Index j : trn) var += (data.Y.col(j) - mean).cwiseAbs2();
    var /= static_cast<double>(trn.size());
    const double floor = 1e-8 * std::max(1.0, var.maxCoeff());
    net.output_shift = mean;
    net.output_scale = var.cwiseMax(floor).cwiseSqrt();
  }

  const std::vector<Index>& monitor = val.empty() ? trn : val;
  Vector p = net.parameters();
  Vector m1 = Vector::Zero(p.size()), m2 = Vector::Zero(p.size()), g;
  double best = evaluate_loss(net, data, monitor, options.loss).total;
  Vector best_p = p;
  result.best_epoch = 0;
  int since_best = 0;
  std::uint64_t t = 0;

  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    std::shuffle(trn.begin(), trn.end(), rng);
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < trn.size(); start += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t stop = std::min(trn.size(), start + static_cast<std::size_t>(options.batch_size));
      std::vector<Index> batch(trn.begin() + static_cast<std::ptrdiff_t>(start),
                               trn.begin() + static_cast<std::ptrdiff_t>(stop));
      const LossValue lv = loss_gradient(net, data, batch, options.loss, g);
      epoch_loss += lv.total * static_cast<double>(batch.size());
      seen += batch.size();
      if (!std::isfinite(lv.total) || !g.allFinite()) {
        result.diverged = true;
        break;
      }
      ++t;
      m1 = options.beta1 * m1 + (1.0 - options.beta1) * g;
      m2 = options.beta2 * m2 + (1.0 - options.beta2) * g.cwiseAbs2();
      const double c1 = 1.0 - std::pow(options.beta1, static_cast<double>(t));
      const double c2 = 1.0 - std::pow(options.beta2, static_cast<double>(t));
      p.array() -= options.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + options.epsilon);
      net.set_parameters(p);
    }
    if (result.diverged) break;
    result.train_loss.push_back(epoch_loss / static_cast<double>(seen));
    double v;
    try {
      v = evaluate_loss(net, data, monitor, options.loss).total;
    } catch (const PoisonedModelError&) {
      v = std::numeric_limits<double>::quiet_NaN();
    }
    result.validation_loss.push_back(v);
    if (!std::isfinite(v)) {
      result.diverged = true;
      break;
    }
    if (v < best) {
      best = v;
      best_p = p;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= options.patience) {
      result.early_stopped = true;
      break;
    }
  }
  net.set_parameters(best_p);
  result.network = std::move(net);
  return result;
}

GeneralizationError generalization_errors(const Mlp& net, const Dataset& test) {
  if (test.size() == 0) throw ParameterError("generalization_errors: empty test set");
  if (!test.with_jacobian()) throw ConfigError("generalization_errors: test set lacks Jacobians");
  require_dim(test.input_dim(), net.input_dim(), "test input");
  require_dim(test.output_dim(), net.output_dim(), "test output");
  double eo = 0.0, ej = 0.0;
  Vector f;
  Matrix J;
  for (Index k = 0; k < test.size(); ++k) {
    net.forward_jacobian(test.X.col(k), f, J);
    const double yn = test.Y.col(k).squaredNorm();
    const double jn = test.jacobian(k).squaredNorm();
    if (!(yn > 0.0) || !(jn > 0.0)) throw ParameterError("generalization_errors: zero reference sample");
    eo += (f - test.Y.col(k)).squaredNorm() / yn;
    ej += (J - test.jacobian(k)).squaredNorm() / jn;
  }
  const double n = static_cast<double>(test.size());
  return {std::sqrt(eo / n), std::sqrt(ej / n)};
}

}  // namespace dinomc
