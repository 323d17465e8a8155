// One PASS/FAIL line per acceptance criterion. Tolerances are pinned here; nothing is
// tuned at run time. Usage: dinomc_acceptance [criterion ...] (default: all).

#include "dinomc/chain.hpp"
#include "dinomc/diagnostics.hpp"
#include "dinomc/training.hpp"
#include "dinomc/tuning.hpp"

#include "fixtures.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

using namespace dinomc;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  const char* id;
  double budget_s;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::shared_ptr<DiffusionReactionModel> desk_problem(NewtonOptions newton = {}) {
  auto prior = make_prior(16, 0.03, 3.33);
  auto model = std::make_shared<DiffusionReactionModel>(prior, random_observation_points(25, 7), newton);
  Rng rng(derive_seed(1, 1));
  // Same piecewise-constant truth as the pipeline driver.
  const Grid& g = prior->grid();
  Vector truth(g.dofs());
  for (int j = 0; j < g.n; ++j) {
    for (int i = 0; i < g.n; ++i) {
      const double x = g.x(i), y = g.y(j);
      double v = 0.0;
      if ((x - 0.35) * (x - 0.35) + (y - 0.6) * (y - 0.6) < 0.04) v = 1.0;
      if (x > 0.55 && x < 0.85 && y > 0.15 && y < 0.45) v = -0.5;
      truth(g.index(i, j)) = v;
    }
  }
  const SyntheticData data = synthesize_data(*model, truth, 0.02, rng);
  model->set_data(data.y, data.noise_variance);
  return model;
}

// ---------------------------------------------------------------------------

Outcome adjoint_consistency() {
  auto model = desk_problem();
  const GaussianPrior& prior = model->prior();
  const double v = model->noise_variance();
  Rng rng(101);
  double worst = 0.0;
  for (int k = 0; k < 10; ++k) {
    auto point = model->evaluate(prior.sample(rng));
    const Vector dm = prior.sample(rng);
    const Vector dy = standard_normal(rng, model->observable_dim());
    const Vector jv = point->jvp(dm);
    const Vector back = vjp(*model, *point, dy);
    const double lhs = jv.dot(dy) / v;
    const double rhs = prior.cm_inner(dm, back);
    const double norms = (jv.norm() / std::sqrt(v)) * (dy.norm() / std::sqrt(v));
    worst = std::max(worst, std::abs(lhs - rhs) / norms);
  }
  return {worst <= 1e-10, fmt("max relative gap %.2e (tol 1e-10) over 10 points, n=16", worst)};
}

Outcome jacobian_fd() {
  NewtonOptions tight;
  tight.tolerance = 1e-13;
  auto model = desk_problem(tight);
  const GaussianPrior& prior = model->prior();
  Rng rng(202);
  const double eps = 1e-4;
  double worst = 0.0;
  for (int k = 0; k < 5; ++k) {
    const Vector m = prior.sample(rng);
    auto point = model->evaluate(m);
    for (int j = 0; j < 10; ++j) {
      const Vector dm = prior.sample(rng);
      const Vector fd =
          (model->evaluate(m + eps * dm)->observable() - model->evaluate(m - eps * dm)->observable()) / (2 * eps);
      const Vector jv = point->jvp(dm);
      worst = std::max(worst, (fd - jv).norm() / jv.norm());
    }
  }
  return {worst <= 1e-5, fmt("max relative error %.2e (tol 1e-5), 5 draws x 10 directions", worst)};
}

Outcome gaussian_exactness() {
  auto model = testing::make_toy(8, 8, 0.1, 5);
  // Exactness holds at the exact MAP, so converge the optimizer to round-off.
  MapOptions tight;
  tight.gradient_tolerance = 1e-13;
  tight.cg_forcing = 1e-3;
  const LaplacePack lap = map_estimate(*model, Vector::Zero(model->parameter_dim()), tight);
  Rng rng(303);
  double worst_mm = 0.0, worst_la = 0.0;
  for (double dt : {0.1, 1.0, 4.0}) {
    auto mm = make_mmala_kernel(model, dt);
    auto la = make_lapcn_kernel(model, lap, dt);
    mm->initialize(laplace_sample(model->prior(), lap, rng));
    la->initialize(laplace_sample(model->prior(), lap, rng));
    for (int i = 0; i < 500; ++i) {
      worst_mm = std::max(worst_mm, 1.0 - std::exp(std::min(0.0, mm->step(rng).log_alpha)));
      worst_la = std::max(worst_la, 1.0 - std::exp(std::min(0.0, la->step(rng).log_alpha)));
    }
  }
  std::ostringstream os;
  os << "max 1-alpha: mMALA " << fmt("%.2e", worst_mm) << ", LA-pCN " << fmt("%.2e", worst_la)
     << " (tol 1e-8), dt in {0.1, 1, 4}, d_m=64, d_y=8";
  return {worst_mm <= 1e-8 && worst_la <= 1e-8, os.str()};
}

Outcome posterior_moments() {
  auto model = testing::make_toy(8, 8, 0.5, 5);
  const Index d = model->parameter_dim();
  const Matrix S = model->posterior_covariance();
  const Vector mu = model->posterior_mean();
  const LaplacePack lap = map_estimate(*model, Vector::Zero(d));
  DisOptions o;
  o.rank = 16;
  o.samples = 4;
  const ReducedBasis basis = dis_basis(*model, o);
  const auto exact = exact_linear_reduced_map(*model, basis);

  struct Case {
    const char* name;
    std::unique_ptr<Kernel> k;
  };
  std::vector<Case> cases;
  cases.push_back({"pCN", make_pcn_kernel(model, 0.25)});
  cases.push_back({"mMALA", make_mmala_kernel(model, 1.0)});
  cases.push_back({"DINO-mMALA", make_surrogate_mmala_kernel(model, basis, exact, 1.0, false)});
  cases.push_back({"DA-DINO-mMALA", make_surrogate_mmala_kernel(model, basis, exact, 1.0, true)});

  const Index n_s = 200000;
  bool pass = true;
  std::ostringstream os;
  Rng rng(404);
  for (auto& c : cases) {
    const ChainRecord rec = run_chain(*c.k, laplace_sample(model->prior(), lap, rng), n_s, 1000, derive_seed(404, 1));
    const Vector ess = ess_percent({rec.samples});
    double worst = 0.0;
    for (Index i = 0; i < d; ++i) {
      const double n_eff = ess(i) / 100.0 * static_cast<double>(rec.samples.cols());
      const double mean = rec.samples.row(i).mean();
      const double var = (rec.samples.row(i).array() - mean).square().sum() / static_cast<double>(rec.samples.cols() - 1);
      const double z_mean = std::abs(mean - mu(i)) / std::sqrt(S(i, i) / n_eff);
      const double z_var = std::abs(var - S(i, i)) / (std::sqrt(2.0 / n_eff) * S(i, i));
      worst = std::max({worst, z_mean, z_var});
    }
    pass = pass && worst < 4.0;
    os << c.name << " max|z| " << fmt("%.2f", worst) << " (median ESS% " << fmt("%.1f", summarize_ess(ess).median)
       << "); ";
  }
  os << "bound 4 sigma, n_s=2e5, 64 means + 64 variances each";
  return {pass, os.str()};
}

Outcome da_ceiling() {
  auto model = testing::make_toy(8, 8, 0.1, 5);
  const LaplacePack lap = map_estimate(*model, Vector::Zero(model->parameter_dim()));
  DisOptions o;
  o.rank = 16;
  o.samples = 4;
  const ReducedBasis basis = dis_basis(*model, o);
  auto k = make_surrogate_mmala_kernel(model, basis, exact_linear_reduced_map(*model, basis), 2.0, true);
  Rng rng(505);
  const ChainRecord rec = run_chain(*k, laplace_sample(model->prior(), lap, rng), 20000, 100, 506);
  std::uint64_t passes = 0;
  for (auto p : rec.stage1_pass) passes += p ? 1 : 0;
  const bool pass = rec.stage2_rate() == 1.0 && rec.counters.forward_solves == passes;
  std::ostringstream os;
  os << "stage-2 rate " << fmt("%.6f", 100.0 * rec.stage2_rate()) << "%, forward solves " << rec.counters.forward_solves
     << " vs stage-1 passes " << passes << " over 20000 steps";
  return {pass, os.str()};
}

Outcome h1_vs_l2() {
  auto model = desk_problem();
  DisOptions o;
  o.rank = 50;
  o.samples = 64;
  o.seed = 11;
  const ReducedBasis basis = dis_basis(*model, o);
  DatasetOptions t;
  t.samples = 128;
  t.seed = 999;
  const Dataset test = generate_dataset(*model, basis, t);

  bool pass = true;
  std::ostringstream os;
  for (Index n_t : {64, 256}) {
    std::vector<double> jh, jl, oh, ol;
    for (int seed = 0; seed < 3; ++seed) {
      DatasetOptions d;
      d.samples = n_t;
      d.seed = derive_seed(606, static_cast<std::uint64_t>(n_t), static_cast<std::uint64_t>(seed));
      const Dataset data = generate_dataset(*model, basis, d);
      const Mlp initial({50, 100, 100, 100, 25}, derive_seed(607, static_cast<std::uint64_t>(seed)));
      for (LossKind loss : {LossKind::H1, LossKind::L2}) {
        TrainOptions opt;
        opt.loss = loss;
        opt.seed = derive_seed(608, static_cast<std::uint64_t>(seed));
        const TrainResult res = train(initial, data, opt);
        const GeneralizationError e = generalization_errors(res.network, test);
        (loss == LossKind::H1 ? jh : jl).push_back(e.jacobian);
        (loss == LossKind::H1 ? oh : ol).push_back(e.observable);
      }
    }
    const bool ok = median(jh) < median(jl) && median(oh) <= 1.2 * median(ol);
    pass = pass && ok;
    os << "n_t=" << n_t << ": E_jac H1 " << fmt("%.3f", median(jh)) << " vs L2 " << fmt("%.3f", median(jl))
       << ", E_obs H1 " << fmt("%.3f", median(oh)) << " vs 1.2*L2 " << fmt("%.3f", 1.2 * median(ol)) << "; ";
  }
  os << "medians over 3 seeds";
  return {pass, os.str()};
}

Outcome da_dino_quality() {
  auto model = desk_problem();
  const Index d = model->parameter_dim();
  CostCounters offline;
  const LaplacePack lap = map_estimate(*model, Vector::Zero(d));
  DisOptions o;
  o.rank = 50;
  o.samples = 64;
  o.seed = 21;
  const ReducedBasis basis = dis_basis(*model, o, &offline);
  DatasetOptions dopt;
  dopt.samples = 256;
  dopt.seed = 22;
  const Dataset data = generate_dataset(*model, basis, dopt, &offline);
  const Mlp initial({50, 100, 100, 100, 25}, 23);
  TrainOptions topt;
  topt.seed = 24;
  topt.loss = LossKind::H1;
  auto dino = std::make_shared<NetworkReducedMap>(train(initial, data, topt).network);
  topt.loss = LossKind::L2;
  auto no = std::make_shared<NetworkReducedMap>(train(initial, data, topt).network);

  const std::map<std::string, KernelForStep> kernels = {
      {"pCN", [&](double dt) { return make_pcn_kernel(model, dt); }},
      {"DA-DINO-mMALA", [&](double dt) { return make_surrogate_mmala_kernel(model, basis, dino, dt, true); }},
      {"DA-NO-mMALA", [&](double dt) { return make_surrogate_mmala_kernel(model, basis, no, dt, true); }},
  };
  const std::vector<double> candidates = {0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0};
  auto init = [&](std::uint64_t stream) {
    return [&, stream](int k) {
      Rng rng(derive_seed(31, stream, static_cast<std::uint64_t>(k)));
      return laplace_sample(model->prior(), lap, rng);
    };
  };

  std::map<std::string, double> ess, stage2, dts;
  std::uint64_t stream = 0;
  for (const auto& [name, factory] : kernels) {
    TuneOptions t;
    t.pilot_n_s = 1000;
    t.burn_in = 200;
    t.mass_weight = model->prior().grid().mass();
    t.seed = derive_seed(32, ++stream);
    const double dt = tune_step_size(factory, init(100 + stream), candidates, t).chosen_dt;
    const auto chains = run_chains([&factory, dt] { return factory(dt); }, init(stream), 4, 20000, 1000,
                                   derive_seed(33, stream), 1);
    std::vector<Matrix> pool;
    double s2 = 0.0;
    for (const auto& c : chains) {
      pool.push_back(c.samples);
      s2 += c.stage2_rate() / 4.0;
    }
    ess[name] = summarize_ess(ess_percent(pool)).median;
    stage2[name] = 100.0 * s2;
    dts[name] = dt;
  }
  // Context only, not part of the verdict: DA-NO stage-2 rate at the DA-DINO step.
  const auto matched = run_chains([&] { return kernels.at("DA-NO-mMALA")(dts["DA-DINO-mMALA"]); }, init(99), 2, 5000,
                                  500, derive_seed(34, 1), 1);
  const double no_matched = 50.0 * (matched[0].stage2_rate() + matched[1].stage2_rate());
  const double ratio = ess["DA-DINO-mMALA"] / ess["pCN"];
  const bool pass = ratio >= 2.0 && stage2["DA-DINO-mMALA"] >= stage2["DA-NO-mMALA"];
  std::ostringstream os;
  os << "median ESS% DA-DINO " << fmt("%.3f", ess["DA-DINO-mMALA"]) << " (dt " << dts["DA-DINO-mMALA"] << ") vs pCN "
     << fmt("%.3f", ess["pCN"]) << " (dt " << dts["pCN"] << "): ratio " << fmt("%.2f", ratio) << " (need >= 2); stage-2 "
     << fmt("%.1f", stage2["DA-DINO-mMALA"]) << "% vs DA-NO " << fmt("%.1f", stage2["DA-NO-mMALA"]) << "% (dt "
     << dts["DA-NO-mMALA"] << "), tuned steps; DA-NO at dt " << dts["DA-DINO-mMALA"] << ": "
     << fmt("%.1f", no_matched) << "% (context); 4 chains x 20000";
  return {pass, os.str()};
}

Outcome diagnostics_oracles() {
  // AR(1) ESS.
  const double rho = 0.9;
  std::vector<Matrix> pool;
  for (int c = 0; c < 4; ++c) {
    Rng rng(derive_seed(801, static_cast<std::uint64_t>(c)));
    Matrix x(20, 20000);
    x.col(0) = standard_normal(rng, 20);
    for (Index k = 1; k < x.cols(); ++k) x.col(k) = rho * x.col(k - 1) + std::sqrt(1 - rho * rho) * standard_normal(rng, 20);
    pool.push_back(x);
  }
  const double analytic = 100.0 * (1 - rho) / (1 + rho);
  const double ess = summarize_ess(ess_percent(pool)).median;
  const bool ess_ok = std::abs(ess - analytic) <= 0.3 * analytic;

  // MPSRF: identical chains and a dense 5x5 brute-force evaluation.
  // Identical chains: V = (p-1)/p W exactly, so the value is the closed-form shrinkage term.
  double shrink_gap = 0.0;
  for (const auto& pt : wasserstein_mpsrf({pool[0], pool[0]})) {
    const double p = static_cast<double>(pt.position);
    const double trace_w = pt.trace_v * p / (p - 1.0);
    const double expected = std::pow(1.0 - std::sqrt((p - 1.0) / p), 2) * trace_w;
    shrink_gap = std::max(shrink_gap, std::abs(pt.value - expected) / trace_w);
  }
  Rng rng(802);
  Matrix G1(5, 5), G2(5, 5);
  for (Index j = 0; j < 5; ++j) {
    G1.col(j) = standard_normal(rng, 5);
    G2.col(j) = standard_normal(rng, 5);
  }
  const Matrix W = G1 * G1.transpose() + 0.1 * Matrix::Identity(5, 5);
  const Matrix V = G2 * G2.transpose() + 0.1 * Matrix::Identity(5, 5);
  auto sqrtm = [](const Matrix& A) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(A);
    return Matrix(es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                  es.eigenvectors().transpose());
  };
  const Matrix Ws = sqrtm(W);
  const double brute = (W + V - 2.0 * sqrtm(Ws * V * Ws)).trace();
  const double gap = std::abs(gaussian_w2_trace(W, V) - brute);
  const double same = std::abs(gaussian_w2_trace(W, W));
  const bool mpsrf_ok = same <= 1e-10 && shrink_gap <= 1e-12 && gap <= 1e-8;

  // Tuner reproducibility on the toy.
  auto model = testing::make_toy(8, 8, 0.5, 5);
  const LaplacePack lap = map_estimate(*model, Vector::Zero(model->parameter_dim()));
  KernelForStep f = [model](double dt) { return make_pcn_kernel(model, dt); };
  std::map<double, int> votes;
  for (int r = 0; r < 5; ++r) {
    TuneOptions t;
    t.pilot_n_s = 2000;
    t.burn_in = 200;
    t.seed = derive_seed(803, static_cast<std::uint64_t>(r));
    auto init = [&, r](int k) {
      Rng g(derive_seed(804, static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(k)));
      return laplace_sample(model->prior(), lap, g);
    };
    votes[tune_step_size(f, init, {0.25, 1.0, 4.0}, t).chosen_dt] += 1;
  }
  int top = 0;
  double top_dt = 0.0;
  for (const auto& [dt, n] : votes) {
    if (n > top) {
      top = n;
      top_dt = dt;
    }
  }
  const bool tune_ok = top >= 4;

  std::ostringstream os;
  os << "AR(1) ESS% " << fmt("%.2f", ess) << " vs " << fmt("%.2f", analytic) << " (+-30%); W2(W,W) "
     << fmt("%.1e", same) << ", identical-chain gap " << fmt("%.1e", shrink_gap) << ", 5x5 gap " << fmt("%.1e", gap) << " (tol 1e-8); tuner picked dt " << top_dt << " in "
     << top << "/5 reruns";
  return {ess_ok && mpsrf_ok && tune_ok, os.str()};
}

Outcome poincare() {
  // Linear map: the variance and the gradient term are both tr(B C B^T) / v_n.
  auto toy = testing::make_toy(8, 8, 0.5, 5);
  const ReducedBasis full = kle_basis(toy->prior_ptr(), toy->parameter_dim());
  auto point = toy->evaluate(Vector::Zero(toy->parameter_dim()));
  // Var of T = B m / sqrt(v_n) with m = sum_k xi_k psi_k, xi iid N(0,1).
  const double variance = reduced_jacobian(*toy, *point, full).squaredNorm();
  const PoincareEstimate lin = poincare_estimate(*toy, 2, 1);
  const double rel = std::abs(variance - lin.gradient_hs) / lin.gradient_hs;

  auto model = desk_problem();
  const PoincareEstimate est = poincare_estimate(*model, 2000, 901);
  const bool pass = rel <= 1e-6 && est.ratio <= 1.0 + 3.0 * est.ratio_sigma;
  std::ostringstream os;
  os << "linear relative gap " << fmt("%.1e", rel) << " (tol 1e-6); nonlinear ratio " << fmt("%.4f", est.ratio)
     << " +- " << fmt("%.4f", est.ratio_sigma) << " over " << est.samples_used << " samples (bound 1 + 3 sigma)";
  return {pass, os.str()};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {"adjoint-consistency", 10, adjoint_consistency},
      {"jacobian-fd", 30, jacobian_fd},
      {"gaussian-exactness", 60, gaussian_exactness},
      {"posterior-moments", 600, posterior_moments},
      {"da-exact-ceiling", 60, da_ceiling},
      {"h1-vs-l2-ordering", 1200, h1_vs_l2},
      {"da-dino-sampling-quality", 1800, da_dino_quality},
      {"diagnostics-oracles", 300, diagnostics_oracles},
      {"poincare", 300, poincare},
  };
  std::vector<std::string> only(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = out.pass && in_time;
    failed += pass ? 0 : 1;
    std::printf("%s %-26s %s [%.1fs / %.0fs budget%s]\n", pass ? "PASS" : "FAIL", c.id, out.detail.c_str(), secs,
                c.budget_s, in_time ? "" : ", over budget");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
