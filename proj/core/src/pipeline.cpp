#include "dinomc/pipeline.hpp"

#include "dinomc/diagnostics.hpp"
#include "dinomc/diffusion_reaction.hpp"
#include "dinomc/io.hpp"
#include "dinomc/linear_toy.hpp"
#include "dinomc/tuning.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

namespace dinomc {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kKernelNames = {"pCN",          "MALA",          "mMALA",       "DIS-mMALA",
                                               "LA-pCN",       "DINO-mMALA",    "DA-DINO-mMALA", "NO-mMALA",
                                               "DA-NO-mMALA",  "r-mMALA",       "DA-r-mMALA"};

// Seed streams; fixed so that artifacts do not move when kernels are added.
enum Stream : std::uint64_t {
  kTruthNoise = 1,
  kDis = 2,
  kTrainData = 3,
  kTestData = 4,
  kNetInit = 5,
  kTrainShuffle = 6,
  kTune = 7,
  kChains = 8,
  kInit = 9,
  kReducedMap = 10,
};

// ---- config ---------------------------------------------------------------

template <class T>
void take(const json& obj, const char* key, T& out, std::set<std::string>& seen) {
  seen.insert(key);
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

void reject_unknown(const json& obj, const std::set<std::string>& seen, const std::string& block) {
  for (const auto& item : obj.items()) {
    if (!seen.count(item.key())) throw ConfigError("unknown config key '" + item.key() + "' in " + block);
  }
}

json block(const json& root, const char* key) {
  if (!root.contains(key)) return json::object();
  if (!root.at(key).is_object()) throw ConfigError(std::string("config block '") + key + "' must be an object");
  return root.at(key);
}

json to_json(const ExperimentConfig& c) {
  const auto& p = c.problem;
  const auto& s = c.subspace;
  const auto& t = c.surrogate;
  const auto& m = c.mcmc;
  return {{"problem",
           {{"kind", p.kind},
            {"grid_n", p.grid_n},
            {"prior_gamma", p.prior_gamma},
            {"prior_delta", p.prior_delta},
            {"obs_count", p.obs_count},
            {"obs_seed", p.obs_seed},
            {"noise_pct", p.noise_pct},
            {"newton_tol", p.newton_tol},
            {"newton_max_iter", p.newton_max_iter},
            {"truth_seed", p.truth_seed},
            {"toy_obs_dim", p.toy_obs_dim},
            {"toy_operator_scale", p.toy_operator_scale}}},
          {"subspace", {{"kind", s.kind}, {"r", s.r}, {"n_dis", s.n_dis}}},
          {"surrogate",
           {{"n_t", t.n_t},
            {"n_test", t.n_test},
            {"hidden", t.hidden},
            {"epochs", t.epochs},
            {"batch_size", t.batch_size},
            {"learning_rate", t.learning_rate},
            {"patience", t.patience},
            {"exact", t.exact}}},
          {"mcmc",
           {{"kernels", m.kernels},
            {"dt_candidates", m.dt_candidates},
            {"n_c", m.n_c},
            {"n_s", m.n_s},
            {"burn_in", m.burn_in},
            {"pilot_n_s", m.pilot_n_s},
            {"tune_restarts", m.tune_restarts},
            {"n_rm", m.n_rm},
            {"linear_solve_cost", m.linear_solve_cost}}},
          {"seed", c.seed}};
}

bool uses_basis(const std::string& k) { return k != "pCN" && k != "MALA" && k != "mMALA" && k != "LA-pCN"; }
bool uses_dino(const std::string& k) { return k.find("DINO") != std::string::npos; }
bool uses_no(const std::string& k) { return k == "NO-mMALA" || k == "DA-NO-mMALA"; }
bool uses_network(const std::string& k) { return uses_dino(k) || uses_no(k); }

// ---- small helpers --------------------------------------------------------

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot write " + path.string());
  os << text;
}

json read_json_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot read " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw FormatError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

json counters_json(const CostCounters& c) {
  return {{"forward_solves", c.forward_solves}, {"jvp_solves", c.jvp_solves},
          {"vjp_solves", c.vjp_solves},         {"surrogate_solves", c.surrogate_solves},
          {"network_evals", c.network_evals},   {"prior_draws", c.prior_draws},
          {"solver_failures", c.solver_failures}};
}

std::string fmt(double v, int prec = 3) {
  if (!std::isfinite(v)) return "n/a";
  std::ostringstream os;
  os << std::setprecision(prec) << std::fixed << v;
  return os.str();
}

Vector piecewise_truth(const Grid& g) {
  Vector m(g.dofs());
  for (int j = 0; j < g.n; ++j) {
    for (int i = 0; i < g.n; ++i) {
      const double x = g.x(i), y = g.y(j);
      double v = 0.0;
      if ((x - 0.35) * (x - 0.35) + (y - 0.6) * (y - 0.6) < 0.04) v = 1.0;
      if (x > 0.55 && x < 0.85 && y > 0.15 && y < 0.45) v = -0.5;
      m(g.index(i, j)) = v;
    }
  }
  return m;
}

}  // namespace

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ExperimentConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config must be a JSON object");

  ExperimentConfig c;
  std::set<std::string> top = {"problem", "subspace", "surrogate", "mcmc"};
  take(root, "seed", c.seed, top);
  reject_unknown(root, top, "top level");

  {
    const json b = block(root, "problem");
    std::set<std::string> seen;
    auto& p = c.problem;
    take(b, "kind", p.kind, seen);
    take(b, "grid_n", p.grid_n, seen);
    take(b, "prior_gamma", p.prior_gamma, seen);
    take(b, "prior_delta", p.prior_delta, seen);
    take(b, "obs_count", p.obs_count, seen);
    take(b, "obs_seed", p.obs_seed, seen);
    take(b, "noise_pct", p.noise_pct, seen);
    take(b, "newton_tol", p.newton_tol, seen);
    take(b, "newton_max_iter", p.newton_max_iter, seen);
    take(b, "truth_seed", p.truth_seed, seen);
    take(b, "toy_obs_dim", p.toy_obs_dim, seen);
    take(b, "toy_operator_scale", p.toy_operator_scale, seen);
    reject_unknown(b, seen, "problem");
    if (p.kind != "toy" && p.kind != "diffusion_reaction") throw ConfigError("problem.kind must be toy or diffusion_reaction");
    if (p.grid_n < 4) throw ConfigError("problem.grid_n must be at least 4");
    if (p.prior_gamma <= 0 || p.prior_delta <= 0) throw ConfigError("prior_gamma and prior_delta must be positive");
    if (p.noise_pct <= 0) throw ConfigError("problem.noise_pct must be positive");
    if (p.obs_count < 1 || p.toy_obs_dim < 1) throw ConfigError("observation count must be positive");
  }
  {
    const json b = block(root, "subspace");
    std::set<std::string> seen;
    auto& s = c.subspace;
    take(b, "kind", s.kind, seen);
    take(b, "r", s.r, seen);
    take(b, "n_dis", s.n_dis, seen);
    reject_unknown(b, seen, "subspace");
    if (s.kind != "dis" && s.kind != "kle") throw ConfigError("subspace.kind must be dis or kle");
    if (s.r < 1 || s.n_dis < 1) throw ConfigError("subspace.r and subspace.n_dis must be positive");
  }
  {
    const json b = block(root, "surrogate");
    std::set<std::string> seen;
    auto& t = c.surrogate;
    take(b, "n_t", t.n_t, seen);
    take(b, "n_test", t.n_test, seen);
    take(b, "hidden", t.hidden, seen);
    take(b, "epochs", t.epochs, seen);
    take(b, "batch_size", t.batch_size, seen);
    take(b, "learning_rate", t.learning_rate, seen);
    take(b, "patience", t.patience, seen);
    take(b, "exact", t.exact, seen);
    reject_unknown(b, seen, "surrogate");
    if (t.n_t < 2 || t.n_test < 1) throw ConfigError("surrogate.n_t must be at least 2 and n_test positive");
    if (t.epochs < 0 || t.batch_size < 1 || t.learning_rate <= 0) throw ConfigError("invalid surrogate training options");
  }
  {
    const json b = block(root, "mcmc");
    std::set<std::string> seen;
    auto& m = c.mcmc;
    take(b, "kernels", m.kernels, seen);
    take(b, "dt_candidates", m.dt_candidates, seen);
    take(b, "n_c", m.n_c, seen);
    take(b, "n_s", m.n_s, seen);
    take(b, "burn_in", m.burn_in, seen);
    take(b, "pilot_n_s", m.pilot_n_s, seen);
    take(b, "tune_restarts", m.tune_restarts, seen);
    take(b, "n_rm", m.n_rm, seen);
    take(b, "linear_solve_cost", m.linear_solve_cost, seen);
    reject_unknown(b, seen, "mcmc");
    if (m.kernels.empty()) throw ConfigError("mcmc.kernels must not be empty");
    for (const auto& k : m.kernels) {
      if (std::find(kKernelNames.begin(), kKernelNames.end(), k) == kKernelNames.end()) {
        throw ConfigError("unknown kernel '" + k + "'");
      }
    }
    if (std::set<std::string>(m.kernels.begin(), m.kernels.end()).size() != m.kernels.size()) {
      throw ConfigError("mcmc.kernels lists a kernel twice");
    }
    if (m.dt_candidates.empty()) throw ConfigError("mcmc.dt_candidates must not be empty");
    for (double dt : m.dt_candidates) {
      if (!(dt > 0)) throw ConfigError("mcmc.dt_candidates must be positive");
    }
    if (m.n_c < 1 || m.n_s < 1 || m.burn_in < 0 || m.pilot_n_s < 1 || m.tune_restarts < 1 || m.n_rm < 1) {
      throw ConfigError("invalid mcmc sizes");
    }
    if (m.linear_solve_cost < 0) throw ConfigError("mcmc.linear_solve_cost must be nonnegative");
  }
  if (c.surrogate.exact && c.problem.kind != "toy") throw ConfigError("surrogate.exact requires the linear toy problem");
  return c;
}

// ---- pipeline -------------------------------------------------------------

struct Pipeline::Impl {
  ExperimentConfig cfg;
  std::string hash;
  PipelineOptions options;

  // Built on demand.
  PriorPtr prior;
  std::shared_ptr<ForwardModel> model;
  std::shared_ptr<LinearGaussianModel> linear;
  Vector m_true;

  fs::path dir() const { return fs::path(options.out_root) / hash; }
  std::string stem(const std::string& name) const { return (dir() / name).string(); }
  Provenance prov(const std::string& stage) const { return {hash, cfg.seed, stage}; }

  void require_artifact(const std::string& name, const std::string& producer) const {
    if (!artifact_exists(stem(name))) throw MissingArtifactError(stem(name), producer);
  }
  void require_json(const std::string& name, const std::string& producer) const {
    if (!fs::exists(dir() / name)) throw MissingArtifactError((dir() / name).string(), producer);
  }

  void write_json(const std::string& name, json body, const std::string& stage) const {
    body["provenance"] = {{"config_hash", hash},
                          {"master_seed", cfg.seed},
                          {"stage", stage},
                          {"code_version", code_version()}};
    write_text(dir() / name, body.dump(2) + "\n");
  }

  void build_model() {
    if (model) return;
    const auto& p = cfg.problem;
    prior = make_prior(p.grid_n, p.prior_gamma, p.prior_delta);
    if (p.kind == "toy") {
      linear = std::make_shared<LinearGaussianModel>(
          prior, LinearGaussianModel::random_operator(p.toy_obs_dim, prior->dim(), p.toy_operator_scale, p.obs_seed));
      model = linear;
      Rng rng(p.truth_seed);
      m_true = prior->sample(rng);
    } else {
      NewtonOptions newton;
      newton.tolerance = p.newton_tol;
      newton.max_iterations = p.newton_max_iter;
      model = std::make_shared<DiffusionReactionModel>(prior, random_observation_points(p.obs_count, p.obs_seed),
                                                       newton);
      m_true = piecewise_truth(prior->grid());
    }
  }

  void load_data() {
    build_model();
    if (model->has_data()) return;
    require_artifact("data", "setup");
    const auto mats = read_matrices(stem("data") + ".bin");
    const json man = read_json_file(stem("data") + ".json");
    if (mats.size() != 3 || mats[1].cols() != 1 || mats[1].rows() != model->observable_dim()) {
      throw FormatError("data artifact does not match the configured problem");
    }
    model->set_data(mats[1].col(0), man.at("noise_variance").get<double>());
  }

  Index rank() const { return std::min<Index>(cfg.subspace.r, prior->dim()); }

  // Everything a kernel factory may need, loaded once per stage.
  struct Context {
    ModelConstPtr model;
    LaplacePack laplace;
    std::optional<ReducedBasis> basis;
    ReducedMapPtr dino;
    ReducedMapPtr no;
    ReducedMapPtr rm;
  };

  Context load_context(const std::vector<std::string>& kernels) {
    load_data();
    Context ctx;
    ctx.model = model;
    require_artifact("laplace", "setup");
    ctx.laplace = load_laplace(stem("laplace"));
    const bool need_basis = std::any_of(kernels.begin(), kernels.end(), uses_basis);
    if (need_basis) {
      require_artifact("basis", "dis");
      ctx.basis = load_basis(stem("basis"), prior);
    }
    const bool need_dino = std::any_of(kernels.begin(), kernels.end(), uses_dino);
    const bool need_no = std::any_of(kernels.begin(), kernels.end(), uses_no);
    if ((need_dino || need_no) && cfg.surrogate.exact) {
      auto exact = exact_linear_reduced_map(*model, *ctx.basis);
      ctx.dino = exact;
      ctx.no = exact;
    } else {
      if (need_dino) {
        require_artifact("net_dino", "train");
        ctx.dino = std::make_shared<NetworkReducedMap>(load_network(stem("net_dino")));
      }
      if (need_no) {
        require_artifact("net_no", "train");
        ctx.no = std::make_shared<NetworkReducedMap>(load_network(stem("net_no")));
      }
    }
    if (std::any_of(kernels.begin(), kernels.end(), [](const std::string& k) { return k.find("r-mMALA") != std::string::npos; })) {
      ctx.rm = std::make_shared<SampleAverageReducedMap>(model, *ctx.basis, cfg.mcmc.n_rm,
                                                         derive_seed(cfg.seed, kReducedMap));
    }
    return ctx;
  }

  static KernelForStep factory_for(const std::string& name, const Context& ctx) {
    const ModelConstPtr model = ctx.model;
    if (name == "pCN") return [model](double dt) { return make_pcn_kernel(model, dt); };
    if (name == "MALA") return [model](double dt) { return make_mala_kernel(model, dt); };
    if (name == "mMALA") return [model](double dt) { return make_mmala_kernel(model, dt); };
    if (name == "LA-pCN") {
      const LaplacePack lap = ctx.laplace;
      return [model, lap](double dt) { return make_lapcn_kernel(model, lap, dt); };
    }
    const ReducedBasis basis = *ctx.basis;
    if (name == "DIS-mMALA") return [model, basis](double dt) { return make_dis_mmala_kernel(model, basis, dt); };
    const bool da = name.rfind("DA-", 0) == 0;
    ReducedMapPtr map = uses_dino(name) ? ctx.dino : uses_no(name) ? ctx.no : ctx.rm;
    return [model, basis, map, da](double dt) { return make_surrogate_mmala_kernel(model, basis, map, dt, da); };
  }

  std::function<Vector(int)> chain_init(const LaplacePack& laplace, std::uint64_t stream) const {
    const PriorPtr p = prior;
    const std::uint64_t seed = derive_seed(cfg.seed, kInit, stream);
    return [p, laplace, seed](int k) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
      return laplace_sample(*p, laplace, rng);
    };
  }

  // ---- stages ----

  void setup(std::ostream& log) {
    build_model();
    Rng rng(derive_seed(cfg.seed, kTruthNoise));
    const SyntheticData data = synthesize_data(*model, m_true, cfg.problem.noise_pct, rng);
    model->set_data(data.y, data.noise_variance);
    write_matrices(stem("data") + ".bin", {m_true, data.y, data.clean});
    json obs = json::array();
    if (auto* dr = dynamic_cast<DiffusionReactionModel*>(model.get())) {
      for (const auto& pt : dr->points()) obs.push_back({pt.x, pt.y});
    }
    json man = {{"noise_variance", data.noise_variance},
                {"noise_pct", cfg.problem.noise_pct},
                {"obs_points", obs},
                {"arrays", {"m_true", "y", "clean"}}};
    man["provenance"] = {{"config_hash", hash}, {"master_seed", cfg.seed}, {"stage", "setup"},
                         {"code_version", code_version()}};
    write_text(stem("data") + ".json", man.dump(2) + "\n");
    log << "setup: d_m = " << model->parameter_dim() << ", d_y = " << model->observable_dim()
        << ", v_n = " << data.noise_variance << "\n";

    CostCounters cost;
    const LaplacePack lap = map_estimate(*model, Vector::Zero(model->parameter_dim()), MapOptions{}, &cost);
    save_laplace(stem("laplace"), lap, prov("setup"));
    log << "setup: MAP objective " << lap.objective << " after " << lap.iterations << " iterations"
        << (lap.converged ? "" : " (not converged)") << ", Laplace rank " << lap.eig.rank() << "\n";
    write_json("setup.json",
               {{"map_cost", counters_json(cost)},
                {"map_cost_units", cost.cost_units(cfg.mcmc.linear_solve_cost)},
                {"map_converged", lap.converged}},
               "setup");
  }

  void dis(std::ostream& log) {
    load_data();
    CostCounters cost;
    ReducedBasis basis;
    if (cfg.subspace.kind == "kle") {
      basis = kle_basis(prior, rank());
    } else {
      DisOptions o;
      o.rank = rank();
      o.samples = cfg.subspace.n_dis;
      o.seed = derive_seed(cfg.seed, kDis);
      o.threads = options.threads;
      basis = dis_basis(*model, o, &cost);
    }
    save_basis(stem("basis"), basis, prov("dis"));
    log << "dis: " << to_string(basis.kind()) << " basis of rank " << basis.rank() << "\n";
    write_json("dis.json",
               {{"kind", to_string(basis.kind())},
                {"rank", basis.rank()},
                {"cost", counters_json(cost)},
                {"cost_units", cost.cost_units(cfg.mcmc.linear_solve_cost)}},
               "dis");
  }

  void train_stage(std::ostream& log) {
    load_data();
    require_artifact("basis", "dis");
    const ReducedBasis basis = load_basis(stem("basis"), prior);
    if (cfg.surrogate.exact) {
      write_json("train.json", {{"exact", true}, {"cost_units", 0.0}}, "train");
      log << "train: exact reduced map, nothing to train\n";
      return;
    }
    CostCounters cost;
    DatasetOptions d;
    d.samples = cfg.surrogate.n_t;
    d.seed = derive_seed(cfg.seed, kTrainData);
    d.threads = options.threads;
    Dataset train_data = generate_dataset(*model, basis, d, &cost);
    train_data.basis_id = hash + "/basis";
    d.samples = cfg.surrogate.n_test;
    d.seed = derive_seed(cfg.seed, kTestData);
    Dataset test_data = generate_dataset(*model, basis, d, nullptr);
    test_data.basis_id = train_data.basis_id;
    save_dataset(stem("train_dataset"), train_data, prov("train"));
    save_dataset(stem("test_dataset"), test_data, prov("train"));

    std::vector<int> widths = {static_cast<int>(basis.rank())};
    widths.insert(widths.end(), cfg.surrogate.hidden.begin(), cfg.surrogate.hidden.end());
    widths.push_back(static_cast<int>(model->observable_dim()));
    const Mlp initial(widths, derive_seed(cfg.seed, kNetInit));

    json nets = json::object();
    // Both losses are always fit so that accuracy can be compared in the report.
    for (LossKind loss : {LossKind::H1, LossKind::L2}) {
      TrainOptions o;
      o.loss = loss;
      o.epochs = cfg.surrogate.epochs;
      o.batch_size = cfg.surrogate.batch_size;
      o.learning_rate = cfg.surrogate.learning_rate;
      o.patience = cfg.surrogate.patience;
      o.seed = derive_seed(cfg.seed, kTrainShuffle);
      const TrainResult res = train(initial, train_data, o);
      const GeneralizationError err = generalization_errors(res.network, test_data);
      const std::string name = loss == LossKind::H1 ? "net_dino" : "net_no";
      save_network(stem(name), res.network, prov("train"));
      nets[to_string(loss)] = {{"artifact", name},
                               {"best_epoch", res.best_epoch},
                               {"early_stopped", res.early_stopped},
                               {"diverged", res.diverged},
                               {"error_observable", err.observable},
                               {"error_jacobian", err.jacobian}};
      log << "train: " << to_string(loss) << " E_obs = " << fmt(err.observable, 4)
          << ", E_jac = " << fmt(err.jacobian, 4) << "\n";
    }
    write_json("train.json",
               {{"exact", false},
                {"n_t", train_data.size()},
                {"failures", train_data.failures},
                {"cost", counters_json(cost)},
                {"cost_units", cost.cost_units(cfg.mcmc.linear_solve_cost)},
                {"networks", nets}},
               "train");
  }

  void tune(std::ostream& log) {
    const auto& kernels = cfg.mcmc.kernels;
    const Context ctx = load_context(kernels);
    for (std::size_t i = 0; i < kernels.size(); ++i) {
      const std::string& name = kernels[i];
      TuneOptions o;
      o.pilot_n_s = cfg.mcmc.pilot_n_s;
      o.burn_in = std::min<Index>(cfg.mcmc.burn_in, cfg.mcmc.pilot_n_s);
      const bool ar_rule = name == "MALA" || name == "LA-pCN";
      o.ar_variation_rule = ar_rule;
      o.restarts = ar_rule ? std::max(3, cfg.mcmc.tune_restarts) : cfg.mcmc.tune_restarts;
      o.mass_weight = prior->grid().mass();
      o.seed = derive_seed(cfg.seed, kTune, i);
      const TuneReport rep =
          tune_step_size(factory_for(name, ctx), chain_init(ctx.laplace, 1000 + i), cfg.mcmc.dt_candidates, o);
      json cands = json::array();
      for (const auto& c : rep.candidates) {
        cands.push_back({{"dt", c.dt}, {"ar", c.ar}, {"msj", c.msj}, {"median_ess", c.median_ess}, {"ar_spread", c.ar_spread}});
      }
      write_json("tune_" + name + ".json",
                 {{"kernel", name},
                  {"chosen_dt", rep.chosen_dt},
                  {"prefix_length", rep.prefix_length},
                  {"flagged", rep.flagged},
                  {"candidates", cands}},
                 "tune");
      log << "tune: " << name << " dt = " << rep.chosen_dt << (rep.flagged ? " (flagged)" : "") << "\n";
    }
  }

  void sample(std::ostream& log) {
    const auto& kernels = cfg.mcmc.kernels;
    const Context ctx = load_context(kernels);
    for (std::size_t i = 0; i < kernels.size(); ++i) {
      const std::string& name = kernels[i];
      require_json("tune_" + name + ".json", "tune");
      const double dt = read_json_file(dir() / ("tune_" + name + ".json")).at("chosen_dt").get<double>();
      const KernelForStep f = factory_for(name, ctx);
      auto chains = run_chains([&f, dt] { return f(dt); }, chain_init(ctx.laplace, i), cfg.mcmc.n_c,
                                     cfg.mcmc.n_s, cfg.mcmc.burn_in, derive_seed(cfg.seed, kChains, i),
                                     options.threads);
      int aborted = 0;
      for (std::size_t k = 0; k < chains.size(); ++k) {
        chains[k].kernel = name;
        save_chain(stem("chain_" + name + "_" + std::to_string(k)), chains[k], prov("sample"));
        aborted += chains[k].aborted ? 1 : 0;
      }
      log << "sample: " << name << " dt = " << dt << ", " << chains.size() << " chains"
          << (aborted ? ", " + std::to_string(aborted) + " aborted" : std::string()) << "\n";
    }
  }

  double offline_cost(const std::string& name) const {
    auto units = [&](const char* file) {
      return fs::exists(dir() / file) ? read_json_file(dir() / file).at("cost_units").get<double>() : 0.0;
    };
    if (name == "LA-pCN") {
      return fs::exists(dir() / "setup.json") ? read_json_file(dir() / "setup.json").at("map_cost_units").get<double>()
                                              : 0.0;
    }
    if (!uses_basis(name)) return 0.0;
    double c = units("dis.json");
    if (uses_network(name)) c += units("train.json");
    return c;
  }

  void diagnose(std::ostream& log) {
    build_model();
    const double w = prior->grid().mass();
    const double lsc = cfg.mcmc.linear_solve_cost;
    json out = json::object();
    for (const auto& name : cfg.mcmc.kernels) {
      std::vector<ChainRecord> recs;
      for (int k = 0; k < cfg.mcmc.n_c; ++k) {
        const std::string s = "chain_" + name + "_" + std::to_string(k);
        require_artifact(s, "sample");
        recs.push_back(load_chain(stem(s)));
      }
      // Aborted chains are truncated; pooled diagnostics use the common prefix.
      Index len = std::numeric_limits<Index>::max();
      for (const auto& r : recs) len = std::min(len, r.samples.cols());
      std::vector<Matrix> pool;
      CostCounters cost;
      double ar = 0, msj = 0, s1 = 0, s2 = 0;
      int aborted = 0;
      Index steps = 0;
      for (const auto& r : recs) {
        pool.push_back(r.samples.leftCols(len));
        const ArMsj am = ar_msj(r.samples, r.accepted, w);
        ar += am.ar;
        msj += am.msj;
        s1 += r.stage1_rate();
        s2 += r.stage2_rate();
        cost += r.counters;
        steps += r.steps();
        aborted += r.aborted ? 1 : 0;
      }
      const double nc = static_cast<double>(recs.size());
      EssSummary ess;
      ess.median = std::numeric_limits<double>::quiet_NaN();
      try {
        ess = summarize_ess(ess_percent(pool));
      } catch (const std::exception& e) {
        log << "diagnose: " << name << " ESS unavailable: " << e.what() << "\n";
      }
      json mp = json::array();
      std::string csv = "position,mpsrf,trace_v\n";
      if (recs.size() >= 2 && len >= 2) {
        for (const auto& pt : wasserstein_mpsrf(pool, w)) {
          mp.push_back({{"position", pt.position}, {"value", pt.value}, {"trace_v", pt.trace_v}});
          csv += std::to_string(pt.position) + "," + fmt(pt.value, 10) + "," + fmt(pt.trace_v, 10) + "\n";
        }
      }
      write_text(dir() / ("mpsrf_" + name + ".csv"), csv);
      const double per100 = steps > 0 ? 100.0 * cost.cost_units(lsc) / static_cast<double>(steps) : 0.0;
      out[name] = {{"dt", recs.front().dt},
                   {"median_ess_percent", std::isfinite(ess.median) ? json(ess.median) : json(nullptr)},
                   {"ess_missing", ess.missing},
                   {"ess_capped", ess.capped},
                   {"acceptance_rate", ar / nc},
                   {"msj", msj / nc},
                   {"stage1_rate", 100.0 * s1 / nc},
                   {"stage2_rate", 100.0 * s2 / nc},
                   {"aborted_chains", aborted},
                   {"counters", counters_json(cost)},
                   {"cost_per_100", per100},
                   {"offline_cost", offline_cost(name)},
                   {"mpsrf", mp}};
      log << "diagnose: " << name << " median ESS% = " << fmt(ess.median) << ", AR = " << fmt(ar / nc, 1)
          << "%, cost/100 = " << fmt(per100, 1) << "\n";
    }
    write_json("diagnostics.json", {{"kernels", out}}, "diagnose");
  }

  void report(std::ostream& log) {
    require_json("diagnostics.json", "diagnose");
    const json diag = read_json_file(dir() / "diagnostics.json").at("kernels");
    const auto& kernels = cfg.mcmc.kernels;
    const std::string ref = std::find(kernels.begin(), kernels.end(), "pCN") != kernels.end() ? "pCN" : kernels.front();
    auto stats = [&](const std::string& k) {
      const json& d = diag.at(k);
      SamplerStats s;
      s.name = k;
      s.median_ess_percent = d.at("median_ess_percent").is_null() ? 0.0 : d.at("median_ess_percent").get<double>();
      s.cost_per_100 = d.at("cost_per_100").get<double>();
      s.offline_cost = d.at("offline_cost").get<double>();
      return s;
    };
    const std::vector<double> grid = {1, 2, 5, 10, 20, 50, 100, 200, 500, 1000};
    const SamplerStats ref_stats = stats(ref);

    std::ostringstream md;
    md << "# Sampler comparison\n\nReference sampler: " << ref << ". Costs are forward-solve units with linear solves "
       << "weighted " << cfg.mcmc.linear_solve_cost << ".\n\n";
    md << "| kernel | dt | median ESS% | AR % | stage-2 % | cost / 100 | offline | eff. speedup | break-even n_ess |\n";
    md << "|---|---|---|---|---|---|---|---|---|\n";
    json rows = json::array();
    for (const auto& k : kernels) {
      const json& d = diag.at(k);
      const SamplerStats s = stats(k);
      double eff = std::numeric_limits<double>::quiet_NaN();
      std::optional<double> be;
      std::string csv = "n_ess,total_speedup\n";
      try {
        const SpeedupReport r = speedup_report(s, ref_stats, grid);
        eff = r.effective_speedup;
        be = r.break_even;
        for (const auto& [n, v] : r.total) csv += fmt(n, 1) + "," + fmt(v, 8) + "\n";
      } catch (const std::exception&) {
      }
      write_text(dir() / ("speedup_" + k + ".csv"), csv);
      md << "| " << k << " | " << fmt(d.at("dt").get<double>(), 3) << " | " << fmt(s.median_ess_percent, 2) << " | "
         << fmt(d.at("acceptance_rate").get<double>(), 1) << " | " << fmt(d.at("stage2_rate").get<double>(), 1)
         << " | " << fmt(s.cost_per_100, 1) << " | " << fmt(s.offline_cost, 1) << " | " << fmt(eff, 2) << " | "
         << (be ? fmt(*be, 1) : std::string("-")) << " |\n";
      rows.push_back({{"kernel", k},
                      {"effective_speedup", std::isfinite(eff) ? json(eff) : json(nullptr)},
                      {"break_even", be ? json(*be) : json(nullptr)}});
    }

    // Directional checks that this run can speak to.
    json checks = json::array();
    auto check = [&](const std::string& what, double value, double bound, bool pass) {
      checks.push_back({{"check", what}, {"value", value}, {"bound", bound}, {"pass", pass}});
    };
    auto has = [&](const std::string& k) { return diag.contains(k); };
    if (has("DA-DINO-mMALA") && has("pCN")) {
      const double ratio = stats("DA-DINO-mMALA").median_ess_percent / std::max(1e-300, stats("pCN").median_ess_percent);
      check("median ESS% ratio DA-DINO-mMALA / pCN", ratio, 2.0, ratio >= 2.0);
    }
    if (has("DA-DINO-mMALA") && has("DA-NO-mMALA")) {
      const double a = diag.at("DA-DINO-mMALA").at("stage2_rate").get<double>();
      const double b = diag.at("DA-NO-mMALA").at("stage2_rate").get<double>();
      check("stage-2 rate DA-DINO-mMALA minus DA-NO-mMALA", a - b, 0.0, a >= b);
    }
    if (cfg.surrogate.exact) {
      for (const auto& k : kernels) {
        if (k.rfind("DA-", 0) == 0 && uses_network(k)) {
          const double v = diag.at(k).at("stage2_rate").get<double>();
          check("stage-2 rate of " + k + " with the exact reduced map", v, 100.0, v >= 100.0 - 1e-12);
        }
      }
    }
    if (fs::exists(dir() / "train.json")) {
      const json tr = read_json_file(dir() / "train.json");
      if (tr.contains("networks")) {
        const json& n = tr.at("networks");
        const double jh = n.at("H1").at("error_jacobian").get<double>(), jl = n.at("L2").at("error_jacobian").get<double>();
        const double oh = n.at("H1").at("error_observable").get<double>(), ol = n.at("L2").at("error_observable").get<double>();
        check("Jacobian error H1 / L2", jh / jl, 1.0, jh < jl);
        check("observable error H1 / L2", oh / ol, 1.2, oh <= 1.2 * ol);
        md << "\n## Surrogate accuracy\n\n| loss | E_obs | E_jac |\n|---|---|---|\n"
           << "| H1 | " << fmt(oh, 4) << " | " << fmt(jh, 4) << " |\n| L2 | " << fmt(ol, 4) << " | " << fmt(jl, 4) << " |\n";
      }
    }
    if (!checks.empty()) {
      md << "\n## Checks\n\n| check | value | bound | result |\n|---|---|---|---|\n";
      for (const auto& c : checks) {
        md << "| " << c.at("check").get<std::string>() << " | " << fmt(c.at("value").get<double>(), 3) << " | "
           << fmt(c.at("bound").get<double>(), 3) << " | " << (c.at("pass").get<bool>() ? "PASS" : "FAIL") << " |\n";
      }
    }
    write_text(dir() / "report.md", md.str());
    write_json("report.json", {{"reference", ref}, {"speedups", rows}, {"checks", checks}}, "report");
    log << md.str();
  }
};

Pipeline::Pipeline(const std::string& config_text, PipelineOptions options) : impl_(std::make_unique<Impl>()) {
  impl_->cfg = parse_config(config_text);
  impl_->hash = fnv1a_hex(to_json(impl_->cfg).dump());
  if (options.threads < 1) throw ConfigError("threads must be positive");
  impl_->options = std::move(options);
}

Pipeline Pipeline::from_file(const std::string& path, PipelineOptions options) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return Pipeline(ss.str(), std::move(options));
}

Pipeline::~Pipeline() = default;
Pipeline::Pipeline(Pipeline&&) noexcept = default;
Pipeline& Pipeline::operator=(Pipeline&&) noexcept = default;

const ExperimentConfig& Pipeline::config() const { return impl_->cfg; }
const std::string& Pipeline::config_hash() const { return impl_->hash; }
std::string Pipeline::artifact_dir() const { return impl_->dir().string(); }

const std::vector<std::string>& Pipeline::stages() {
  static const std::vector<std::string> s = {"setup", "dis", "train", "tune", "sample", "diagnose", "report"};
  return s;
}

void Pipeline::run(const std::string& stage, std::ostream& log) {
  fs::create_directories(impl_->dir());
  if (stage == "setup") {
    impl_->setup(log);
  } else if (stage == "dis") {
    impl_->dis(log);
  } else if (stage == "train") {
    impl_->train_stage(log);
  } else if (stage == "tune") {
    impl_->tune(log);
  } else if (stage == "sample") {
    impl_->sample(log);
  } else if (stage == "diagnose") {
    impl_->diagnose(log);
  } else if (stage == "report") {
    impl_->report(log);
  } else {
    throw ConfigError("unknown stage '" + stage + "'");
  }
}

void Pipeline::run_all(std::ostream& log) {
  for (const auto& s : stages()) run(s, log);
}

}  // namespace dinomc
