#include "dinomc/chain.hpp"

#include "dinomc/parallel.hpp"

namespace dinomc {

namespace {
double fraction(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}
std::size_t count(const std::vector<std::uint8_t>& v) {
  std::size_t c = 0;
  for (auto x : v) c += x ? 1 : 0;
  return c;
}
}  // namespace

double ChainRecord::acceptance_rate() const { return fraction(count(accepted), accepted.size()); }
double ChainRecord::stage1_rate() const { return fraction(count(stage1_pass), stage1_pass.size()); }
double ChainRecord::stage2_rate() const { return fraction(count(accepted), count(stage1_pass)); }

ChainRecord run_chain(Kernel& kernel, const Vector& init, Index n_s, Index burn_in, std::uint64_t seed,
                      const ChainOptions& options) {
  if (n_s < 0 || burn_in < 0) throw ParameterError("run_chain: negative chain length");
  ChainRecord rec;
  rec.kernel = to_string(kernel.kind());
  rec.dt = kernel.dt();
  rec.seed = seed;
  rec.burn_in = burn_in;

  Rng rng(seed);
  kernel.reset_counters();
  kernel.initialize(init);
  std::uint64_t failures = 0;
  for (Index k = 0; k < burn_in; ++k) {
    if (kernel.step(rng).failed) ++failures;
  }
  rec.burn_in_counters = kernel.counters();
  kernel.reset_counters();

  const Index d = kernel.position().size();
  rec.samples.resize(d, n_s + 1);
  rec.misfits.resize(n_s + 1);
  rec.samples.col(0) = kernel.position();
  rec.misfits[0] = kernel.current_misfit();
  rec.accepted.reserve(static_cast<std::size_t>(n_s));
  rec.stage1_pass.reserve(static_cast<std::size_t>(n_s));
  rec.failed.reserve(static_cast<std::size_t>(n_s));

  failures = 0;
  Index k = 0;
  for (; k < n_s; ++k) {
    const StepFlags f = kernel.step(rng);
    rec.accepted.push_back(f.accepted);
    rec.stage1_pass.push_back(f.stage1_pass);
    rec.failed.push_back(f.failed);
    rec.samples.col(k + 1) = kernel.position();
    rec.misfits[k + 1] = kernel.current_misfit();
    if (f.failed) ++failures;
    if (k + 1 >= options.min_steps_before_abort &&
        static_cast<double>(failures) > options.max_failure_fraction * static_cast<double>(k + 1)) {
      rec.aborted = true;
      ++k;
      break;
    }
  }
  if (rec.aborted) {
    rec.samples.conservativeResize(Eigen::NoChange, k + 1);
    rec.misfits.conservativeResize(k + 1);
  }
  rec.counters = kernel.counters();
  return rec;
}

std::vector<ChainRecord> run_chains(const KernelFactory& factory, const std::function<Vector(int)>& init, int n_c,
                                    Index n_s, Index burn_in, std::uint64_t master_seed, int threads,
                                    const ChainOptions& options) {
  if (n_c < 1) throw ParameterError("run_chains: need at least one chain");
  std::vector<ChainRecord> out(static_cast<std::size_t>(n_c));
  parallel_for(out.size(), threads, [&](std::size_t c) {
    auto kernel = factory();
    out[c] = run_chain(*kernel, init(static_cast<int>(c)), n_s, burn_in,
                       derive_seed(master_seed, 0xC4A1, static_cast<std::uint64_t>(c)), options);
  });
  return out;
}

}  // namespace dinomc
