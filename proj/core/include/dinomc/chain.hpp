#pragma once

#include "dinomc/kernels.hpp"

#include <functional>
#include <string>
#include <vector>

namespace dinomc {

// Samples column 0 is the position after burn-in; column k the position after step k.
struct ChainRecord {
  std::string kernel;
  double dt = 0.0;
  std::uint64_t seed = 0;
  Index burn_in = 0;
  Matrix samples;
  Vector misfits;
  std::vector<std::uint8_t> accepted;
  std::vector<std::uint8_t> stage1_pass;
  std::vector<std::uint8_t> failed;
  CostCounters counters;          // recorded steps only
  CostCounters burn_in_counters;  // initialization and burn-in
  bool aborted = false;

  Index steps() const { return static_cast<Index>(accepted.size()); }
  double acceptance_rate() const;
  double stage1_rate() const;
  // Accepted / stage-1 passes; equals acceptance_rate for single-stage kernels.
  double stage2_rate() const;
};

struct ChainOptions {
  double max_failure_fraction = 0.2;
  Index min_steps_before_abort = 50;
};

// Deterministic given the seed. Aborts (flagged, truncated) when failed proposals exceed
// the allowed fraction of steps.
ChainRecord run_chain(Kernel& kernel, const Vector& init, Index n_s, Index burn_in, std::uint64_t seed,
                      const ChainOptions& options = {});

using KernelFactory = std::function<std::unique_ptr<Kernel>()>;

// Chain k uses seed derive_seed(master_seed, 0xC4A1, k) and init(k).
std::vector<ChainRecord> run_chains(const KernelFactory& factory, const std::function<Vector(int)>& init, int n_c,
                                    Index n_s, Index burn_in, std::uint64_t master_seed, int threads,
                                    const ChainOptions& options = {});

}  // namespace dinomc
