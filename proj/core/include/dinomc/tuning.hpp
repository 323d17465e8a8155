#pragma once

#include "dinomc/chain.hpp"

#include <functional>
#include <vector>

namespace dinomc {

struct TuneCandidate {
  double dt = 0.0;
  double ar = 0.0;           // percent, averaged over restarts
  double msj = 0.0;
  double median_ess = 0.0;   // single-chain ESS%, averaged over restarts
  double ar_spread = 0.0;    // max |AR_restart - AR| in percentage points
  CostCounters counters;
};

struct TuneReport {
  std::vector<TuneCandidate> candidates;  // sorted by dt
  Index prefix_length = 0;
  double chosen_dt = 0.0;
  bool flagged = false;  // empty monotone prefix or AR rule could not be met
};

struct TuneOptions {
  Index pilot_n_s = 1000;
  Index burn_in = 100;
  int restarts = 1;
  // Step down from the chosen dt until every restart's AR is within ar_tolerance
  // percentage points of the restart average.
  bool ar_variation_rule = false;
  double ar_tolerance = 5.0;
  double mass_weight = 1.0;
  std::uint64_t seed = 0;
};

using KernelForStep = std::function<std::unique_ptr<Kernel>(double dt)>;

// Pilot chains per candidate; down-selects the largest prefix with AR nonincreasing and
// MSJ nondecreasing in dt, then maximizes the median single-chain ESS% inside it.
TuneReport tune_step_size(const KernelForStep& factory, const std::function<Vector(int)>& init,
                          std::vector<double> candidates, const TuneOptions& options);

}  // namespace dinomc
