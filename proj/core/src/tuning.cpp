#include "dinomc/tuning.hpp"

#include "dinomc/diagnostics.hpp"

#include <algorithm>
#include <cmath>

namespace dinomc {

TuneReport tune_step_size(const KernelForStep& factory, const std::function<Vector(int)>& init,
                          std::vector<double> candidates, const TuneOptions& options) {
  if (candidates.empty()) throw ParameterError("tune_step_size: no candidates");
  if (options.restarts < 1) throw ParameterError("tune_step_size: need at least one restart");
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  TuneReport rep;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    TuneCandidate tc;
    tc.dt = candidates[c];
    std::vector<double> ars;
    for (int k = 0; k < options.restarts; ++k) {
      auto kernel = factory(tc.dt);
      const ChainRecord rec = run_chain(*kernel, init(k), options.pilot_n_s, options.burn_in,
                                        derive_seed(options.seed, 0x70E, c * 1000 + static_cast<std::size_t>(k)));
      const ArMsj am = ar_msj(rec.samples, rec.accepted, options.mass_weight);
      ars.push_back(am.ar);
      tc.ar += am.ar;
      tc.msj += am.msj;
      tc.median_ess += summarize_ess(ess_percent({rec.samples})).median;
      tc.counters += rec.counters;
      tc.counters += rec.burn_in_counters;
    }
    const double nr = static_cast<double>(options.restarts);
    tc.ar /= nr;
    tc.msj /= nr;
    tc.median_ess /= nr;
    for (double a : ars) tc.ar_spread = std::max(tc.ar_spread, std::abs(a - tc.ar));
    rep.candidates.push_back(tc);
  }

  const auto& cs = rep.candidates;
  std::size_t prefix = 1;
  while (prefix < cs.size() && cs[prefix].ar <= cs[prefix - 1].ar && cs[prefix].msj >= cs[prefix - 1].msj) ++prefix;
  rep.prefix_length = static_cast<Index>(prefix);
  if (prefix == 1 && cs.size() > 1) rep.flagged = true;

  std::size_t best = 0;
  for (std::size_t i = 1; i < prefix; ++i) {
    const double e = std::isnan(cs[i].median_ess) ? -1.0 : cs[i].median_ess;
    const double eb = std::isnan(cs[best].median_ess) ? -1.0 : cs[best].median_ess;
    if (e > eb) best = i;
  }
  if (options.ar_variation_rule) {
    while (best > 0 && cs[best].ar_spread > options.ar_tolerance) --best;
    if (cs[best].ar_spread > options.ar_tolerance) rep.flagged = true;
  }
  rep.chosen_dt = cs[best].dt;
  return rep;
}

}  // namespace dinomc
