#pragma once

#include "dinomc/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace dinomc {

// Chains are d x n matrices (one row per DoF) of equal shape.

// Per-DoF multichain ESS% with Geyer initial-positive-pair truncation. Autocovariances use
// the biased (1/n) estimator. DoFs with zero variance are NaN.
Vector ess_percent(const std::vector<Matrix>& chains);

constexpr double kEssReportCap = 150.0;

struct EssSummary {
  double median = 0.0;
  Index missing = 0;
  bool capped = false;  // some DoF exceeded kEssReportCap and was clipped
};

EssSummary summarize_ess(const Vector& ess);

// Tr(W + V - 2 (W^{1/2} V W^{1/2})^{1/2}) for symmetric PSD W, V.
double gaussian_w2_trace(const Matrix& W, const Matrix& V);

struct MpsrfPoint {
  Index position = 0;
  double value = 0.0;
  double trace_v = 0.0;
};

// Default checkpoints 2^7, 2^8, ... and n. Samples are weighted by sqrt(weight) so that
// weight = h^2 gives the L2 (mass) inner product on the grid.
std::vector<Index> default_checkpoints(Index n);
std::vector<MpsrfPoint> wasserstein_mpsrf(const std::vector<Matrix>& chains, double weight = 1.0,
                                          std::vector<Index> positions = {});

struct ArMsj {
  double ar = 0.0;   // percent
  double msj = 0.0;
};

// AR from per-step acceptance flags; MSJ over consecutive stored samples with the given weight.
ArMsj ar_msj(const Matrix& samples, const std::vector<std::uint8_t>& accepted, double weight = 1.0);

struct SamplerStats {
  std::string name;
  double median_ess_percent = 0.0;
  double cost_per_100 = 0.0;  // forward-solve-equivalent units per 100 samples
  double offline_cost = 0.0;
};

double effective_sampling_speed(const SamplerStats& s);

struct SpeedupReport {
  double effective_speedup = 0.0;                  // speed(a) / speed(b)
  std::vector<std::pair<double, double>> total;    // (n_ess, total speedup)
  std::optional<double> break_even;                // n_ess where the total speedup equals 1
};

// Speedup of sampler a over sampler b including offline cost.
SpeedupReport speedup_report(const SamplerStats& a, const SamplerStats& b, const std::vector<double>& n_ess_grid);

}  // namespace dinomc
