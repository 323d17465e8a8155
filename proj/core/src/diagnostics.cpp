#include "dinomc/diagnostics.hpp"

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>

namespace dinomc {

namespace {

void check_pool(const std::vector<Matrix>& chains) {
  if (chains.empty()) throw ParameterError("diagnostics: empty chain pool");
  for (const auto& c : chains) {
    if (c.rows() != chains[0].rows() || c.cols() != chains[0].cols()) {
      throw DimensionError("diagnostics: chains must have equal shapes");
    }
  }
}

// Biased autocovariance of a centered series for all lags, via zero-padded FFT.
std::vector<double> autocovariance(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::size_t m = 1;
  while (m < 2 * n) m <<= 1;
  std::vector<double> padded(m, 0.0);
  std::copy(x.begin(), x.end(), padded.begin());
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> freq;
  fft.fwd(freq, padded);
  for (auto& f : freq) f = std::complex<double>(std::norm(f), 0.0);
  std::vector<double> ac;
  fft.inv(ac, freq);
  ac.resize(n);
  for (auto& v : ac) v /= static_cast<double>(n);
  return ac;
}

}  // namespace

Vector ess_percent(const std::vector<Matrix>& chains) {
  check_pool(chains);
  const Index d = chains[0].rows();
  const Index n = chains[0].cols();
  if (n < 100) throw ParameterError("ess_percent: need at least 100 samples per chain");
  const std::size_t nc = chains.size();
  const double nd = static_cast<double>(n);
  Vector out(d);

  for (Index i = 0; i < d; ++i) {
    std::vector<double> means(nc), vars(nc);
    std::vector<std::vector<double>> acs(nc);
    for (std::size_t k = 0; k < nc; ++k) {
      const auto row = chains[k].row(i);
      const double mu = row.mean();
      std::vector<double> x(static_cast<std::size_t>(n));
      for (Index j = 0; j < n; ++j) x[static_cast<std::size_t>(j)] = row[j] - mu;
      acs[k] = autocovariance(x);
      means[k] = mu;
      vars[k] = acs[k][0] * nd / (nd - 1.0);
    }
    double w = 0.0;
    for (double v : vars) w += v;
    w /= static_cast<double>(nc);
    double v_hat = (nd - 1.0) / nd * w;
    if (nc > 1) {
      double grand = 0.0;
      for (double mu : means) grand += mu;
      grand /= static_cast<double>(nc);
      double b = 0.0;
      for (double mu : means) b += (mu - grand) * (mu - grand);
      v_hat += b / static_cast<double>(nc - 1);
    }
    if (!(w > 0.0) || !(v_hat > 0.0)) {
      out[i] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    auto mac = [&](Index t) {
      double s = 0.0;
      for (const auto& ac : acs) s += ac[static_cast<std::size_t>(t)];
      return 1.0 - (w - s / static_cast<double>(nc)) / v_hat;
    };
    // Pairs (MAC(2p), MAC(2p+1)) are summed while positive.
    double sum = 0.0;
    for (Index p = 0; 2 * p + 1 < n; ++p) {
      const double a = mac(2 * p);
      const double b = mac(2 * p + 1);
      if (a + b <= 0.0) break;
      sum += (p == 0 ? 0.0 : a) + b;
    }
    out[i] = 100.0 / (1.0 + 2.0 * sum);
  }
  return out;
}

EssSummary summarize_ess(const Vector& ess) {
  EssSummary s;
  std::vector<double> vals;
  for (Index i = 0; i < ess.size(); ++i) {
    if (std::isnan(ess[i])) {
      ++s.missing;
      continue;
    }
    double v = ess[i];
    if (v > kEssReportCap) {
      v = kEssReportCap;
      s.capped = true;
    }
    vals.push_back(v);
  }
  if (vals.empty()) {
    s.median = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  std::sort(vals.begin(), vals.end());
  const std::size_t m = vals.size();
  s.median = (m % 2 == 1) ? vals[m / 2] : 0.5 * (vals[m / 2 - 1] + vals[m / 2]);
  return s;
}

double gaussian_w2_trace(const Matrix& W, const Matrix& V) {
  if (W.rows() != W.cols() || V.rows() != V.cols() || W.rows() != V.rows()) {
    throw DimensionError("gaussian_w2_trace: need square matrices of equal size");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> ew(0.5 * (W + W.transpose()));
  const Vector lw = ew.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Matrix Wh = ew.eigenvectors() * lw.asDiagonal() * ew.eigenvectors().transpose();
  const Matrix inner = Wh * V * Wh;
  Eigen::SelfAdjointEigenSolver<Matrix> ei(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  const double cross = ei.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return W.trace() + V.trace() - 2.0 * cross;
}

std::vector<Index> default_checkpoints(Index n) {
  std::vector<Index> pos;
  for (Index p = 128; p < n; p *= 2) pos.push_back(p);
  if (n >= 2) pos.push_back(n);
  return pos;
}

std::vector<MpsrfPoint> wasserstein_mpsrf(const std::vector<Matrix>& chains, double weight,
                                          std::vector<Index> positions) {
  check_pool(chains);
  if (chains.size() < 2) throw ParameterError("wasserstein_mpsrf: need at least two chains");
  if (!(weight > 0.0)) throw ParameterError("wasserstein_mpsrf: weight must be positive");
  const Index n = chains[0].cols();
  const Index d = chains[0].rows();
  if (positions.empty()) positions = default_checkpoints(n);
  const double nc = static_cast<double>(chains.size());
  std::vector<MpsrfPoint> out;
  for (Index p : positions) {
    if (p < 2 || p > n) throw ParameterError("wasserstein_mpsrf: checkpoint out of range");
    Matrix W = Matrix::Zero(d, d);
    Matrix means(d, static_cast<Index>(chains.size()));
    for (std::size_t k = 0; k < chains.size(); ++k) {
      const auto block = chains[k].leftCols(p);
      const Vector mu = block.rowwise().mean();
      const Matrix centered = block.colwise() - mu;
      W.noalias() += centered * centered.transpose();
      means.col(static_cast<Index>(k)) = mu;
    }
    const double pd = static_cast<double>(p);
    W /= nc * (pd - 1.0);
    const Vector grand = means.rowwise().mean();
    const Matrix dm = means.colwise() - grand;
    Matrix V = (pd - 1.0) / pd * W + (nc + 1.0) / (nc * (nc - 1.0)) * (dm * dm.transpose());
    W *= weight;
    V *= weight;
    out.push_back({p, gaussian_w2_trace(W, V), V.trace()});
  }
  return out;
}

ArMsj ar_msj(const Matrix& samples, const std::vector<std::uint8_t>& accepted, double weight) {
  if (samples.cols() < 2) throw ParameterError("ar_msj: chain needs at least two samples");
  ArMsj r;
  std::size_t acc = 0;
  for (auto a : accepted) acc += a ? 1 : 0;
  r.ar = accepted.empty() ? 0.0 : 100.0 * static_cast<double>(acc) / static_cast<double>(accepted.size());
  double s = 0.0;
  for (Index j = 0; j + 1 < samples.cols(); ++j) s += (samples.col(j + 1) - samples.col(j)).squaredNorm();
  r.msj = weight * s / static_cast<double>(samples.cols() - 1);
  return r;
}

double effective_sampling_speed(const SamplerStats& s) {
  if (!(s.median_ess_percent > 0.0)) throw ParameterError("effective sampling speed: zero ESS for " + s.name);
  if (!(s.cost_per_100 > 0.0)) throw ParameterError("effective sampling speed: zero cost for " + s.name);
  return s.median_ess_percent / s.cost_per_100;
}

SpeedupReport speedup_report(const SamplerStats& a, const SamplerStats& b, const std::vector<double>& n_ess_grid) {
  SpeedupReport rep;
  rep.effective_speedup = effective_sampling_speed(a) / effective_sampling_speed(b);
  // Cost per effective sample.
  const double ca = a.cost_per_100 / a.median_ess_percent;
  const double cb = b.cost_per_100 / b.median_ess_percent;
  for (double n : n_ess_grid) {
    if (!(n > 0.0)) throw ParameterError("speedup_report: n_ess must be positive");
    rep.total.emplace_back(n, (b.offline_cost + n * cb) / (a.offline_cost + n * ca));
  }
  const double dO = a.offline_cost - b.offline_cost;
  const double dc = cb - ca;
  if (dc != 0.0 && dO / dc > 0.0) rep.break_even = dO / dc;
  return rep;
}

}  // namespace dinomc
