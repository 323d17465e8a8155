#include "dinomc/mlp.hpp"

#include "dinomc/rng.hpp"

#include <cmath>
#include <string>

namespace dinomc {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double normal_cdf(double z) { return 0.5 * std::erfc(-z * kInvSqrt2); }
double normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }
}  // namespace

double gelu(double z) { return z * normal_cdf(z); }
double gelu_prime(double z) { return normal_cdf(z) + z * normal_pdf(z); }
double gelu_second(double z) { return normal_pdf(z) * (2.0 - z * z); }

Mlp::Mlp(std::vector<int> widths, std::uint64_t seed, Activation act) : widths_(std::move(widths)), activation_(act) {
  if (widths_.size() < 2) throw ParameterError("mlp: need at least input and output widths");
  for (int w : widths_)
    if (w < 1) throw ParameterError("mlp: layer widths must be positive");
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const int fan_in = widths_[l];
    const int fan_out = widths_[l + 1];
    const double sd = std::sqrt(2.0 / fan_in);
    Matrix W(fan_out, fan_in);
    for (Index j = 0; j < W.cols(); ++j)
      for (Index i = 0; i < W.rows(); ++i) W(i, j) = sd * standard_normal(rng);
    weights.push_back(std::move(W));
    biases.push_back(Vector::Zero(fan_out));
  }
  output_shift = Vector::Zero(widths_.back());
  output_scale = Vector::Ones(widths_.back());
}

void Mlp::check_finite() const {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (!weights[l].allFinite() || !biases[l].allFinite()) {
      throw PoisonedModelError("mlp: non-finite weights in layer " + std::to_string(l));
    }
  }
  if (!output_shift.allFinite() || !output_scale.allFinite()) throw PoisonedModelError("mlp: non-finite output map");
}

Vector Mlp::forward(const Vector& x) const {
  require_dim(x.size(), input_dim(), "mlp input");
  Vector a = x;
  const std::size_t L = weights.size();
  for (std::size_t l = 0; l + 1 < L; ++l) {
    Vector z = weights[l] * a + biases[l];
    if (activation_ == Activation::Gelu) z = z.unaryExpr([](double v) { return gelu(v); });
    a = std::move(z);
  }
  Vector out = weights[L - 1] * a + biases[L - 1];
  out = output_shift + output_scale.cwiseProduct(out);
  if (!out.allFinite()) {
    check_finite();
    throw PoisonedModelError("mlp: non-finite output");
  }
  return out;
}

void Mlp::forward_jacobian(const Vector& x, Vector& value, Matrix& jac) const {
  require_dim(x.size(), input_dim(), "mlp input");
  const std::size_t L = weights.size();
  Vector a = x;
  Matrix T = Matrix::Identity(input_dim(), input_dim());
  for (std::size_t l = 0; l + 1 < L; ++l) {
    Vector z = weights[l] * a + biases[l];
    Matrix Tz = weights[l] * T;
    if (activation_ == Activation::Gelu) {
      const Vector sp = z.unaryExpr([](double v) { return gelu_prime(v); });
      a = z.unaryExpr([](double v) { return gelu(v); });
      T = sp.asDiagonal() * Tz;
    } else {
      a = std::move(z);
      T = std::move(Tz);
    }
  }
  const Vector out = weights[L - 1] * a + biases[L - 1];
  value = output_shift + output_scale.cwiseProduct(out);
  jac = output_scale.asDiagonal() * (weights[L - 1] * T);
  if (!value.allFinite() || !jac.allFinite()) {
    check_finite();
    throw PoisonedModelError("mlp: non-finite output");
  }
}

Matrix Mlp::jacobian(const Vector& x) const {
  Vector v;
  Matrix J;
  forward_jacobian(x, v, J);
  return J;
}

Index Mlp::parameter_count() const {
  Index n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

Vector Mlp::parameters() const {
  Vector p(parameter_count());
  Index k = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    p.segment(k, weights[l].size()) = Eigen::Map<const Vector>(weights[l].data(), weights[l].size());
    k += weights[l].size();
    p.segment(k, biases[l].size()) = biases[l];
    k += biases[l].size();
  }
  return p;
}

void Mlp::set_parameters(const Vector& p) {
  require_dim(p.size(), parameter_count(), "mlp parameters");
  Index k = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    Eigen::Map<Vector>(weights[l].data(), weights[l].size()) = p.segment(k, weights[l].size());
    k += weights[l].size();
    biases[l] = p.segment(k, biases[l].size());
    k += biases[l].size();
  }
}

}  // namespace dinomc
