#pragma once

#include "dinomc/types.hpp"

#include <cstdint>
#include <vector>

namespace dinomc {

enum class Activation { Gelu, Identity };

// Dense network x -> shift + scale .* (W_L s(... s(W_1 x + b_1) ...) + b_L) with an
// activation s on every hidden layer. The output affine map is frozen (not trained).
class Mlp {
 public:
  Mlp() = default;
  // He-style normal init, seeded. widths = {in, hidden..., out}.
  Mlp(std::vector<int> widths, std::uint64_t seed, Activation act = Activation::Gelu);

  const std::vector<int>& widths() const { return widths_; }
  Index input_dim() const { return widths_.front(); }
  Index output_dim() const { return widths_.back(); }
  std::size_t layer_count() const { return weights.size(); }
  Activation activation() const { return activation_; }

  Vector forward(const Vector& x) const;
  Matrix jacobian(const Vector& x) const;
  void forward_jacobian(const Vector& x, Vector& value, Matrix& jac) const;

  Index parameter_count() const;
  Vector parameters() const;
  void set_parameters(const Vector& p);

  // Throws PoisonedModelError if any weight is non-finite.
  void check_finite() const;

  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  Vector output_shift;
  Vector output_scale;

 private:
  std::vector<int> widths_;
  Activation activation_ = Activation::Gelu;
};

// Exact-erf GELU and its first two derivatives.
double gelu(double z);
double gelu_prime(double z);
double gelu_second(double z);

}  // namespace dinomc
