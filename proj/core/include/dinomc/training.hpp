#pragma once

#include "dinomc/mlp.hpp"
#include "dinomc/subspace.hpp"

#include <string>
#include <vector>

namespace dinomc {

// Column k of X, Y and block k (d_y x r) of Jac come from one prior draw.
struct Dataset {
  Matrix X;    // r x n
  Matrix Y;    // d_y x n, noise-whitened observables
  Matrix Jac;  // d_y x (r n), empty when generated without Jacobians
  std::uint64_t seed = 0;
  std::uint64_t failures = 0;
  std::string basis_id;

  Index size() const { return X.cols(); }
  Index input_dim() const { return X.rows(); }
  Index output_dim() const { return Y.rows(); }
  bool with_jacobian() const { return Jac.cols() > 0; }
  Eigen::Block<const Matrix, Eigen::Dynamic, Eigen::Dynamic, true> jacobian(Index k) const { return Jac.middleCols(k * X.rows(), X.rows()); }

  Dataset subset(const std::vector<Index>& idx) const;
};

struct DatasetOptions {
  Index samples = 256;
  bool with_jacobian = true;
  std::uint64_t seed = 0;
  int threads = 1;
};

// One forward solve per record plus min(r, d_y) linearized solves with Jacobians.
// More than 25% failed draws aborts.
Dataset generate_dataset(const ForwardModel& model, const ReducedBasis& basis, const DatasetOptions& options,
                         CostCounters* counters = nullptr);

enum class LossKind { L2, H1 };

std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);

struct LossValue {
  double total = 0.0;
  double observable = 0.0;
  double jacobian = 0.0;
};

// (1/2n) sum |y - f(x)|^2, plus (1/2n) sum |J - df/dx|_F^2 for H1.
LossValue evaluate_loss(const Mlp& net, const Dataset& data, LossKind kind);
LossValue evaluate_loss(const Mlp& net, const Dataset& data, const std::vector<Index>& idx, LossKind kind);

// Loss and its exact weight gradient in Mlp::parameters() layout. The H1 term is
// differentiated by a reverse sweep over the forward-mode input tangents.
LossValue loss_gradient(const Mlp& net, const Dataset& data, const std::vector<Index>& idx, LossKind kind,
                        Vector& gradient);

struct TrainOptions {
  LossKind loss = LossKind::H1;
  int epochs = 200;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double validation_fraction = 0.1;
  int patience = 50;
  bool normalize_outputs = true;
  std::uint64_t seed = 0;
};

struct TrainResult {
  Mlp network;
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  // 0 keeps the initial weights; epoch e scored validation_loss[e - 1].
  int best_epoch = -1;
  bool early_stopped = false;
  bool diverged = false;
};

TrainResult train(const Mlp& initial, const Dataset& data, const TrainOptions& options);

struct GeneralizationError {
  double observable = 0.0;
  double jacobian = 0.0;
};

// sqrt(mean |y - f|^2 / |y|^2) and the Frobenius analog for reduced Jacobians.
GeneralizationError generalization_errors(const Mlp& net, const Dataset& test);

}  // namespace dinomc
