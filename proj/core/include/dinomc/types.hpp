#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dinomc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Index = Eigen::Index;

class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Nonlinear solve did not reach tolerance; carries the last residual norm.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double residual, int iterations)
      : std::runtime_error(what), residual_(residual), iterations_(iterations) {}
  double residual() const { return residual_; }
  int iterations() const { return iterations_; }

 private:
  double residual_;
  int iterations_;
};

// A network produced a non-finite value.
class PoisonedModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require_dim(Index got, Index want, const char* what) {
  if (got != want) {
    throw DimensionError(std::string(what) + ": expected length " + std::to_string(want) +
                         ", got " + std::to_string(got));
  }
}

inline bool all_finite(const Vector& v) { return v.allFinite(); }

// Per-chain and per-stage solver accounting. One forward solve is one unit of cost;
// jvp/vjp count linearized solves, surrogate_solves count forward solves spent inside
// a sample-averaged reduced map.
struct CostCounters {
  std::uint64_t forward_solves = 0;
  std::uint64_t jvp_solves = 0;
  std::uint64_t vjp_solves = 0;
  std::uint64_t surrogate_solves = 0;
  std::uint64_t network_evals = 0;
  std::uint64_t prior_draws = 0;
  std::uint64_t solver_failures = 0;

  CostCounters& operator+=(const CostCounters& o) {
    forward_solves += o.forward_solves;
    jvp_solves += o.jvp_solves;
    vjp_solves += o.vjp_solves;
    surrogate_solves += o.surrogate_solves;
    network_evals += o.network_evals;
    prior_draws += o.prior_draws;
    solver_failures += o.solver_failures;
    return *this;
  }

  // Forward-solve-equivalent cost. Linearized solves reuse the forward factorization and
  // are charged linear_solve_cost units each; network evaluations are free.
  double cost_units(double linear_solve_cost) const {
    return static_cast<double>(forward_solves + surrogate_solves) +
           linear_solve_cost * static_cast<double>(jvp_solves + vjp_solves);
  }
};

}  // namespace dinomc
