#pragma once

#include "dinomc/types.hpp"

#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace dinomc {

struct ProblemConfig {
  std::string kind = "diffusion_reaction";  // or "toy"
  int grid_n = 16;
  double prior_gamma = 0.03;
  double prior_delta = 3.33;
  int obs_count = 25;
  std::uint64_t obs_seed = 7;
  double noise_pct = 0.02;
  double newton_tol = 1e-10;
  int newton_max_iter = 50;
  std::uint64_t truth_seed = 11;
  Index toy_obs_dim = 8;
  double toy_operator_scale = 1.0;
};

struct SubspaceConfig {
  std::string kind = "dis";  // or "kle"
  Index r = 50;
  int n_dis = 64;
};

struct SurrogateConfig {
  Index n_t = 256;
  Index n_test = 64;
  std::vector<int> hidden = {100, 100, 100};
  int epochs = 200;
  int batch_size = 32;
  double learning_rate = 1e-3;
  int patience = 50;
  // Replace the networks by the exact reduced map (linear problems only).
  bool exact = false;
};

struct McmcConfig {
  std::vector<std::string> kernels = {"pCN", "DA-DINO-mMALA"};
  std::vector<double> dt_candidates = {0.1, 0.5, 1.0, 2.0, 4.0};
  int n_c = 4;
  Index n_s = 2000;
  Index burn_in = 200;
  Index pilot_n_s = 400;
  int tune_restarts = 1;
  int n_rm = 20;
  double linear_solve_cost = 0.1;
};

struct ExperimentConfig {
  ProblemConfig problem;
  SubspaceConfig subspace;
  SurrogateConfig surrogate;
  McmcConfig mcmc;
  std::uint64_t seed = 1;
};

// Missing keys keep their defaults; unknown keys and ill-typed values are ConfigErrors.
ExperimentConfig parse_config(const std::string& json_text);

// A stage ran before the stage that produces its inputs.
class MissingArtifactError : public std::runtime_error {
 public:
  MissingArtifactError(const std::string& path, const std::string& producer)
      : std::runtime_error("missing artifact " + path + "; run stage '" + producer + "' first"),
        producer_(producer) {}
  const std::string& producer() const { return producer_; }

 private:
  std::string producer_;
};

struct PipelineOptions {
  std::string out_root = "out";
  int threads = 1;
};

// Stages read and write <out_root>/<config hash>/. Each stage checks that the artifacts it
// consumes exist and names the stage that produces them otherwise.
class Pipeline {
 public:
  Pipeline(const std::string& config_text, PipelineOptions options);
  static Pipeline from_file(const std::string& path, PipelineOptions options);
  ~Pipeline();
  Pipeline(Pipeline&&) noexcept;
  Pipeline& operator=(Pipeline&&) noexcept;

  const ExperimentConfig& config() const;
  const std::string& config_hash() const;
  std::string artifact_dir() const;

  void run(const std::string& stage, std::ostream& log);
  void run_all(std::ostream& log);

  static const std::vector<std::string>& stages();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// 64-bit FNV-1a as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

}  // namespace dinomc
