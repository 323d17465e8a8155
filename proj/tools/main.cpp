#include "dinomc/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Derivative-informed surrogate MCMC pipeline"};
  std::string config_path;
  std::string stage = "all";
  dinomc::PipelineOptions options;
  app.add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  std::vector<std::string> choices = dinomc::Pipeline::stages();
  choices.push_back("all");
  app.add_option("--stage", stage, "Stage to run, or 'all'")->check(CLI::IsMember(choices));
  app.add_option("--threads", options.threads, "Worker threads for chains and data generation")
      ->check(CLI::PositiveNumber);
  app.add_option("--out", options.out_root, "Artifact root; outputs go to <out>/<config hash>");
  CLI11_PARSE(app, argc, argv);

  try {
    auto pipeline = dinomc::Pipeline::from_file(config_path, options);
    std::cerr << "artifacts: " << pipeline.artifact_dir() << "\n";
    if (stage == "all") {
      pipeline.run_all(std::cout);
    } else {
      pipeline.run(stage, std::cout);
    }
  } catch (const dinomc::MissingArtifactError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const dinomc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
