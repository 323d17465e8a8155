#pragma once

#include "dinomc/chain.hpp"
#include "dinomc/geometry.hpp"
#include "dinomc/training.hpp"

#include <string>
#include <vector>

namespace dinomc {

// Carried by every manifest written to disk.
struct Provenance {
  std::string config_hash;
  std::uint64_t master_seed = 0;
  std::string stage;
};

std::string code_version();

// Packed little-endian float64 blob: magic, count, then (rows, cols, column-major data) per matrix.
void write_matrices(const std::string& path, const std::vector<Matrix>& mats);
std::vector<Matrix> read_matrices(const std::string& path);

// Each artifact is <stem>.bin plus a <stem>.json manifest.
void save_basis(const std::string& stem, const ReducedBasis& basis, const Provenance& prov);
ReducedBasis load_basis(const std::string& stem, PriorPtr prior);

void save_dataset(const std::string& stem, const Dataset& data, const Provenance& prov);
Dataset load_dataset(const std::string& stem);

void save_network(const std::string& stem, const Mlp& net, const Provenance& prov);
Mlp load_network(const std::string& stem);

void save_laplace(const std::string& stem, const LaplacePack& pack, const Provenance& prov);
LaplacePack load_laplace(const std::string& stem);

void save_chain(const std::string& stem, const ChainRecord& rec, const Provenance& prov);
ChainRecord load_chain(const std::string& stem);

bool artifact_exists(const std::string& stem);

}  // namespace dinomc
