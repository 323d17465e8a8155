#pragma once

#include "dinomc/types.hpp"

#include <cstdint>
#include <random>

namespace dinomc {

using Rng = std::mt19937_64;

// Stateless 64-bit mixer; used to derive independent task seeds from a master seed.
std::uint64_t splitmix64(std::uint64_t x);

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index);

Vector standard_normal(Rng& rng, Index n);
double standard_normal(Rng& rng);
double uniform01(Rng& rng);

}  // namespace dinomc
