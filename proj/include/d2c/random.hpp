#pragma once

#include <cstdint>
#include <random>

#include "d2c/numerics.hpp"

namespace d2c {

/// Generator for an independent stream: the (seed, stream) pair is mixed with
/// splitmix64 so neighbouring streams are decorrelated and the result never
/// depends on thread scheduling.
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream);

/// Seed for a pipeline stage, derived from the master seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stage);

/// Vector of i.i.d. N(0, sigma^2) samples.
Vector gaussian_vector(std::mt19937_64& rng, std::size_t n, double sigma = 1.0);

}  // namespace d2c
