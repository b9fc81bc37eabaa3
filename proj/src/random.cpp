#include "d2c/random.hpp"

namespace d2c {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL)));
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stage) {
  return splitmix64(splitmix64(seed) + stage);
}

Vector gaussian_vector(std::mt19937_64& rng, std::size_t n, double sigma) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Vector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = sigma * dist(rng);
  return v;
}

}  // namespace d2c
