#pragma once

#include <cstdint>
#include <random>

namespace manas {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent child seeds from a root
// seed plus stream labels (user id, epoch, sample index, ...).
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = mix64(root ^ 0x6a09e667f3bcc908ULL);
  s = mix64(s ^ a);
  s = mix64(s ^ b);
  return mix64(s ^ c);
}

inline Rng make_rng(std::uint64_t root, std::uint64_t a = 0,
                    std::uint64_t b = 0, std::uint64_t c = 0) {
  return Rng(derive_seed(root, a, b, c));
}

inline double rand_normal(Rng& rng, double mean, double stddev) {
  std::normal_distribution<double> d(mean, stddev);
  return d(rng);
}

inline double rand_uniform(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  return d(rng);
}

// Uniform integer in [0, n).
inline int rand_index(Rng& rng, int n) {
  std::uniform_int_distribution<int> d(0, n - 1);
  return d(rng);
}

}  // namespace manas
