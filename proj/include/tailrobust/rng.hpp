#pragma once

#include <cstdint>
#include <random>

namespace tailrobust {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent engine for substream `index` of `seed`.
inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t index) {
  const std::uint64_t s = splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32)};
  return std::mt19937_64(seq);
}

/// Uniform on (0,1), never returning exactly 0 or 1.
inline double open_uniform(std::mt19937_64& g) {
  for (;;) {
    const double u = std::generate_canonical<double, 53>(g);
    if (u > 0.0 && u < 1.0) return u;
  }
}

}  // namespace tailrobust
