#pragma once
// Seeded random streams. Everything stochastic in a run draws from a stream
// derived from (seed, purpose, epoch, batch, ...), so any step can be
// replayed without carrying generator state around.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace avt {

using Rng = std::mt19937_64;

inline Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * stream.size());
  auto push = [&](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (auto s : stream) push(s);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

// Uniform on [0, 1) with 53 random bits; independent of the standard
// library's distribution implementations.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(rng() % n);
}

// Standard normal values by the Box-Muller transform, two per pair of draws.
template <typename T>
void fill_normal(Rng& rng, std::span<T> out) {
  std::size_t i = 0;
  while (i < out.size()) {
    const double u1 = 1.0 - uniform01(rng);  // (0, 1]
    const double u2 = uniform01(rng);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    out[i++] = static_cast<T>(r * std::cos(a));
    if (i < out.size()) out[i++] = static_cast<T>(r * std::sin(a));
  }
}

}  // namespace avt
