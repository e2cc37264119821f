#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace intentaug {

// std::mt19937_64 has a fully specified output sequence; the standard
// distributions do not, so bounded draws are implemented here.
using Engine = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for an independent stream identified by (seed, a, b).
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b);
}

/// Uniform integer in [0, bound) by rejection; bound must be positive.
inline std::uint64_t uniform_below(Engine& eng, std::uint64_t bound) {
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t r = eng();
    if (r >= threshold) return r % bound;
  }
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform_unit(Engine& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

/// Moves a uniform random k-subset of `items` to its front (partial Fisher-Yates).
template <typename T>
void partial_shuffle(std::span<T> items, std::size_t k, Engine& eng) {
  for (std::size_t i = 0; i < k && i < items.size(); ++i) {
    const auto j = i + static_cast<std::size_t>(uniform_below(eng, items.size() - i));
    using std::swap;
    swap(items[i], items[j]);
  }
}

}  // namespace intentaug
