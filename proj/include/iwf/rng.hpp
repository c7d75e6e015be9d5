#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace iwf {

// SplitMix64 finalizer. Used both as a seed mixer and to derive
// independent sub-streams from a master seed.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Derives a sub-seed from a master seed and a path of indices.
//
// derive_seed(s, {a, b}) depends only on (s, a, b): adding more users or
// trials never perturbs the streams of existing ones.
inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t h = splitmix64(master);
  for (std::uint64_t idx : path) h = splitmix64(h ^ splitmix64(idx + 0x632BE59BD9B4E019ULL));
  return h;
}

using Rng = std::mt19937_64;

}  // namespace iwf
