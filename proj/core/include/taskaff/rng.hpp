#pragma once

#include <cstdint>
#include <random>

namespace taskaff {

using Rng = std::mt19937_64;

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Named random streams. Every random draw in the library is keyed by
// (global seed, stream, index) so parallel work stays reproducible.
enum class Stream : std::uint64_t {
  kSubsets = 1,
  kTraining = 2,
  kSplits = 3,
  kClustering = 4,
  kPlanted = 5,
  kHoldout = 6,
  kLogistic = 7,
  kGrouping = 8,
  kFeatures = 9,
};

constexpr std::uint64_t derive_seed(std::uint64_t base, Stream stream,
                                    std::uint64_t index = 0) noexcept {
  return mix64(mix64(base ^ mix64(static_cast<std::uint64_t>(stream))) ^ index);
}

inline Rng make_rng(std::uint64_t base, Stream stream, std::uint64_t index = 0) {
  return Rng(derive_seed(base, stream, index));
}

}  // namespace taskaff
