#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace funcnet {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Independent generator addressed by a key such as (seed, iteration, sample).
/// The same key always yields the same stream, whatever thread asks for it.
inline Rng stream_rng(std::initializer_list<std::uint64_t> key) {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (std::uint64_t k : key) h = mix64(h ^ mix64(k));
  return Rng(h);
}

// Stream tags keep differently-purposed streams apart under the same seed.
namespace stream_tag {
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t levels = 2;
inline constexpr std::uint64_t sample = 3;
inline constexpr std::uint64_t eval = 4;
inline constexpr std::uint64_t shuffle = 5;
}  // namespace stream_tag

}  // namespace funcnet
