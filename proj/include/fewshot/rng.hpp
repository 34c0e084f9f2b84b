#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fewshot {

using Rng = std::mt19937_64;

// Mixes a master seed with a purpose tag so independent consumers
// (episode sampling, dropout, masking, ...) never share a stream.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose,
                                 std::uint64_t index = 0) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : purpose) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  auto mix = [](std::uint64_t z) {  // splitmix64 finalizer
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(seed ^ h) + index);
}

inline Rng make_rng(std::uint64_t seed, std::string_view purpose, std::uint64_t index = 0) {
  return Rng(derive_seed(seed, purpose, index));
}

}  // namespace fewshot
