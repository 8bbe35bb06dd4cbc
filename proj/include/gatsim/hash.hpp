#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace gatsim {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;

constexpr std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = kFnvOffset) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// splitmix64 finalizer
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Stateless draw in [0, 1) keyed by a seed and a label.
inline double unit_hash(std::uint64_t seed, std::string_view label) {
  return static_cast<double>(mix64(fnv1a64(label) ^ mix64(seed)) >> 11) * 0x1.0p-53;
}

std::string hex64(std::uint64_t v);

}  // namespace gatsim
