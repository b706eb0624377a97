#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace evp {

using Rng = std::mt19937_64;

/// One step of splitmix64; used to decorrelate derived seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Named sub-stream of a root seed, e.g. derive_seed(root, "task", 7).
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view name,
                                    std::uint64_t index = 0) {
  return splitmix64(splitmix64(root ^ fnv1a(name)) + splitmix64(index + 1));
}

inline Rng make_rng(std::uint64_t root, std::string_view name,
                    std::uint64_t index = 0) {
  return Rng(derive_seed(root, name, index));
}

}  // namespace evp
