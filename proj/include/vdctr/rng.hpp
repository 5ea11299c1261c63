#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace vdctr {

inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

using Rng = std::mt19937_64;

/// Named sub-stream of a root seed. Every random draw in the pipeline comes
/// from one of these; there is no global generator.
inline Rng make_rng(std::uint64_t root_seed, std::string_view stream,
                    std::uint64_t index = 0) {
  std::uint64_t s = splitmix64(root_seed ^ fnv1a64(stream));
  s = splitmix64(s ^ splitmix64(index + 0x51ed27ULL));
  return Rng(s);
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double standard_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace vdctr
