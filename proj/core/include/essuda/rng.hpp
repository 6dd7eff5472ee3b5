#pragma once

#include <cstdint>
#include <initializer_list>

namespace essuda {

/// splitmix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Derives an independent sub-seed from a base seed and a path of tags.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t s = splitmix64(base);
  for (auto t : tags) s = splitmix64(s ^ splitmix64(t + 0x632BE59BD9B4E019ULL));
  return s;
}

}  // namespace essuda
