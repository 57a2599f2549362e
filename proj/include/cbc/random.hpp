#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cbc {

/// SplitMix64 finaliser; a counter-based generator when applied to seed + i.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Independent seed for a named consumer of a top-level seed.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : stream) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ull;
  return splitmix64(seed ^ splitmix64(h));
}

/// Seed for the i-th draw of a counter-based stream.
constexpr std::uint64_t counter_seed(std::uint64_t seed, std::uint64_t counter) {
  return splitmix64(seed + splitmix64(counter));
}

}  // namespace cbc
