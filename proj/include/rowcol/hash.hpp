#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace rowcol {

// FNV-1a 64-bit over raw bytes.  Used for artifact content hashes in the run
// manifest and for deriving per-stage RNG seeds.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<std::uint64_t>(p[i]);
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a64(s.data(), s.size(), h);
}

// splitmix64 finalizer; decorrelates structured inputs (e.g. seed + stage tag)
// before feeding mt19937_64.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Stable per-stage seed: mixes the user seed with a stage name so that stages
// draw from independent streams while staying reproducible.
inline std::uint64_t stage_seed(std::uint64_t seed, const std::string& stage) {
  return splitmix64(seed ^ fnv1a64(stage));
}

}  // namespace rowcol
