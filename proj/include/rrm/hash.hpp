#pragma once

// SPDX-License-Identifier: Apache-2.0

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>

namespace rrm {

// Stable, platform-independent hashing. std::hash is not stable across
// implementations, and ids/seeds must survive reruns.

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

constexpr std::uint64_t fnv1a64(std::string_view data, std::uint64_t h = kFnvOffset) {
  for (unsigned char c : data) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Order-sensitive combination of several hashes.
constexpr std::uint64_t hash_combine(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (auto p : parts) h = splitmix64(h ^ p);
  return h;
}

/// Hash of several text fields; fields are length-prefixed so ("ab","c") != ("a","bc").
inline std::uint64_t hash_fields(std::initializer_list<std::string_view> fields) {
  std::uint64_t h = kFnvOffset;
  for (auto f : fields) {
    auto n = static_cast<std::uint64_t>(f.size());
    for (int i = 0; i < 8; ++i) {
      h ^= (n >> (8 * i)) & 0xffU;
      h *= kFnvPrime;
    }
    h = fnv1a64(f, h);
  }
  return h;
}

inline std::string to_hex(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[v & 0xfU];
    v >>= 4;
  }
  return out;
}

inline std::string digest(std::string_view text) { return to_hex(fnv1a64(text)); }

/// Uniform double in [0, 1) from a 64-bit hash.
constexpr double unit_interval(std::uint64_t h) {
  return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
}

}  // namespace rrm
