// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>

namespace cuetrack {

// SplitMix64 finalizer; used as a stateless counter-based generator.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Sub-seed for a named component, so every consumer of the run seed gets an
/// independent, reproducible stream.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view component) {
  return splitmix64(seed ^ fnv1a(component));
}

/// Uniform double in [0, 1) for (key, counter); 53 mantissa bits.
constexpr double counter_uniform(std::uint64_t key, std::uint64_t counter) {
  return static_cast<double>(splitmix64(key + splitmix64(counter)) >> 11) * 0x1.0p-53;
}

}  // namespace cuetrack
