#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace qrrec {

using Rng = std::mt19937_64;

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

// Named sub-streams of one run seed. Each consumer (init, shuffle, negatives,
// dropout, eval-candidates) draws from its own stream so that changing how
// much one of them consumes never shifts the others.
inline Rng make_stream(std::uint64_t seed, std::string_view name,
                       std::uint64_t index = 0) {
  std::uint64_t s = detail::splitmix64(seed ^ detail::fnv1a(name));
  s = detail::splitmix64(s ^ detail::splitmix64(index + 1));
  std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32)};
  return Rng(seq);
}

namespace streams {
inline constexpr std::string_view kInit = "init";
inline constexpr std::string_view kShuffle = "shuffle";
inline constexpr std::string_view kNegatives = "negatives";
inline constexpr std::string_view kDropout = "dropout";
inline constexpr std::string_view kEvalCandidates = "eval-candidates";
}  // namespace streams

}  // namespace qrrec
