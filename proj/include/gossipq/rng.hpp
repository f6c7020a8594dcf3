#pragma once

#include <cstdint>

#include "gossipq/types.hpp"

// Counter-based randomness. Every draw is a pure function of
// (seed, slot, node), so a trial is reproducible bit-for-bit and any node's
// stream can be evaluated without replaying the others.
//
// A slot base is derived by folding protocol coordinates (epoch, tag,
// iteration, pull index or round) into the seed. Node v's private stream in a
// slot starts from mix64(base + v * kGamma) and advances SplitMix64-style.

namespace gossipq::rng {

inline constexpr std::uint64_t kGamma = 0x9e37'79b9'7f4a'7c15ULL;
inline constexpr std::uint64_t kMul1 = 0xbf58'476d'1ce4'e5b9ULL;
inline constexpr std::uint64_t kMul2 = 0x94d0'49bb'1331'11ebULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * kMul1;
  z = (z ^ (z >> 27)) * kMul2;
  return z ^ (z >> 31);
}

constexpr std::uint64_t combine(std::uint64_t h, std::uint64_t v) noexcept {
  return mix64(h ^ mix64(v + kGamma));
}

/// First draw of node `v`'s stream in the slot with base `base`.
constexpr std::uint64_t node_draw(std::uint64_t base, std::uint64_t v) noexcept {
  return mix64(mix64(base + v * kGamma) + kGamma);
}

/// Maps a 64-bit draw onto [0, n) by multiply-high. Exactly one draw per
/// value; the bias is at most n / 2^64.
constexpr std::uint32_t bounded(std::uint64_t x, std::uint32_t n) noexcept {
  return static_cast<std::uint32_t>((static_cast<unsigned __int128>(x) * n) >> 64);
}

/// floor(p * 2^64) saturated; draw < threshold happens with probability p.
std::uint64_t probability_threshold(double p) noexcept;

inline bool bernoulli(std::uint64_t x, std::uint64_t threshold, bool always) noexcept {
  return always || x < threshold;
}

inline double to_unit(std::uint64_t x) noexcept {
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t node, std::uint64_t round) noexcept
      : Stream(for_node(combine(seed, round), node)) {}

  static Stream for_node(std::uint64_t base, std::uint64_t node) noexcept {
    return Stream(mix64(base + node * kGamma), Raw{});
  }

  std::uint64_t next() noexcept {
    state_ += kGamma;
    return mix64(state_);
  }
  double uniform01() noexcept { return to_unit(next()); }

 private:
  struct Raw {};
  Stream(std::uint64_t state, Raw) noexcept : state_(state) {}
  std::uint64_t state_;
};

/// Uniform over all n nodes, the caller included.
inline NodeId uniform_peer(Stream& stream, std::uint32_t n) noexcept {
  return bounded(stream.next(), n);
}

}  // namespace gossipq::rng
