#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

#include "gossipq/types.hpp"

// Data-parallel inner loops of the round engine. Each entry has a scalar
// reference implementation and, on x86-64, an AVX2 variant; the active table
// is picked once at startup from CPU features (GOSSIPQ_KERNELS=scalar|avx2
// overrides). All kernels are integer-exact, so every backend must produce
// bit-identical output.

namespace gossipq::kernels {

enum class Backend { scalar, avx2 };

struct Table {
  Backend backend;
  const char* name;

  // out[i] = bounded(node_draw(base, first + i), n)
  void (*fill_peers)(std::uint64_t base, std::uint32_t first, std::size_t count, std::uint32_t n,
                     std::uint32_t* out);
  // out[i] = node_draw(base, first + i) < threshold
  void (*fill_bernoulli)(std::uint64_t base, std::uint32_t first, std::size_t count,
                         std::uint64_t threshold, std::uint8_t* out);
  // peers[i] = failed[i] ? first + i : peers[i]
  void (*mask_failed)(std::uint32_t* peers, const std::uint8_t* failed, std::uint32_t first,
                      std::size_t count);
  // out[i] = take[i] ? min(v[p1[i]], v[p2[i]]) : v[p1[i]]   (max2: max)
  void (*min2)(const Key* values, const std::uint32_t* p1, const std::uint32_t* p2,
               const std::uint8_t* take, std::size_t count, Key* out);
  void (*max2)(const Key* values, const std::uint32_t* p1, const std::uint32_t* p2,
               const std::uint8_t* take, std::size_t count, Key* out);
  // out[i] = median(v[p1[i]], v[p2[i]], v[p3[i]])
  void (*median3)(const Key* values, const std::uint32_t* p1, const std::uint32_t* p2,
                  const std::uint32_t* p3, std::size_t count, Key* out);
  // out[i] = v[p[i]]
  void (*gather)(const Key* values, const std::uint32_t* peers, std::size_t count, Key* out);
  // number of keys < cut
  std::size_t (*count_below)(const Key* keys, std::size_t count, Key cut);
  // held_min[i] = min(held_min[i], prev_min[p[i]]); held_max likewise with max
  void (*pull_min_max)(const Key* prev_min, const Key* prev_max, const std::uint32_t* peers,
                       std::size_t count, Key* held_min, Key* held_max);
  // number of nonzero bytes
  std::size_t (*count_nonzero)(const std::uint8_t* bytes, std::size_t count);
};

const Table& scalar_table() noexcept;
/// nullptr when the CPU or the build lacks AVX2.
const Table* avx2_table() noexcept;

const Table& active() noexcept;
/// Forces a backend; returns false (and changes nothing) if unavailable.
bool select(Backend backend) noexcept;
std::string_view backend_name(Backend backend) noexcept;

}  // namespace gossipq::kernels
