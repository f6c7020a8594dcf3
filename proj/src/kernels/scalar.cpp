#include <algorithm>

#include "gossipq/kernels.hpp"
#include "gossipq/rng.hpp"

namespace gossipq::kernels {
namespace {

void fill_peers(std::uint64_t base, std::uint32_t first, std::size_t count, std::uint32_t n,
                std::uint32_t* out) {
  for (std::size_t i = 0; i < count; ++i) out[i] = rng::bounded(rng::node_draw(base, first + i), n);
}

void fill_bernoulli(std::uint64_t base, std::uint32_t first, std::size_t count,
                    std::uint64_t threshold, std::uint8_t* out) {
  for (std::size_t i = 0; i < count; ++i) out[i] = rng::node_draw(base, first + i) < threshold;
}

void mask_failed(std::uint32_t* peers, const std::uint8_t* failed, std::uint32_t first,
                 std::size_t count) {
  for (std::size_t i = 0; i < count; ++i)
    if (failed[i]) peers[i] = first + static_cast<std::uint32_t>(i);
}

void min2(const Key* values, const std::uint32_t* p1, const std::uint32_t* p2,
          const std::uint8_t* take, std::size_t count, Key* out) {
  for (std::size_t i = 0; i < count; ++i) {
    Key a = values[p1[i]];
    out[i] = take[i] ? std::min(a, values[p2[i]]) : a;
  }
}

void max2(const Key* values, const std::uint32_t* p1, const std::uint32_t* p2,
          const std::uint8_t* take, std::size_t count, Key* out) {
  for (std::size_t i = 0; i < count; ++i) {
    Key a = values[p1[i]];
    out[i] = take[i] ? std::max(a, values[p2[i]]) : a;
  }
}

void median3(const Key* values, const std::uint32_t* p1, const std::uint32_t* p2,
             const std::uint32_t* p3, std::size_t count, Key* out) {
  for (std::size_t i = 0; i < count; ++i) {
    Key a = values[p1[i]], b = values[p2[i]], c = values[p3[i]];
    out[i] = std::max(std::min(a, b), std::min(std::max(a, b), c));
  }
}

void gather(const Key* values, const std::uint32_t* peers, std::size_t count, Key* out) {
  for (std::size_t i = 0; i < count; ++i) out[i] = values[peers[i]];
}

std::size_t count_below(const Key* keys, std::size_t count, Key cut) {
  std::size_t c = 0;
  for (std::size_t i = 0; i < count; ++i) c += keys[i] < cut;
  return c;
}

void pull_min_max(const Key* prev_min, const Key* prev_max, const std::uint32_t* peers,
                  std::size_t count, Key* held_min, Key* held_max) {
  for (std::size_t i = 0; i < count; ++i) {
    held_min[i] = std::min(held_min[i], prev_min[peers[i]]);
    held_max[i] = std::max(held_max[i], prev_max[peers[i]]);
  }
}

std::size_t count_nonzero(const std::uint8_t* bytes, std::size_t count) {
  std::size_t c = 0;
  for (std::size_t i = 0; i < count; ++i) c += bytes[i] != 0;
  return c;
}

}  // namespace

const Table& scalar_table() noexcept {
  static const Table table{Backend::scalar, "scalar", fill_peers,  fill_bernoulli, mask_failed,
                           min2,            max2,     median3,     gather,         count_below,
                           pull_min_max,    count_nonzero};
  return table;
}

}  // namespace gossipq::kernels
