#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gossipq/sim.hpp"

namespace gossipq {

/// Weighted sorted multiset of keys. Every element stands for `weight`
/// samples. A capacity of 0 means unbounded (no compaction ever happens).
class CompactedBuffer {
 public:
  explicit CompactedBuffer(std::uint64_t capacity = 0);
  static CompactedBuffer singleton(Key key, std::uint64_t capacity = 0);
  CompactedBuffer(std::vector<Key> sorted, std::uint64_t weight, std::uint64_t capacity);

  const std::vector<Key>& elements() const noexcept { return elements_; }
  std::uint64_t weight() const noexcept { return weight_; }
  std::uint64_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return elements_.size(); }
  bool empty() const noexcept { return elements_.empty(); }
  std::uint64_t weighted_size() const noexcept { return weight_ * elements_.size(); }

  /// weight * |{e : e <= z}|
  std::uint64_t rank(Key z) const;
  /// rank(z) / weighted_size()
  double quantile(Key z) const;

  /// u64 count, count keys, u64 weight, u64 capacity; all little-endian.
  std::vector<std::uint8_t> serialize() const;
  static CompactedBuffer deserialize(std::span<const std::uint8_t> bytes);

  friend bool operator==(const CompactedBuffer&, const CompactedBuffer&) = default;

 private:
  std::vector<Key> elements_;
  std::uint64_t weight_ = 1;
  std::uint64_t capacity_ = 0;
};

/// Sorts and, when more than k elements remain, keeps the 2nd, 4th, ...
/// The caller doubles the weight.
std::vector<Key> compact(std::vector<Key> elements, std::uint64_t k);

/// Union of two equal-weight buffers, compacted once if over capacity.
CompactedBuffer doubling_update(const CompactedBuffer& a, const CompactedBuffer& b);

/// Merges `data` pairwise along a balanced tree, once without compaction and
/// once with capacity k, and returns max_z |R_S(z) - R_{w S~}(z)| over z in data.
/// data.size() and k must be powers of two.
std::uint64_t compaction_error_check(std::span<const Key> data, std::uint64_t k);

struct SampleParams {
  double c = 8.0;
  bool exhaustive = false;  // every node reads all values instead of sampling
};

/// Sample size ceil(c ln n / eps^2).
std::uint64_t sample_size(std::uint32_t n, double eps, double c = 8.0);

/// Every node pulls s uniform values over s rounds and outputs the sample's
/// order statistic at position ceil(phi s).
TrialReport uniform_sample_quantile(Network& net, std::span<const Key> initial, double phi,
                                    double eps, const SampleParams& params = {});

struct DoublingRun {
  std::vector<CompactedBuffer> buffers;  // one per node
  std::uint64_t epoch = 0;
  std::uint64_t rounds = 0;
};

/// One sampling round, then log2(n_prime) rounds in which every node pulls a
/// peer's buffer and merges it into its own (capacity k, 0 = unbounded).
DoublingRun doubling_protocol(Network& net, std::span<const Key> initial, std::uint64_t n_prime,
                              std::uint64_t k);

/// Node v's final buffer of the doubling run started in `epoch`, evaluated
/// by recursion over its contact tree without simulating other nodes.
CompactedBuffer doubling_buffer(const Network& net, std::uint64_t epoch,
                                std::span<const Key> initial, std::uint64_t n_prime,
                                std::uint64_t k, NodeId v);

}  // namespace gossipq
