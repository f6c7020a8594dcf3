#pragma once

#include <compare>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gossipq {

using NodeId = std::uint32_t;

// Engine-level ordinal key. Real keys are ((origin_rank + 1) << 32) | copy_path,
// where origin_rank is the position of the originating value in the initial
// sorted order and copy_path encodes the duplication lineage. All real keys
// are strictly between kNoKey and kInfKey and fit a signed 64-bit compare.
using Key = std::uint64_t;

inline constexpr Key kNoKey = 0;
inline constexpr Key kInfKey = 0x7fff'ffff'ffff'ffffULL;
inline constexpr std::uint32_t kMaxNodes = 0x7fff'fff0U;

constexpr Key make_key(std::uint32_t origin_rank, std::uint32_t path) noexcept {
  return ((static_cast<Key>(origin_rank) + 1) << 32) | path;
}
constexpr std::uint32_t origin_of(Key k) noexcept {
  return static_cast<std::uint32_t>((k >> 32) - 1);
}
constexpr std::uint32_t path_of(Key k) noexcept {
  return static_cast<std::uint32_t>(k & 0xffff'ffffULL);
}
constexpr bool is_real(Key k) noexcept { return k != kNoKey && k != kInfKey; }
constexpr bool same_origin(Key a, Key b) noexcept { return (a >> 32) == (b >> 32); }

/// A node's value with its tiebreak: (origin node id << 32) | copy path.
struct ValueKey {
  double value = 0.0;
  std::uint64_t tiebreak = 0;

  friend bool operator==(const ValueKey&, const ValueKey&) = default;
  friend bool operator<(const ValueKey& a, const ValueKey& b) noexcept {
    if (a.value != b.value) return a.value < b.value;
    return a.tiebreak < b.tiebreak;
  }

  static ValueKey infinity() noexcept {
    return {std::numeric_limits<double>::infinity(), std::numeric_limits<std::uint64_t>::max()};
  }
};

class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class BudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A subroutine could not complete (non-convergence, unsettled tokens, ...).
class TrialFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Interns the initial node values into ordinal keys and back.
///
/// Values are ordered by (value, node id), so colliding raw values still get
/// distinct keys. Decoding a copy key keeps the origin's value and appends the
/// copy path to the tiebreak.
class KeyTable {
 public:
  explicit KeyTable(std::span<const double> values);

  std::size_t size() const noexcept { return sorted_values_.size(); }
  const std::vector<Key>& initial_keys() const noexcept { return keys_; }
  Key key_of_node(NodeId v) const { return keys_.at(v); }

  ValueKey decode(Key k) const;
  NodeId origin_node(Key k) const { return origin_node_.at(origin_of(k)); }

 private:
  std::vector<double> sorted_values_;
  std::vector<NodeId> origin_node_;
  std::vector<Key> keys_;
};

/// Target rank ceil(phi * n) clamped to [1, n].
std::uint64_t target_rank(double phi, std::uint64_t n);

}  // namespace gossipq
