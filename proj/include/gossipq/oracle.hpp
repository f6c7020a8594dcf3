#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gossipq/sim.hpp"
#include "gossipq/types.hpp"

namespace gossipq {

/// Sort-based ground truth over a key multiset. Ranks are 1-based; a key
/// occurring several times occupies the rank interval [rank_lo, rank_hi].
class RankOracle {
 public:
  struct Window {
    std::uint64_t lo = 1;  // smallest accepted rank
    std::uint64_t hi = 1;  // largest accepted rank
    Key lo_key = kNoKey;
    Key hi_key = kNoKey;
  };

  explicit RankOracle(std::span<const Key> keys);

  std::uint64_t n() const noexcept { return sorted_.size(); }
  const std::vector<Key>& sorted() const noexcept { return sorted_; }

  Key at_rank(std::uint64_t r) const;
  std::uint64_t count_below(Key k) const;
  std::uint64_t count_at_most(Key k) const;
  std::uint64_t rank_lo(Key k) const { return count_below(k) + 1; }
  std::uint64_t rank_hi(Key k) const { return count_at_most(k); }

  /// Ranks [(phi - eps) n, (phi + eps) n], clamped to [1, n].
  Window window(double phi, double eps) const;
  bool in_window(Key k, const Window& w) const;
  /// Distance from rank k to the rank interval of `key` (0 if inside).
  std::uint64_t rank_error(Key key, std::uint64_t k) const;

 private:
  std::vector<Key> sorted_;
};

/// |L|, |M|, |H| of `values` against the window cut keys.
LMH count_lmh(std::span<const Key> values, const RankOracle::Window& w);

/// Fills max_rank_error, nodes_without_correct and success from the outputs.
/// A run succeeds when at most `allowed_misses` nodes lack a correct output.
void score_outputs(TrialReport& report, const RankOracle& oracle, double phi, double eps,
                   std::uint64_t allowed_misses = 0);

}  // namespace gossipq
