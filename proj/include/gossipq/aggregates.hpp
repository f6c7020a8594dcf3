#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gossipq/sim.hpp"

namespace gossipq {

struct MinMaxResult {
  std::vector<Key> min;  // per node
  std::vector<Key> max;
  Key true_min = kInfKey;
  Key true_max = kNoKey;
  bool converged = false;
  std::uint64_t converged_round = 0;  // rounds used until every node agreed
  std::uint64_t rounds = 0;
};

/// Round budget ceil(c * ceil(log2 n) / (1 - mu)).
std::uint64_t spread_budget(std::uint32_t n, double mu, double c = 4.0);

/// Push-pull dissemination of the global minimum of `min_in` and maximum of
/// `max_in`. Every non-failed node pulls from one peer and pushes to one peer
/// per round, for the whole budget.
MinMaxResult spread_min_max(Network& net, std::span<const Key> min_in, std::span<const Key> max_in,
                            double c = 4.0);
inline MinMaxResult spread_min_max(Network& net, std::span<const Key> values, double c = 4.0) {
  return spread_min_max(net, values, values, c);
}

/// Multi-channel push-sum. Each round every non-failed node halves its
/// shares, keeps one half and pushes the other to a uniform peer; a failed
/// node keeps everything. Incoming shares accumulate in ascending sender order.
class PushSum {
 public:
  PushSum(Network& net, std::vector<std::vector<double>> channels);

  void step();
  std::uint64_t rounds_done() const noexcept { return rounds_; }
  std::size_t channels() const noexcept { return s_.size(); }

  const std::vector<double>& s(std::size_t ch) const { return s_.at(ch); }
  const std::vector<double>& w() const noexcept { return w_; }
  double total_s(std::size_t ch) const;
  double total_w() const;
  /// n * s / w: node v's estimate of the channel sum.
  double estimate(std::size_t ch, NodeId v) const;

 private:
  Network& net_;
  std::vector<std::vector<double>> s_, s_next_;
  std::vector<double> w_, w_next_;
  std::vector<std::uint32_t> peers_;
  std::vector<std::uint8_t> failed_;
  std::uint64_t rounds_ = 0;
};

struct PushSumParams {
  double c = 2.0;
  std::uint64_t margin = 30;
  double ambiguity = 0.25;  // flag when |estimate - nearest integer| >= this
  std::uint64_t rounds = 0;  // 0: ceil((c log2 n + margin) / (1 - mu))
};

std::uint64_t push_sum_rounds(std::uint32_t n, double mu, const PushSumParams& params);

struct CountResult {
  std::vector<std::int64_t> value;  // per channel; valid when !flagged
  std::vector<std::vector<std::int64_t>> per_node;  // [channel][node]
  bool flagged = false;  // some node was ambiguous or nodes disagree
  std::uint64_t rounds = 0;
};

/// Counts set indicators per channel.
CountResult push_sum_count(Network& net, const std::vector<std::vector<std::uint8_t>>& indicators,
                           const PushSumParams& params = {});
CountResult push_sum_count(Network& net, std::span<const std::uint8_t> indicators,
                           const PushSumParams& params = {});

}  // namespace gossipq
