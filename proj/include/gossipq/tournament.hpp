#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gossipq/analysis.hpp"
#include "gossipq/oracle.hpp"
#include "gossipq/sim.hpp"

namespace gossipq {

struct TournamentParams {
  double phi = 0.5;
  double eps = 0.05;
  int K = 30;                   // final sample size, rounded up to odd
  double phase2_divisor = 4.0;  // phase II runs at eps / phase2_divisor
  bool robust = false;
  int t_extra = 0;              // robust only: answer-spreading pull rounds
  bool track_lmh = true;

  void validate() const;
};

/// Good-pull bookkeeping for one robust iteration.
struct RobustPulls {
  static constexpr std::uint32_t kMaxRequired = 64;
  std::uint32_t sent = 0;  // pulls actually performed (not failed)
  std::uint32_t good = 0;  // good pulls found, at most `required`
  NodeId peers[kMaxRequired] = {};
};

/// Scans node v's batch of pulls in order and keeps the first `required`
/// good ones: the pull did not fail and the peer was good at the end of the
/// previous iteration. `bases[j]` is the slot base of pull j.
RobustPulls robust_pull_batch(const Network& net, NodeId v, std::span<const std::uint64_t> bases,
                              std::uint64_t first_round, std::span<const std::uint8_t> good,
                              std::uint32_t required);

/// One 2-TOURNAMENT iteration (2 rounds). With probability delta a node keeps
/// the min (shrink-high) or max (shrink-low) of two pulls, otherwise it copies
/// its first pull.
void phase1_iteration(Network& net, std::span<const Key> prev, std::span<Key> next, double delta,
                      analysis::Direction direction, std::uint64_t iteration);

/// One 3-TOURNAMENT iteration (3 rounds): median of three pulls.
void phase2_iteration(Network& net, std::span<const Key> prev, std::span<Key> next,
                      std::uint64_t iteration);

/// K rounds of pulls; every node outputs the median of its K samples.
void final_median_sample(Network& net, std::span<const Key> values, int K, std::span<Key> out);

/// The full protocol over the given key multiset (one key per node):
/// phase I, phase II, final sample; robust variants when params.robust.
/// Outputs only; use score_outputs for oracle checks.
TrialReport approx_quantile(Network& net, std::span<const Key> initial,
                            const TournamentParams& params);

/// approx_quantile followed by oracle scoring. Robust runs succeed when at
/// most n / 2^t_extra nodes lack a correct output.
TrialReport run_approx_trial(Network& net, std::span<const Key> initial,
                             const TournamentParams& params);

}  // namespace gossipq
