#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "gossipq/aggregates.hpp"
#include "gossipq/sim.hpp"
#include "gossipq/tournament.hpp"

namespace gossipq {

/// A pending batch of copies of `key`: copy offsets [offset, offset + weight).
struct Token {
  Key key = kNoKey;
  std::uint32_t weight = 1;
  std::uint32_t offset = 0;
};

struct TokenParams {
  double c = 2.0;  // split cap ceil((2c / (1 - mu)) log2 n); settling cap divided by 1 - density
  std::uint32_t max_per_node = 100 * 30;
};

struct TokenStats {
  std::uint32_t split_phases = 0;
  std::uint32_t relocation_phases = 0;
  std::uint64_t rounds = 0;
  std::uint64_t max_tokens_per_node = 0;
  // Sum of squared weights over tokens of weight >= 2, before every split
  // phase and after the last one.
  std::vector<std::uint64_t> potential;
};

/// Copies every real key in `values` onto exactly m nodes. The node that
/// held the key keeps the highest copy; the others rank just below it.
/// Nodes left without a copy become kInfKey. Failed pushes merge back.
/// Throws TrialFailure when a phase cap or the per-node token cap is hit.
std::vector<Key> distribute_tokens(Network& net, std::span<const Key> values, std::uint32_t m,
                                   const TokenParams& params = {}, TokenStats* stats = nullptr);

/// Same protocol; exposed separately so failure experiments read clearly.
inline std::vector<Key> robust_distribute_tokens(Network& net, std::span<const Key> values,
                                                 std::uint32_t m, const TokenParams& params,
                                                 TokenStats& stats) {
  return distribute_tokens(net, values, m, params, &stats);
}

/// Keys outside [lo, hi] and kInfKey become kInfKey.
std::vector<Key> filter_range(std::span<const Key> values, Key lo, Key hi);

/// m * (k_prev - R + 1); throws std::logic_error when R > k_prev.
std::uint64_t rank_update(std::uint64_t k_prev, std::uint64_t R, std::uint64_t m);

/// Inner-loop accuracy: min(n^-0.05 / 2, cap).
double exact_default_eps(std::uint64_t n, double cap = 0.2);

struct ExactIterationInfo {
  int iteration = 0;
  std::uint64_t k = 0;      // target rank after the iteration
  std::uint64_t M = 1;      // copies per surviving original so far
  std::uint64_t block = 1;  // ranks (k - block, k] hold the answer
  Key min = kNoKey;
  Key max = kNoKey;
  std::uint64_t R = 0;
  std::uint64_t valued = 0;
  std::uint32_t m = 1;
  const std::vector<Key>* values = nullptr;  // multiset after the iteration
};

struct ExactParams {
  double phi = 0.5;
  double eps = 0.0;           // 0: exact_default_eps(n)
  int max_iterations = 25;
  int K = 30;
  int max_retries = 4;        // per iteration, when the window misses the answer
  double m_exponent = 0.99;
  double spread_c = 4.0;
  PushSumParams push_sum;
  TokenParams tokens;
  bool robust = false;
  int t_extra = -1;           // robust: -1 means 2 ceil(log2 n)
  std::function<void(const ExactIterationInfo&)> on_iteration;
};

struct ExactResult {
  TrialReport report;        // per-node outputs are original keys
  Key answer = kNoKey;       // consensus output if every node agrees
  int iterations = 0;
  int retries = 0;
  bool found_in_loop = false;  // the window collapsed to one value
  std::uint64_t final_k = 0;
  std::uint64_t final_block = 0;
};

/// Exact phi-quantile of the initial keys (one per node).
ExactResult exact_quantile(Network& net, std::span<const Key> initial, const ExactParams& params);

/// exact_quantile plus oracle scoring: success iff every node outputs the
/// key of rank ceil(phi n).
ExactResult run_exact_trial(Network& net, std::span<const Key> initial, const ExactParams& params);

}  // namespace gossipq
