#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "gossipq/kernels.hpp"
#include "gossipq/rng.hpp"
#include "gossipq/types.hpp"

namespace gossipq {

enum class FailureMode { none, uniform, scheduled };

/// Per-node, per-round failure probabilities p_{v,i} <= mu.
///
/// `uniform` uses p_{v,i} = mu everywhere. `scheduled` fixes
/// p_{v,i} = mu * U(hash(schedule_seed, v, i)) before execution, giving a
/// heterogeneous but reproducible profile.
struct FailureModel {
  FailureMode mode = FailureMode::none;
  double mu = 0.0;
  std::uint64_t schedule_seed = 0;

  static FailureModel none() { return {}; }
  static FailureModel uniform(double mu) { return {FailureMode::uniform, mu, 0}; }
  static FailureModel scheduled(double mu, std::uint64_t seed) {
    return {FailureMode::scheduled, mu, seed};
  }

  bool active() const noexcept { return mode != FailureMode::none && mu > 0.0; }
  double probability(NodeId v, std::uint64_t round) const noexcept;
  void validate() const;
};

struct SimConfig {
  std::uint32_t n = 1;
  std::uint64_t seed = 0;
  FailureModel failure;
  std::uint64_t max_rounds = std::uint64_t{1} << 24;

  void validate() const;
};

/// Bit v set iff node v fails in `round`. Reproducible from (seed, round).
std::vector<std::uint8_t> draw_failures(const FailureModel& model, std::uint64_t round,
                                        std::uint32_t n, std::uint64_t seed);

using rng::uniform_peer;

// Slot tags. Each protocol step draws from its own tagged slot so that
// independent decisions never share randomness.
enum class Tag : std::uint64_t {
  phase1 = 1,
  phase2,
  final_sample,
  extra,
  spread,
  push_sum,
  split,
  relocate,
  sample,
  doubling,
  lower_bound,
  generic,
};
inline constexpr std::uint64_t kCoinSub = 0xC0;

/// Round clock, message counter and randomness source of one trial.
class Network {
 public:
  using ContactFn = std::function<NodeId(NodeId v, unsigned pull)>;

  explicit Network(SimConfig config);

  std::uint32_t n() const noexcept { return config_.n; }
  const SimConfig& config() const noexcept { return config_; }
  const FailureModel& failure() const noexcept { return config_.failure; }

  std::uint64_t rounds() const noexcept { return rounds_; }
  std::uint64_t messages() const noexcept { return messages_; }

  /// Consumes `c` rounds and returns the index of the first one.
  std::uint64_t advance(std::uint64_t c);
  void count_messages(std::uint64_t m) noexcept { messages_ += m; }

  /// Starts a fresh protocol instance; later slots never collide with earlier ones.
  std::uint64_t next_epoch() noexcept { return ++epoch_; }
  std::uint64_t epoch() const noexcept { return epoch_; }
  std::uint64_t slot(Tag tag, std::uint64_t iteration, std::uint64_t sub) const noexcept {
    return slot_at(epoch_, tag, iteration, sub);
  }
  std::uint64_t slot_at(std::uint64_t epoch, Tag tag, std::uint64_t iteration,
                        std::uint64_t sub) const noexcept;

  bool failures_active() const noexcept { return config_.failure.active(); }
  bool failed(NodeId v, std::uint64_t round) const noexcept;
  void failures(std::uint64_t round, NodeId first, std::size_t count, std::uint8_t* out) const;

  /// Peers of nodes [first, first + count) for pull number `pull` drawn from `base`.
  void peers(std::uint64_t base, unsigned pull, NodeId first, std::size_t count,
             std::uint32_t* out) const;
  NodeId peer(std::uint64_t base, unsigned pull, NodeId v) const;

  /// Test hook: replaces uniform sampling with a fixed contact function.
  void force_contacts(ContactFn fn) { forced_ = std::move(fn); }
  bool contacts_forced() const noexcept { return static_cast<bool>(forced_); }

 private:
  SimConfig config_;
  std::uint64_t rounds_ = 0;
  std::uint64_t messages_ = 0;
  std::uint64_t epoch_ = 0;
  std::uint64_t fail_base_;
  std::uint64_t fail_threshold_;
  ContactFn forced_;
};

/// What a node sees while executing its step: pulls read the previous
/// snapshot; a failed pull returns the node's own previous state.
template <class State>
class PullContext {
 public:
  PullContext(const Network& net, std::span<const State> prev,
              std::span<const std::uint64_t> bases, std::uint64_t first_round, NodeId v)
      : net_(net), prev_(prev), bases_(bases), first_round_(first_round), v_(v) {}

  NodeId self() const noexcept { return v_; }
  const State& own() const { return prev_[v_]; }
  NodeId peer(unsigned j) const { return net_.peer(bases_[j], j, v_); }
  bool failed(unsigned j) const { return net_.failed(v_, first_round_ + j); }

  const State& pull(unsigned j) {
    if (failed(j)) return prev_[v_];
    ++messages_;
    return prev_[peer(j)];
  }
  std::uint64_t messages() const noexcept { return messages_; }

 private:
  const Network& net_;
  std::span<const State> prev_;
  std::span<const std::uint64_t> bases_;
  std::uint64_t first_round_;
  NodeId v_;
  std::uint64_t messages_ = 0;
};

/// Executes one synchronous iteration of `pulls` rounds: every node computes
/// step(ctx) against `prev`, results land in `next`. Pull j of the iteration
/// draws from slot (tag, iteration, j). Reference semantics for
/// the vectorised protocol paths.
template <class State, class Step>
void run_iteration(Network& net, std::span<const State> prev, std::span<State> next, unsigned pulls,
                   Tag tag, std::uint64_t iteration, Step&& step) {
  if (prev.size() != net.n() || next.size() != net.n())
    throw ParameterError("state arrays must have n entries");
  std::vector<std::uint64_t> bases(pulls);
  for (unsigned j = 0; j < pulls; ++j) bases[j] = net.slot(tag, iteration, j);
  std::uint64_t first = net.advance(pulls);
  std::uint64_t msgs = 0;
  for (NodeId v = 0; v < net.n(); ++v) {
    PullContext<State> ctx(net, prev, bases, first, v);
    next[v] = step(ctx);
    msgs += ctx.messages();
  }
  net.count_messages(msgs);
}

struct LMH {
  std::uint64_t low = 0;
  std::uint64_t mid = 0;
  std::uint64_t high = 0;
  std::uint64_t total() const noexcept { return low + mid + high; }
};

struct TrialReport {
  std::uint64_t rounds = 0;
  std::uint64_t messages = 0;
  std::vector<LMH> per_iteration_lmh;
  std::vector<Key> outputs;  // kNoKey = no output
  std::uint64_t max_rank_error = 0;
  std::uint64_t nodes_without_correct = 0;
  bool success = false;
  // Robust runs only: good nodes at the end of every iteration.
  std::vector<std::uint64_t> good_counts;
  std::uint32_t phase1_iterations = 0;
  std::uint32_t phase2_iterations = 0;
};

}  // namespace gossipq
