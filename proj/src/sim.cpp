#include <cmath>
#include <string>

#include "gossipq/sim.hpp"

namespace gossipq {
namespace {

constexpr std::uint64_t kFailSalt = 0x6661'696c'7572'6573ULL;

}  // namespace

double FailureModel::probability(NodeId v, std::uint64_t round) const noexcept {
  switch (mode) {
    case FailureMode::none:
      return 0.0;
    case FailureMode::uniform:
      return mu;
    case FailureMode::scheduled:
      return mu * rng::to_unit(rng::combine(rng::combine(schedule_seed, v), round));
  }
  return 0.0;
}

void FailureModel::validate() const {
  if (!(mu >= 0.0 && mu < 1.0)) throw ParameterError("mu must lie in [0, 1)");
}

void SimConfig::validate() const {
  if (n < 1) throw ParameterError("n must be at least 1");
  if (n > kMaxNodes) throw ParameterError("n too large");
  failure.validate();
}

Network::Network(SimConfig config)
    : config_(config),
      fail_base_(config.seed ^ kFailSalt),
      fail_threshold_(rng::probability_threshold(config.failure.mu)) {
  config_.validate();
}

std::uint64_t Network::advance(std::uint64_t c) {
  if (rounds_ + c > config_.max_rounds)
    throw BudgetExceeded("round budget exceeded (" + std::to_string(config_.max_rounds) + ")");
  std::uint64_t first = rounds_;
  rounds_ += c;
  return first;
}

std::uint64_t Network::slot_at(std::uint64_t epoch, Tag tag, std::uint64_t iteration,
                               std::uint64_t sub) const noexcept {
  std::uint64_t h = rng::combine(config_.seed, epoch);
  h = rng::combine(h, static_cast<std::uint64_t>(tag));
  h = rng::combine(h, iteration);
  return rng::combine(h, sub);
}

bool Network::failed(NodeId v, std::uint64_t round) const noexcept {
  const FailureModel& f = config_.failure;
  if (!f.active()) return false;
  std::uint64_t x = rng::node_draw(rng::combine(fail_base_, round), v);
  if (f.mode == FailureMode::uniform) return x < fail_threshold_;
  return x < rng::probability_threshold(f.probability(v, round));
}

void Network::failures(std::uint64_t round, NodeId first, std::size_t count,
                       std::uint8_t* out) const {
  const FailureModel& f = config_.failure;
  if (!f.active()) {
    std::fill(out, out + count, std::uint8_t{0});
    return;
  }
  if (f.mode == FailureMode::uniform) {
    kernels::active().fill_bernoulli(rng::combine(fail_base_, round), first, count,
                                     fail_threshold_, out);
    return;
  }
  for (std::size_t i = 0; i < count; ++i) out[i] = failed(first + static_cast<NodeId>(i), round);
}

void Network::peers(std::uint64_t base, unsigned pull, NodeId first, std::size_t count,
                    std::uint32_t* out) const {
  if (forced_) {
    for (std::size_t i = 0; i < count; ++i) out[i] = forced_(first + static_cast<NodeId>(i), pull);
    return;
  }
  kernels::active().fill_peers(base, first, count, config_.n, out);
}

NodeId Network::peer(std::uint64_t base, unsigned pull, NodeId v) const {
  if (forced_) return forced_(v, pull);
  return rng::bounded(rng::node_draw(base, v), config_.n);
}

std::vector<std::uint8_t> draw_failures(const FailureModel& model, std::uint64_t round,
                                        std::uint32_t n, std::uint64_t seed) {
  SimConfig cfg;
  cfg.n = n;
  cfg.seed = seed;
  cfg.failure = model;
  Network net(cfg);
  std::vector<std::uint8_t> out(n);
  net.failures(round, 0, n, out.data());
  return out;
}

}  // namespace gossipq
