#include "gossipq/aggregates.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace gossipq {
namespace {

std::uint64_t ceil_log2(std::uint32_t n) { return n <= 1 ? 0 : std::bit_width(n - 1u); }

}  // namespace

std::uint64_t spread_budget(std::uint32_t n, double mu, double c) {
  return static_cast<std::uint64_t>(std::ceil(c * static_cast<double>(ceil_log2(n)) / (1.0 - mu)));
}

MinMaxResult spread_min_max(Network& net, std::span<const Key> min_in, std::span<const Key> max_in,
                            double c) {
  const std::uint32_t n = net.n();
  if (min_in.size() != n || max_in.size() != n) throw ParameterError("need one key per node");
  const auto& kt = kernels::active();
  net.next_epoch();

  MinMaxResult r;
  r.min.assign(min_in.begin(), min_in.end());
  r.max.assign(max_in.begin(), max_in.end());
  r.true_min = *std::min_element(min_in.begin(), min_in.end());
  r.true_max = *std::max_element(max_in.begin(), max_in.end());
  auto agreed = [&] {
    for (NodeId v = 0; v < n; ++v)
      if (r.min[v] != r.true_min || r.max[v] != r.true_max) return false;
    return true;
  };
  r.converged = agreed();

  const std::uint64_t budget = spread_budget(n, net.failure().mu, c);
  std::vector<Key> prev_min(n), prev_max(n);
  std::vector<std::uint32_t> pull(n), push(n);
  std::vector<std::uint8_t> failed(n);
  const bool failures = net.failures_active();
  for (std::uint64_t round = 0; round < budget; ++round) {
    const std::uint64_t t = net.advance(1);
    prev_min = r.min;
    prev_max = r.max;
    net.peers(net.slot(Tag::spread, round, 0), 0, 0, n, pull.data());
    net.peers(net.slot(Tag::spread, round, 1), 1, 0, n, push.data());
    std::uint64_t active = n;
    if (failures) {
      net.failures(t, 0, n, failed.data());
      kt.mask_failed(pull.data(), failed.data(), 0, n);
      active -= kt.count_nonzero(failed.data(), n);
    }
    kt.pull_min_max(prev_min.data(), prev_max.data(), pull.data(), n, r.min.data(), r.max.data());
    for (NodeId v = 0; v < n; ++v) {
      if (failures && failed[v]) continue;
      NodeId q = push[v];
      r.min[q] = std::min(r.min[q], prev_min[v]);
      r.max[q] = std::max(r.max[q], prev_max[v]);
    }
    net.count_messages(2 * active);
    if (!r.converged && agreed()) {
      r.converged = true;
      r.converged_round = round + 1;
    }
  }
  r.rounds = budget;
  return r;
}

PushSum::PushSum(Network& net, std::vector<std::vector<double>> channels)
    : net_(net), s_(std::move(channels)) {
  const std::uint32_t n = net.n();
  if (s_.empty()) throw ParameterError("push-sum needs at least one channel");
  for (const auto& ch : s_)
    if (ch.size() != n) throw ParameterError("push-sum channel must have n entries");
  s_next_ = s_;
  w_.assign(n, 1.0);
  w_next_ = w_;
  peers_.resize(n);
  failed_.assign(n, 0);
  net_.next_epoch();
}

void PushSum::step() {
  const std::uint32_t n = net_.n();
  const std::uint64_t t = net_.advance(1);
  net_.peers(net_.slot(Tag::push_sum, rounds_, 0), 0, 0, n, peers_.data());
  net_.failures(t, 0, n, failed_.data());

  for (NodeId v = 0; v < n; ++v) w_next_[v] = failed_[v] ? w_[v] : 0.5 * w_[v];
  for (std::size_t ch = 0; ch < s_.size(); ++ch)
    for (NodeId v = 0; v < n; ++v) s_next_[ch][v] = failed_[v] ? s_[ch][v] : 0.5 * s_[ch][v];

  std::uint64_t msgs = 0;
  for (NodeId v = 0; v < n; ++v) {
    if (failed_[v]) continue;
    ++msgs;
    NodeId q = peers_[v];
    w_next_[q] += 0.5 * w_[v];
    for (std::size_t ch = 0; ch < s_.size(); ++ch) s_next_[ch][q] += 0.5 * s_[ch][v];
  }
  net_.count_messages(msgs);
  w_.swap(w_next_);
  s_.swap(s_next_);
  ++rounds_;
}

double PushSum::total_s(std::size_t ch) const {
  double t = 0.0;
  for (double x : s_.at(ch)) t += x;
  return t;
}

double PushSum::total_w() const {
  double t = 0.0;
  for (double x : w_) t += x;
  return t;
}

double PushSum::estimate(std::size_t ch, NodeId v) const {
  return static_cast<double>(net_.n()) * s_.at(ch)[v] / w_[v];
}

std::uint64_t push_sum_rounds(std::uint32_t n, double mu, const PushSumParams& params) {
  if (params.rounds > 0) return params.rounds;
  double base = std::ceil(params.c * std::log2(std::max<double>(n, 2.0))) +
                static_cast<double>(params.margin);
  return static_cast<std::uint64_t>(std::ceil(base / (1.0 - mu)));
}

CountResult push_sum_count(Network& net, const std::vector<std::vector<std::uint8_t>>& indicators,
                           const PushSumParams& params) {
  const std::uint32_t n = net.n();
  std::vector<std::vector<double>> channels;
  for (const auto& bits : indicators) {
    if (bits.size() != n) throw ParameterError("need one indicator per node");
    std::vector<double> ch(n);
    for (NodeId v = 0; v < n; ++v) ch[v] = bits[v] ? 1.0 : 0.0;
    channels.push_back(std::move(ch));
  }
  PushSum ps(net, std::move(channels));
  CountResult r;
  r.rounds = push_sum_rounds(n, net.failure().mu, params);
  for (std::uint64_t i = 0; i < r.rounds; ++i) ps.step();

  r.value.assign(ps.channels(), 0);
  r.per_node.assign(ps.channels(), std::vector<std::int64_t>(n));
  for (std::size_t ch = 0; ch < ps.channels(); ++ch) {
    for (NodeId v = 0; v < n; ++v) {
      double e = ps.estimate(ch, v);
      double rounded = std::round(e);
      if (!std::isfinite(e) || std::abs(e - rounded) >= params.ambiguity) r.flagged = true;
      r.per_node[ch][v] = static_cast<std::int64_t>(rounded);
      if (r.per_node[ch][v] != r.per_node[ch][0]) r.flagged = true;
    }
    r.value[ch] = r.per_node[ch][0];
  }
  return r;
}

CountResult push_sum_count(Network& net, std::span<const std::uint8_t> indicators,
                           const PushSumParams& params) {
  std::vector<std::vector<std::uint8_t>> one{{indicators.begin(), indicators.end()}};
  return push_sum_count(net, one, params);
}

}  // namespace gossipq
