#include "gossipq/tournament.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>

namespace gossipq {
namespace {

constexpr std::size_t kBlock = 2048;

using analysis::Direction;

struct Scratch {
  std::array<std::uint32_t, kBlock> p1, p2, p3;
  std::array<std::uint8_t, kBlock> take, fail;
};

// Messages for a block whose failed pulls were redirected to self.
std::size_t successful(const kernels::Table& kt, const std::uint8_t* fail, std::size_t count,
                       bool failures) {
  return failures ? count - kt.count_nonzero(fail, count) : count;
}

std::vector<std::uint64_t> pull_bases(const Network& net, Tag tag, std::uint64_t iteration,
                                      std::uint32_t count) {
  std::vector<std::uint64_t> bases(count);
  for (std::uint32_t j = 0; j < count; ++j) bases[j] = net.slot(tag, iteration, j);
  return bases;
}

Key pick2(Key a, Key b, Direction d) {
  return d == Direction::shrink_high ? std::min(a, b) : std::max(a, b);
}

Key median_of(std::span<Key> xs) {
  auto mid = xs.begin() + static_cast<std::ptrdiff_t>(xs.size() / 2);
  std::nth_element(xs.begin(), mid, xs.end());
  return *mid;
}

struct RobustState {
  std::vector<std::uint8_t> good, next_good;
  std::uint64_t count() const {
    return kernels::active().count_nonzero(good.data(), good.size());
  }
};

void robust_phase1(Network& net, std::span<const Key> prev, std::span<Key> next, RobustState& rs,
                   double delta, Direction dir, std::uint64_t iteration, std::uint32_t batch) {
  auto bases = pull_bases(net, Tag::phase1, iteration, batch);
  const std::uint64_t coin = net.slot(Tag::phase1, iteration, kCoinSub);
  const std::uint64_t thr = rng::probability_threshold(delta);
  const std::uint64_t first = net.advance(batch);
  std::uint64_t msgs = 0;
  for (NodeId v = 0; v < net.n(); ++v) {
    bool take = delta >= 1.0 || rng::node_draw(coin, v) < thr;
    std::uint32_t required = take ? 2 : 1;
    RobustPulls rp = robust_pull_batch(net, v, bases, first, rs.good, required);
    msgs += rp.sent;
    if (rp.good < required) {
      rs.next_good[v] = 0;
      next[v] = prev[v];
      continue;
    }
    rs.next_good[v] = 1;
    next[v] = take ? pick2(prev[rp.peers[0]], prev[rp.peers[1]], dir) : prev[rp.peers[0]];
  }
  net.count_messages(msgs);
  rs.good.swap(rs.next_good);
}

void robust_phase2(Network& net, std::span<const Key> prev, std::span<Key> next, RobustState& rs,
                   std::uint64_t iteration, std::uint32_t batch) {
  auto bases = pull_bases(net, Tag::phase2, iteration, batch);
  const std::uint64_t first = net.advance(batch);
  std::uint64_t msgs = 0;
  for (NodeId v = 0; v < net.n(); ++v) {
    RobustPulls rp = robust_pull_batch(net, v, bases, first, rs.good, 3);
    msgs += rp.sent;
    if (rp.good < 3) {
      rs.next_good[v] = 0;
      next[v] = prev[v];
      continue;
    }
    rs.next_good[v] = 1;
    std::array<Key, 3> xs{prev[rp.peers[0]], prev[rp.peers[1]], prev[rp.peers[2]]};
    next[v] = median_of(xs);
  }
  net.count_messages(msgs);
  rs.good.swap(rs.next_good);
}

void robust_final(Network& net, std::span<const Key> values, const RobustState& rs, int K,
                  std::span<Key> out) {
  const std::uint32_t batch = analysis::robust_final_batch_size(net.failure().mu, K);
  auto bases = pull_bases(net, Tag::final_sample, 0, batch);
  const std::uint64_t first = net.advance(batch);
  std::uint64_t msgs = 0;
  std::vector<Key> xs(static_cast<std::size_t>(K));
  for (NodeId v = 0; v < net.n(); ++v) {
    RobustPulls rp =
        robust_pull_batch(net, v, bases, first, rs.good, static_cast<std::uint32_t>(K));
    msgs += rp.sent;
    if (rp.good < static_cast<std::uint32_t>(K)) {
      out[v] = kNoKey;
      continue;
    }
    for (int j = 0; j < K; ++j) xs[static_cast<std::size_t>(j)] = values[rp.peers[j]];
    out[v] = median_of(xs);
  }
  net.count_messages(msgs);
}

void spread_answers(Network& net, std::span<Key> out, int rounds) {
  std::vector<Key> snap(out.begin(), out.end());
  for (int r = 0; r < rounds; ++r) {
    const std::uint64_t base = net.slot(Tag::extra, static_cast<std::uint64_t>(r), 0);
    const std::uint64_t round = net.advance(1);
    std::copy(out.begin(), out.end(), snap.begin());
    std::uint64_t msgs = 0;
    for (NodeId v = 0; v < net.n(); ++v) {
      if (snap[v] != kNoKey || net.failed(v, round)) continue;
      ++msgs;
      Key got = snap[net.peer(base, 0, v)];
      if (got != kNoKey) out[v] = got;
    }
    net.count_messages(msgs);
  }
}

}  // namespace

void TournamentParams::validate() const {
  if (!(phi >= 0.0 && phi <= 1.0)) throw ParameterError("phi must lie in [0, 1]");
  if (!(eps > 0.0 && eps < 0.125)) throw ParameterError("eps must lie in (0, 1/8)");
  if (K < 1 || K >= static_cast<int>(RobustPulls::kMaxRequired))
    throw ParameterError("K must lie in [1, 63]");
  if (!(phase2_divisor >= 1.0)) throw ParameterError("phase2 divisor must be at least 1");
  if (t_extra < 0) throw ParameterError("t_extra must be non-negative");
}

RobustPulls robust_pull_batch(const Network& net, NodeId v, std::span<const std::uint64_t> bases,
                              std::uint64_t first_round, std::span<const std::uint8_t> good,
                              std::uint32_t required) {
  if (required > RobustPulls::kMaxRequired) throw ParameterError("too many required pulls");
  RobustPulls r;
  for (std::uint32_t j = 0; j < bases.size() && r.good < required; ++j) {
    if (net.failed(v, first_round + j)) continue;
    ++r.sent;
    NodeId p = net.peer(bases[j], j, v);
    if (good[p]) r.peers[r.good++] = p;
  }
  return r;
}

void phase1_iteration(Network& net, std::span<const Key> prev, std::span<Key> next, double delta,
                      Direction direction, std::uint64_t iteration) {
  const auto& kt = kernels::active();
  const std::uint64_t b0 = net.slot(Tag::phase1, iteration, 0);
  const std::uint64_t b1 = net.slot(Tag::phase1, iteration, 1);
  const std::uint64_t coin = net.slot(Tag::phase1, iteration, kCoinSub);
  const std::uint64_t thr = rng::probability_threshold(delta);
  const bool failures = net.failures_active();
  const std::uint64_t first = net.advance(2);
  auto sc = std::make_unique<Scratch>();
  std::uint64_t msgs = 0;
  for (NodeId lo = 0; lo < net.n(); lo += kBlock) {
    const std::size_t c = std::min<std::size_t>(kBlock, net.n() - lo);
    net.peers(b0, 0, lo, c, sc->p1.data());
    net.peers(b1, 1, lo, c, sc->p2.data());
    if (delta >= 1.0)
      std::fill_n(sc->take.data(), c, std::uint8_t{1});
    else
      kt.fill_bernoulli(coin, lo, c, thr, sc->take.data());
    std::size_t taken = kt.count_nonzero(sc->take.data(), c);
    if (failures) {
      net.failures(first, lo, c, sc->fail.data());
      kt.mask_failed(sc->p1.data(), sc->fail.data(), lo, c);
      msgs += c - kt.count_nonzero(sc->fail.data(), c);
      net.failures(first + 1, lo, c, sc->fail.data());
      kt.mask_failed(sc->p2.data(), sc->fail.data(), lo, c);
      for (std::size_t i = 0; i < c; ++i) msgs += sc->take[i] && !sc->fail[i];
    } else {
      msgs += c + taken;
    }
    auto op = direction == Direction::shrink_high ? kt.min2 : kt.max2;
    op(prev.data(), sc->p1.data(), sc->p2.data(), sc->take.data(), c, next.data() + lo);
  }
  net.count_messages(msgs);
}

void phase2_iteration(Network& net, std::span<const Key> prev, std::span<Key> next,
                      std::uint64_t iteration) {
  const auto& kt = kernels::active();
  std::uint64_t b[3];
  for (unsigned j = 0; j < 3; ++j) b[j] = net.slot(Tag::phase2, iteration, j);
  const bool failures = net.failures_active();
  const std::uint64_t first = net.advance(3);
  auto sc = std::make_unique<Scratch>();
  std::uint32_t* ps[3] = {sc->p1.data(), sc->p2.data(), sc->p3.data()};
  std::uint64_t msgs = 0;
  for (NodeId lo = 0; lo < net.n(); lo += kBlock) {
    const std::size_t c = std::min<std::size_t>(kBlock, net.n() - lo);
    for (unsigned j = 0; j < 3; ++j) {
      net.peers(b[j], j, lo, c, ps[j]);
      if (failures) {
        net.failures(first + j, lo, c, sc->fail.data());
        kt.mask_failed(ps[j], sc->fail.data(), lo, c);
      }
      msgs += successful(kt, sc->fail.data(), c, failures);
    }
    kt.median3(prev.data(), ps[0], ps[1], ps[2], c, next.data() + lo);
  }
  net.count_messages(msgs);
}

void final_median_sample(Network& net, std::span<const Key> values, int K, std::span<Key> out) {
  if (K < 1) throw ParameterError("K must be positive");
  if (K % 2 == 0) ++K;
  const auto& kt = kernels::active();
  const auto k = static_cast<std::size_t>(K);
  auto bases = pull_bases(net, Tag::final_sample, 0, static_cast<std::uint32_t>(K));
  const bool failures = net.failures_active();
  const std::uint64_t first = net.advance(k);
  constexpr std::size_t B = 512;
  std::vector<Key> buf(k * B);
  std::vector<std::uint32_t> peers(B);
  std::vector<std::uint8_t> fail(B);
  std::vector<Key> xs(k);
  std::uint64_t msgs = 0;
  for (NodeId lo = 0; lo < net.n(); lo += B) {
    const std::size_t c = std::min<std::size_t>(B, net.n() - lo);
    for (std::size_t j = 0; j < k; ++j) {
      net.peers(bases[j], static_cast<unsigned>(j), lo, c, peers.data());
      if (failures) {
        net.failures(first + j, lo, c, fail.data());
        kt.mask_failed(peers.data(), fail.data(), lo, c);
      }
      msgs += successful(kt, fail.data(), c, failures);
      kt.gather(values.data(), peers.data(), c, buf.data() + j * B);
    }
    for (std::size_t i = 0; i < c; ++i) {
      for (std::size_t j = 0; j < k; ++j) xs[j] = buf[j * B + i];
      out[lo + i] = median_of(xs);
    }
  }
  net.count_messages(msgs);
}

TrialReport approx_quantile(Network& net, std::span<const Key> initial,
                            const TournamentParams& params) {
  params.validate();
  const std::uint32_t n = net.n();
  if (initial.size() != n) throw ParameterError("need one key per node");

  TrialReport report;
  const std::uint64_t rounds0 = net.rounds(), msgs0 = net.messages();
  net.next_epoch();

  if (n == 1) {
    report.outputs.assign(initial.begin(), initial.end());
    return report;
  }

  const auto s1 = analysis::two_tournament_schedule(params.phi, params.eps);
  const auto s2 = analysis::three_tournament_schedule(params.eps / params.phase2_divisor, n,
                                                       params.K);
  report.phase1_iterations = static_cast<std::uint32_t>(s1.t);
  report.phase2_iterations = static_cast<std::uint32_t>(s2.t);

  std::vector<Key> cur(initial.begin(), initial.end()), nxt(n);
  RankOracle::Window window;
  if (params.track_lmh) {
    RankOracle oracle(initial);
    window = oracle.window(params.phi, params.eps);
    report.per_iteration_lmh.push_back(count_lmh(cur, window));
  }
  auto record = [&] {
    if (params.track_lmh) report.per_iteration_lmh.push_back(count_lmh(cur, window));
  };

  RobustState rs;
  std::uint32_t batch = 0;
  if (params.robust) {
    rs.good.assign(n, 1);
    rs.next_good.assign(n, 1);
    batch = analysis::robust_batch_size(net.failure().mu);
  }
  auto record_good = [&] {
    if (params.robust) report.good_counts.push_back(rs.count());
  };

  for (int i = 0; i < s1.t; ++i) {
    const double delta = s1.delta[static_cast<std::size_t>(i)];
    const auto it = static_cast<std::uint64_t>(i);
    if (params.robust)
      robust_phase1(net, cur, nxt, rs, delta, s1.direction, it, batch);
    else
      phase1_iteration(net, cur, nxt, delta, s1.direction, it);
    cur.swap(nxt);
    record();
    record_good();
  }
  for (int i = 0; i < s2.t; ++i) {
    const auto it = static_cast<std::uint64_t>(i);
    if (params.robust)
      robust_phase2(net, cur, nxt, rs, it, batch);
    else
      phase2_iteration(net, cur, nxt, it);
    cur.swap(nxt);
    record();
    record_good();
  }

  report.outputs.resize(n);
  if (params.robust) {
    robust_final(net, cur, rs, s2.K, report.outputs);
    spread_answers(net, report.outputs, params.t_extra);
  } else {
    final_median_sample(net, cur, s2.K, report.outputs);
  }

  report.rounds = net.rounds() - rounds0;
  report.messages = net.messages() - msgs0;
  return report;
}

TrialReport run_approx_trial(Network& net, std::span<const Key> initial,
                             const TournamentParams& params) {
  TrialReport report = approx_quantile(net, initial, params);
  RankOracle oracle(initial);
  std::uint64_t allowed = 0;
  if (params.robust) allowed = params.t_extra >= 63 ? 0 : net.n() >> params.t_extra;
  score_outputs(report, oracle, params.phi, params.eps, allowed);
  return report;
}

}  // namespace gossipq
