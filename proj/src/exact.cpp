#include "gossipq/exact.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

#include "gossipq/analysis.hpp"
#include "gossipq/oracle.hpp"

namespace gossipq {
namespace {

std::uint64_t phase_cap(std::uint32_t n, double mu, double c) {
  double lg = std::log2(std::max<double>(n, 2.0));
  return static_cast<std::uint64_t>(std::ceil(2.0 * c / (1.0 - mu) * lg));
}

std::uint64_t potential(const std::vector<std::vector<Token>>& hold) {
  std::uint64_t phi = 0;
  for (const auto& ts : hold)
    for (const Token& t : ts)
      if (t.weight >= 2) phi += static_cast<std::uint64_t>(t.weight) * t.weight;
  return phi;
}

struct Arrival {
  NodeId to;
  Token token;
};

std::vector<std::int64_t> exact_counts(Network& net,
                                       const std::vector<std::vector<std::uint8_t>>& bits,
                                       PushSumParams params) {
  const std::uint64_t base = push_sum_rounds(net.n(), net.failure().mu, params);
  for (int attempt = 0; attempt < 3; ++attempt) {
    params.rounds = base << attempt;
    CountResult r = push_sum_count(net, bits, params);
    if (!r.flagged) return r.value;
  }
  throw TrialFailure("push-sum count stayed ambiguous");
}

}  // namespace

std::vector<Key> distribute_tokens(Network& net, std::span<const Key> values, std::uint32_t m,
                                   const TokenParams& params, TokenStats* stats) {
  const std::uint32_t n = net.n();
  if (values.size() != n) throw ParameterError("need one key per node");
  if (!analysis::is_power_of_two(m)) throw ParameterError("m must be a power of two");

  std::vector<std::vector<Token>> hold(n);
  std::uint64_t valued = 0;
  for (NodeId v = 0; v < n; ++v) {
    if (!is_real(values[v])) continue;
    hold[v].push_back({values[v], m, 0});
    ++valued;
  }
  if (valued * m > n) throw ParameterError("not enough nodes for m copies of every value");

  TokenStats local;
  TokenStats& st = stats ? *stats : local;
  st = TokenStats{};
  const std::uint64_t cap = phase_cap(n, net.failure().mu, params.c);
  const std::uint64_t rounds0 = net.rounds();
  net.next_epoch();
  std::vector<Arrival> arrivals;

  auto check_load = [&] {
    for (const auto& ts : hold) {
      st.max_tokens_per_node = std::max<std::uint64_t>(st.max_tokens_per_node, ts.size());
      if (ts.size() > params.max_per_node) throw TrialFailure("token multiplicity cap exceeded");
    }
  };

  for (std::uint64_t phase = 0;; ++phase) {
    std::uint64_t Phi = potential(hold);
    st.potential.push_back(Phi);
    if (Phi == 0) break;
    if (phase >= cap) throw TrialFailure("tokens not split within the phase cap");

    std::size_t width = 0;
    for (const auto& ts : hold) {
      std::size_t heavy = 0;
      for (const Token& t : ts) heavy += t.weight >= 2;
      width = std::max(width, heavy);
    }
    const std::uint64_t first = net.advance(width);
    arrivals.clear();
    std::uint64_t msgs = 0;
    for (NodeId v = 0; v < n; ++v) {
      unsigned j = 0;
      for (Token& t : hold[v]) {
        if (t.weight < 2) continue;
        const unsigned slot = j++;
        if (net.failed(v, first + slot)) continue;
        NodeId q = net.peer(net.slot(Tag::split, phase, slot), slot, v);
        const std::uint32_t half = t.weight / 2;
        arrivals.push_back({q, {t.key, half, t.offset}});
        t.weight = half;
        t.offset += half;
        ++msgs;
      }
    }
    for (const Arrival& a : arrivals) hold[a.to].push_back(a.token);
    net.count_messages(msgs);
    ++st.split_phases;
    check_load();
  }

  // A relocated token lands on a free node with probability about
  // (1 - mu)(1 - density), so the settling cap scales with its inverse.
  const double density = static_cast<double>(valued * m) / n;
  const auto settle_cap = static_cast<std::uint64_t>(
      std::ceil(static_cast<double>(cap) / std::max(1.0 - density, 1.0 / n)));
  for (std::uint64_t phase = 0;; ++phase) {
    std::size_t width = 0;
    for (const auto& ts : hold) width = std::max(width, ts.size());
    if (width <= 1) break;
    if (phase >= settle_cap) throw TrialFailure("tokens not settled within the phase cap");

    const std::uint64_t first = net.advance(width - 1);
    arrivals.clear();
    std::uint64_t msgs = 0;
    for (NodeId v = 0; v < n; ++v) {
      auto& ts = hold[v];
      if (ts.size() <= 1) continue;
      std::vector<Token> kept{ts[0]};
      for (std::size_t i = 1; i < ts.size(); ++i) {
        const auto slot = static_cast<unsigned>(i - 1);
        if (net.failed(v, first + slot)) {
          kept.push_back(ts[i]);
          continue;
        }
        arrivals.push_back({net.peer(net.slot(Tag::relocate, phase, slot), slot, v), ts[i]});
        ++msgs;
      }
      ts.swap(kept);
    }
    for (const Arrival& a : arrivals) hold[a.to].push_back(a.token);
    net.count_messages(msgs);
    ++st.relocation_phases;
    check_load();
  }

  std::vector<Key> out(n, kInfKey);
  for (NodeId v = 0; v < n; ++v) {
    if (hold[v].empty()) continue;
    const Token& t = hold[v].front();
    std::uint64_t path = static_cast<std::uint64_t>(path_of(t.key)) * m + t.offset;
    if (path > 0xffff'ffffULL) throw TrialFailure("copy path overflow");
    out[v] = make_key(origin_of(t.key), static_cast<std::uint32_t>(path));
  }
  st.rounds = net.rounds() - rounds0;
  return out;
}

std::vector<Key> filter_range(std::span<const Key> values, Key lo, Key hi) {
  std::vector<Key> out(values.begin(), values.end());
  for (Key& x : out)
    if (!is_real(x) || x < lo || x > hi) x = kInfKey;
  return out;
}

std::uint64_t rank_update(std::uint64_t k_prev, std::uint64_t R, std::uint64_t m) {
  if (R > k_prev) throw std::logic_error("rank of min exceeds target rank");
  return m * (k_prev - R + 1);
}

double exact_default_eps(std::uint64_t n, double cap) {
  return std::min(std::pow(static_cast<double>(n), -0.05) / 2.0, cap);
}

ExactResult exact_quantile(Network& net, std::span<const Key> initial, const ExactParams& params) {
  const std::uint32_t n = net.n();
  if (initial.size() != n) throw ParameterError("need one key per node");
  const double eps = params.eps > 0.0 ? params.eps : exact_default_eps(n);
  if (!(eps > 0.0 && eps < 0.25)) throw ParameterError("exact eps must lie in (0, 1/4)");
  if (params.max_iterations < 0) throw ParameterError("max_iterations must be non-negative");

  ExactResult res;
  const std::uint64_t rounds0 = net.rounds(), msgs0 = net.messages();
  std::uint64_t k = target_rank(params.phi, n);
  auto finish = [&] {
    res.report.rounds = net.rounds() - rounds0;
    res.report.messages = net.messages() - msgs0;
    const auto& outs = res.report.outputs;
    res.answer = std::all_of(outs.begin(), outs.end(), [&](Key x) { return x == outs[0]; })
                     ? outs[0]
                     : kNoKey;
  };

  if (n == 1) {
    res.report.outputs.assign(initial.begin(), initial.end());
    res.found_in_loop = true;
    res.final_k = res.final_block = 1;
    finish();
    return res;
  }

  TournamentParams tp;
  tp.eps = eps / 2.0;
  tp.K = params.K;
  tp.robust = params.robust;
  tp.track_lmh = false;
  if (params.robust) {
    tp.t_extra = params.t_extra >= 0 ? params.t_extra
                                     : 2 * static_cast<int>(std::bit_width(n - 1u));
  }
  const double nn = static_cast<double>(n);

  std::vector<Key> cur(initial.begin(), initial.end());
  std::uint64_t M = 1, block = 1;
  std::vector<Key> min_in(n), max_in(n);
  std::vector<std::vector<std::uint8_t>> bits(2, std::vector<std::uint8_t>(n));

  auto found = [&](Key answer) {
    res.found_in_loop = true;
    res.report.outputs.assign(n, make_key(origin_of(answer), 0));
    res.final_k = k;
    res.final_block = block;
    finish();
    return res;
  };

  for (int it = 1; it <= params.max_iterations; ++it) {
    if (static_cast<double>(block) >= eps * nn || block >= k) break;
    Key lo = kNoKey, hi = kNoKey;
    std::uint64_t R = 0, C2 = 0;
    for (int attempt = 0;; ++attempt) {
      // A window edge past either end of the range becomes the global
      // min or max itself, read off the current values.
      const double q = static_cast<double>(k) / nn;
      if (q - eps / 2.0 <= 0.0) {
        std::copy(cur.begin(), cur.end(), min_in.begin());
      } else {
        tp.phi = q - eps / 2.0;
        TrialReport low = approx_quantile(net, cur, tp);
        for (NodeId v = 0; v < n; ++v)
          min_in[v] = low.outputs[v] == kNoKey ? kInfKey : low.outputs[v];
      }
      if (q + eps / 2.0 >= 1.0) {
        for (NodeId v = 0; v < n; ++v) max_in[v] = is_real(cur[v]) ? cur[v] : kNoKey;
      } else {
        tp.phi = q + eps / 2.0;
        TrialReport high = approx_quantile(net, cur, tp);
        std::copy(high.outputs.begin(), high.outputs.end(), max_in.begin());
      }
      MinMaxResult mm = spread_min_max(net, min_in, max_in, params.spread_c);
      if (!mm.converged) throw TrialFailure("min/max did not converge");
      lo = mm.true_min;
      hi = mm.true_max;
      for (NodeId v = 0; v < n; ++v) {
        bits[0][v] = cur[v] <= lo;
        bits[1][v] = is_real(cur[v]) && cur[v] <= hi;
      }
      auto counts = exact_counts(net, bits, params.push_sum);
      R = static_cast<std::uint64_t>(counts[0]);
      C2 = static_cast<std::uint64_t>(counts[1]);
      if (is_real(lo) && lo <= hi && R <= k && C2 >= k) break;
      if (attempt >= params.max_retries)
        throw TrialFailure("approximate window missed the target in iteration " +
                           std::to_string(it));
      ++res.retries;
    }
    res.iterations = it;

    if (same_origin(lo, hi) || R == k) return found(lo);
    if (C2 == k) return found(hi);

    cur = filter_range(cur, lo, hi);
    const std::uint64_t valued = C2 - R + 1;
    const auto m = static_cast<std::uint32_t>(analysis::compute_m(n, valued, params.m_exponent));
    block = std::min(block, k - R + 1) * m;
    k = rank_update(k, R, m);
    if (m > 1) cur = distribute_tokens(net, cur, m, params.tokens);
    M *= m;

    if (params.on_iteration) {
      ExactIterationInfo info;
      info.iteration = it;
      info.k = k;
      info.M = M;
      info.block = block;
      info.min = lo;
      info.max = hi;
      info.R = R;
      info.valued = valued;
      info.m = m;
      info.values = &cur;
      params.on_iteration(info);
    }
  }

  if (block >= k) {
    // Ranks 1..k all hold copies of the answer, so it is the minimum.
    MinMaxResult mm = spread_min_max(net, cur, params.spread_c);
    if (!mm.converged) throw TrialFailure("min/max did not converge");
    res.report.outputs.resize(n);
    for (NodeId v = 0; v < n; ++v) res.report.outputs[v] = make_key(origin_of(mm.min[v]), 0);
    res.final_k = k;
    res.final_block = block;
    finish();
    return res;
  }

  const double W = static_cast<double>(block);
  tp.phi = std::clamp((static_cast<double>(k) - W / 2.0) / nn, 0.0, 1.0);
  tp.eps = std::min(W / (3.0 * nn), 0.124);
  for (int attempt = 0;; ++attempt) {
    TrialReport fin = approx_quantile(net, cur, tp);
    for (NodeId v = 0; v < n; ++v) {
      const Key y = fin.outputs[v];
      min_in[v] = is_real(y) ? y : kInfKey;
      max_in[v] = is_real(y) ? y : kNoKey;
    }
    MinMaxResult mm = spread_min_max(net, min_in, max_in, params.spread_c);
    if (!mm.converged) throw TrialFailure("min/max did not converge");
    // Either extreme of the outputs is accepted once its exact rank falls
    // inside the answer block.
    const Key cand[2] = {mm.true_min, mm.true_max};
    std::vector<std::vector<std::uint8_t>> fbits(4, std::vector<std::uint8_t>(n));
    for (NodeId v = 0; v < n; ++v)
      for (int c = 0; c < 2; ++c) {
        fbits[2 * c][v] = cur[v] < cand[c];
        fbits[2 * c + 1][v] = is_real(cur[v]) && cur[v] <= cand[c];
      }
    auto counts = exact_counts(net, fbits, params.push_sum);
    Key hit = kNoKey;
    for (int c = 0; c < 2 && hit == kNoKey; ++c)
      if (is_real(cand[c]) && static_cast<std::uint64_t>(counts[2 * c]) >= k - block &&
          static_cast<std::uint64_t>(counts[2 * c + 1]) <= k)
        hit = cand[c];
    if (hit != kNoKey) {
      res.report.outputs.assign(n, make_key(origin_of(hit), 0));
      break;
    }
    if (attempt >= params.max_retries)
      throw TrialFailure("final approximation missed the answer block");
    ++res.retries;
  }
  res.final_k = k;
  res.final_block = block;
  finish();
  return res;
}

ExactResult run_exact_trial(Network& net, std::span<const Key> initial,
                            const ExactParams& params) {
  ExactResult res = exact_quantile(net, initial, params);
  RankOracle oracle(initial);
  const std::uint64_t k = target_rank(params.phi, net.n());
  const Key truth = oracle.at_rank(k);
  auto& rep = res.report;
  rep.max_rank_error = 0;
  rep.nodes_without_correct = 0;
  for (Key out : rep.outputs) {
    if (out != truth) ++rep.nodes_without_correct;
    if (is_real(out)) rep.max_rank_error = std::max(rep.max_rank_error, oracle.rank_error(out, k));
  }
  rep.success = rep.nodes_without_correct == 0;
  return res;
}

}  // namespace gossipq
