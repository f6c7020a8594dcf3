#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "gossipq/experiment.hpp"
#include "gossipq/oracle.hpp"
#include "gossipq/tournament.hpp"

using namespace gossipq;

namespace {

Network make_net(std::uint32_t n, std::uint64_t seed, FailureModel f = {}) {
  SimConfig c;
  c.n = n;
  c.seed = seed;
  c.failure = f;
  return Network(c);
}

std::vector<Key> perm_keys(std::uint32_t n, std::uint64_t seed) {
  return KeyTable(make_values(n, seed, Distribution::permutation)).initial_keys();
}

double fraction_at_most(std::span<const Key> xs, Key cut) {
  return static_cast<double>(std::count_if(xs.begin(), xs.end(), [&](Key x) { return x <= cut; })) /
         static_cast<double>(xs.size());
}

}  // namespace

TEST_CASE("phase 1 with forced contacts") {
  const std::uint32_t n = 8;
  std::vector<Key> prev = {10, 3, 20, 7, 1, 1, 1, 1}, next(n);
  SUBCASE("min of the two pulls") {
    Network net = make_net(n, 1);
    net.force_contacts([](NodeId, unsigned j) { return j == 0 ? 1u : 3u; });
    phase1_iteration(net, prev, next, 1.0, analysis::Direction::shrink_high, 0);
    for (Key x : next) CHECK(x == 3);
    CHECK(net.rounds() == 2);
    CHECK(net.messages() == 2 * n);
  }
  SUBCASE("max when shrinking low") {
    Network net = make_net(n, 1);
    net.force_contacts([](NodeId, unsigned j) { return j == 0 ? 1u : 3u; });
    phase1_iteration(net, prev, next, 1.0, analysis::Direction::shrink_low, 0);
    for (Key x : next) CHECK(x == 7);
  }
  SUBCASE("delta = 0 copies the first pull") {
    Network net = make_net(n, 1);
    net.force_contacts([](NodeId v, unsigned j) { return j == 0 ? (v + 2) % 8 : 4u; });
    phase1_iteration(net, prev, next, 0.0, analysis::Direction::shrink_high, 0);
    for (NodeId v = 0; v < n; ++v) CHECK(next[v] == prev[(v + 2) % 8]);
    CHECK(net.rounds() == 2);
    CHECK(net.messages() == n);
  }
}

TEST_CASE("phase 2 with forced contacts") {
  const std::uint32_t n = 6;
  std::vector<Key> prev = {1, 5, 3, 9, 9, 9}, next(n);
  Network net = make_net(n, 1);
  net.force_contacts([](NodeId, unsigned j) { return j; });
  phase2_iteration(net, prev, next, 0);
  for (Key x : next) CHECK(x == 3);
  CHECK(net.rounds() == 3);

  std::vector<Key> same(n, 42);
  Network net2 = make_net(n, 3);
  phase2_iteration(net2, same, next, 0);
  for (Key x : next) CHECK(x == 42);
}

TEST_CASE("final median sample") {
  const std::uint32_t n = 50;
  std::vector<Key> vals(n), out(n);
  for (std::uint32_t i = 0; i < n; ++i) vals[i] = make_key(i, 0);
  SUBCASE("K = 1 returns the pulled value") {
    Network net = make_net(n, 1);
    net.force_contacts([](NodeId v, unsigned) { return (v * 7) % 50; });
    final_median_sample(net, vals, 1, out);
    for (NodeId v = 0; v < n; ++v) CHECK(out[v] == vals[(v * 7) % 50]);
    CHECK(net.rounds() == 1);
  }
  SUBCASE("even K rounds up") {
    Network net = make_net(n, 1);
    final_median_sample(net, vals, 4, out);
    CHECK(net.rounds() == 5);
  }
  SUBCASE("all equal") {
    Network net = make_net(n, 1);
    std::vector<Key> same(n, 9);
    final_median_sample(net, same, 31, out);
    for (Key x : out) CHECK(x == 9);
  }
  SUBCASE("median of forced samples") {
    Network net = make_net(n, 1);
    net.force_contacts([](NodeId, unsigned j) { return 10 * j; });  // samples 0, 10, 20, 30, 40
    final_median_sample(net, vals, 5, out);
    for (Key x : out) CHECK(x == vals[20]);
  }
}

TEST_CASE("single node") {
  Network net = make_net(1, 1);
  std::vector<Key> one = {make_key(0, 0)};
  TournamentParams tp;
  auto r = run_approx_trial(net, one, tp);
  CHECK(r.outputs == one);
  CHECK(r.rounds == 0);
  CHECK(r.success);
}

TEST_CASE("parameter validation") {
  Network net = make_net(100, 1);
  auto keys = perm_keys(100, 1);
  TournamentParams tp;
  tp.eps = 0.125;
  CHECK_THROWS_AS(approx_quantile(net, keys, tp), ParameterError);
  tp.eps = 0.05;
  tp.phi = 1.5;
  CHECK_THROWS_AS(approx_quantile(net, keys, tp), ParameterError);
  tp.phi = 0.5;
  tp.K = 64;
  CHECK_THROWS_AS(approx_quantile(net, keys, tp), ParameterError);
  tp.K = 30;
  std::vector<Key> short_keys(10);
  CHECK_THROWS_AS(approx_quantile(net, short_keys, tp), ParameterError);
}

TEST_CASE("approximate quantile succeeds and only outputs initial values") {
  const std::uint32_t n = 20000;
  int ok = 0, total = 0;
  for (double phi : {0.0, 0.1, 0.5, 0.9, 1.0}) {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
      auto keys = perm_keys(n, seed);
      Network net = make_net(n, seed);
      TournamentParams tp;
      tp.phi = phi;
      tp.eps = 0.05;
      auto r = run_approx_trial(net, keys, tp);
      ok += r.success;
      ++total;
      const std::set<Key> init(keys.begin(), keys.end());
      for (Key x : r.outputs) CHECK(init.count(x) == 1);
      for (const auto& lmh : r.per_iteration_lmh) CHECK(lmh.total() == n);
      CHECK(r.per_iteration_lmh.size() == r.phase1_iterations + r.phase2_iterations + 1);
      CHECK(r.rounds == 2 * r.phase1_iterations + 3 * r.phase2_iterations + 31);
    }
  }
  CHECK(ok == total);
}

TEST_CASE("phase I squares the high fraction in expectation") {
  const std::uint32_t n = 100000;
  const Key cut = make_key(n / 2 - 1, 0);  // p = 1/2 at or below
  double mean = 0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    auto keys = perm_keys(n, 100 + s);
    std::vector<Key> next(n);
    Network net = make_net(n, 100 + s);
    phase1_iteration(net, keys, next, 1.0, analysis::Direction::shrink_high, 0);
    mean += 1.0 - fraction_at_most(next, cut);
  }
  mean /= seeds;
  const double p = 0.25, sigma = std::sqrt(p * (1 - p) / n / seeds);
  CHECK(std::abs(mean - p) <= 3 * sigma);
}

TEST_CASE("phase II follows 3p^2 - 2p^3 in expectation") {
  const std::uint32_t n = 100000;
  const Key cut = make_key(n / 5 - 1, 0);  // p = 0.2
  double mean = 0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    auto keys = perm_keys(n, 200 + s);
    std::vector<Key> next(n);
    Network net = make_net(n, 200 + s);
    phase2_iteration(net, keys, next, 0);
    mean += fraction_at_most(next, cut);
  }
  mean /= seeds;
  const double q = analysis::median3_step(0.2), sigma = std::sqrt(q * (1 - q) / n / seeds);
  CHECK(std::abs(mean - q) <= 3 * sigma);
}

TEST_CASE("robust pull batches") {
  const std::uint32_t n = 100;
  std::vector<std::uint64_t> bases(9);
  Network net = make_net(n, 4);
  for (unsigned j = 0; j < 9; ++j) bases[j] = net.slot(Tag::phase1, 0, j);
  std::vector<std::uint8_t> good(n, 1), bad(n, 0);
  for (NodeId v = 0; v < n; ++v) {
    auto r = robust_pull_batch(net, v, bases, 0, good, 3);
    CHECK(r.good == 3);
    CHECK(r.sent == 3);
    for (unsigned j = 0; j < 3; ++j) CHECK(r.peers[j] == net.peer(bases[j], j, v));
    auto none = robust_pull_batch(net, v, bases, 0, bad, 3);
    CHECK(none.good == 0);
    CHECK(none.sent == 9);
  }
  Network failing = make_net(n, 4, FailureModel::uniform(0.5));
  for (NodeId v = 0; v < n; ++v) {
    auto r = robust_pull_batch(failing, v, bases, 0, good, 2);
    std::uint32_t expected_sent = 0, found = 0;
    for (unsigned j = 0; j < 9 && found < 2; ++j) {
      if (failing.failed(v, j)) continue;
      ++expected_sent;
      ++found;
    }
    CHECK(r.sent == expected_sent);
    CHECK(r.good == found);
  }
}

TEST_CASE("robust mode without failures matches the plain protocol") {
  const std::uint32_t n = 30000;
  auto keys = perm_keys(n, 9);
  TournamentParams tp;
  tp.phi = 0.2;
  Network a = make_net(n, 9), b = make_net(n, 9);
  auto plain = approx_quantile(a, keys, tp);
  tp.robust = true;
  auto robust = approx_quantile(b, keys, tp);
  CHECK(plain.outputs == robust.outputs);
  for (auto g : robust.good_counts) CHECK(g == n);
}

TEST_CASE("robust mode under failures keeps enough good nodes") {
  const std::uint32_t n = 100000;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto keys = perm_keys(n, seed);
    Network net = make_net(n, seed, FailureModel::uniform(0.5));
    TournamentParams tp;
    tp.phi = 0.25;
    tp.robust = true;
    tp.t_extra = 10;
    auto r = run_approx_trial(net, keys, tp);
    CHECK(r.success);
    CHECK(r.nodes_without_correct <= (n >> 10));
    REQUIRE_FALSE(r.good_counts.empty());
    for (auto g : r.good_counts) CHECK(g >= n / 3);
    // bad fraction per iteration stays below 0.44
    for (auto g : r.good_counts) CHECK(static_cast<double>(n - g) / n <= 0.44);
  }
}

TEST_CASE("scheduled failures are tolerated") {
  const std::uint32_t n = 50000;
  auto keys = perm_keys(n, 3);
  Network net = make_net(n, 3, FailureModel::scheduled(0.6, 17));
  TournamentParams tp;
  tp.robust = true;
  tp.t_extra = 8;
  CHECK(run_approx_trial(net, keys, tp).success);
}
