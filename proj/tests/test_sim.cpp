#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include "gossipq/oracle.hpp"
#include "gossipq/sim.hpp"
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

// Upper-tail p-value test for chi-square via the Wilson-Hilferty normal
// approximation; returns z such that p = 1 - Phi(z).
double chi_square_z(double stat, double df) {
  const double a = 2.0 / (9.0 * df);
  return (std::cbrt(stat / df) - (1.0 - a)) / std::sqrt(a);
}

std::vector<Key> iota_keys(std::uint32_t n) {
  std::vector<Key> k(n);
  for (std::uint32_t i = 0; i < n; ++i) k[i] = make_key(i, 0);
  return k;
}

}  // namespace

TEST_CASE("keys order by value then node id") {
  const std::vector<double> vals = {3.0, 1.0, 3.0, 2.0};
  KeyTable t(vals);
  const auto& k = t.initial_keys();
  CHECK(k[1] < k[3]);
  CHECK(k[3] < k[0]);
  CHECK(k[0] < k[2]);  // equal raw values, node 0 first
  std::set<Key> distinct(k.begin(), k.end());
  CHECK(distinct.size() == 4);
  CHECK(t.decode(k[2]).value == 3.0);
  CHECK(t.decode(k[0]) < t.decode(k[2]));
  CHECK(t.origin_node(k[3]) == 3);
  const Key copy = make_key(origin_of(k[0]), 5);
  CHECK(t.decode(copy).value == 3.0);
  CHECK(t.decode(copy).tiebreak > t.decode(k[0]).tiebreak);
  CHECK(is_real(k[0]));
  CHECK_FALSE(is_real(kNoKey));
  CHECK_FALSE(is_real(kInfKey));
  for (Key x : k) CHECK(x < kInfKey);
}

TEST_CASE("key table rejects NaN and empty input") {
  const std::vector<double> bad = {1.0, std::numeric_limits<double>::quiet_NaN()};
  CHECK_THROWS_AS(KeyTable{bad}, ParameterError);
  CHECK_THROWS_AS(KeyTable{std::vector<double>{}}, ParameterError);
}

TEST_CASE("target rank clamps to [1, n]") {
  CHECK(target_rank(0.0, 10) == 1);
  CHECK(target_rank(1.0, 10) == 10);
  CHECK(target_rank(0.5, 8) == 4);
  CHECK(target_rank(0.5, 9) == 5);
  CHECK(target_rank(0.1, 100000) == 10000);
}

TEST_CASE("uniform_peer with one node always returns 0") {
  rng::Stream s(5, 0, 0);
  for (int i = 0; i < 100; ++i) CHECK(uniform_peer(s, 1) == 0);
}

TEST_CASE("uniform_peer consumes exactly one draw and is deterministic") {
  rng::Stream a(11, 3, 4), b(11, 3, 4), c(11, 3, 4);
  std::vector<NodeId> xs, ys;
  for (int i = 0; i < 50; ++i) {
    xs.push_back(uniform_peer(a, 1000));
    ys.push_back(uniform_peer(b, 1000));
    CHECK(xs.back() == rng::bounded(c.next(), 1000));
  }
  CHECK(xs == ys);
}

TEST_CASE("peer sampling is uniform (chi-square)") {
  const std::uint32_t n = 10000;
  const int draws_per_node = 100;  // 10^6 draws
  Network net = make_net(n, 42);
  std::vector<std::uint64_t> hist(n, 0);
  std::vector<std::uint32_t> out(n);
  for (int r = 0; r < draws_per_node; ++r) {
    net.peers(net.slot(Tag::generic, static_cast<std::uint64_t>(r), 0), 0, 0, n, out.data());
    for (auto p : out) ++hist[p];
  }
  const double expected = draws_per_node;
  double stat = 0;
  for (auto h : hist) stat += (h - expected) * (h - expected) / expected;
  // p > 0.001  <=>  z < 3.09
  CHECK(chi_square_z(stat, n - 1) < 3.09);

  // the stream-based sampler as well
  std::fill(hist.begin(), hist.end(), 0);
  rng::Stream s(7, 0, 0);
  for (int i = 0; i < n * draws_per_node; ++i) ++hist[uniform_peer(s, n)];
  stat = 0;
  for (auto h : hist) stat += (h - expected) * (h - expected) / expected;
  CHECK(chi_square_z(stat, n - 1) < 3.09);
}

TEST_CASE("draw_failures") {
  SUBCASE("none is all zero") {
    auto f = draw_failures(FailureModel::none(), 3, 1000, 9);
    CHECK(std::count(f.begin(), f.end(), 1) == 0);
  }
  SUBCASE("uniform(0.5) rate and reproducibility") {
    const std::uint32_t n = 1000000;
    auto f = draw_failures(FailureModel::uniform(0.5), 12, n, 77);
    const double rate = static_cast<double>(std::count(f.begin(), f.end(), 1)) / n;
    CHECK(std::abs(rate - 0.5) <= 0.002);
    CHECK(f == draw_failures(FailureModel::uniform(0.5), 12, n, 77));
    CHECK(f != draw_failures(FailureModel::uniform(0.5), 13, n, 77));
  }
  SUBCASE("scheduled probabilities never exceed mu") {
    auto m = FailureModel::scheduled(0.4, 5);
    double mean = 0;
    for (NodeId v = 0; v < 1000; ++v)
      for (std::uint64_t r = 0; r < 20; ++r) {
        double p = m.probability(v, r);
        CHECK(p >= 0.0);
        CHECK(p <= 0.4);
        mean += p;
      }
    mean /= 20000;
    const std::uint32_t n = 200000;
    auto f = draw_failures(m, 4, n, 3);
    const double rate = static_cast<double>(std::count(f.begin(), f.end(), 1)) / n;
    // mean of mu * U is mu / 2
    CHECK(std::abs(rate - 0.2) < 0.01);
    CHECK(std::abs(mean - 0.2) < 0.01);
  }
  SUBCASE("bulk and single-node queries agree") {
    Network net = make_net(3000, 8, FailureModel::uniform(0.3));
    std::vector<std::uint8_t> bulk(3000);
    net.failures(17, 0, 3000, bulk.data());
    for (NodeId v = 0; v < 3000; ++v) CHECK(bulk[v] == net.failed(v, 17));
    Network sched = make_net(500, 8, FailureModel::scheduled(0.6, 1));
    std::vector<std::uint8_t> s(500);
    sched.failures(2, 0, 500, s.data());
    for (NodeId v = 0; v < 500; ++v) CHECK(s[v] == sched.failed(v, 2));
  }
  SUBCASE("invalid mu") {
    CHECK_THROWS_AS(FailureModel::uniform(1.0).validate(), ParameterError);
    CHECK_THROWS_AS(FailureModel::uniform(-0.1).validate(), ParameterError);
  }
}

TEST_CASE("run_iteration semantics") {
  const std::uint32_t n = 64;
  std::vector<int> prev(n), next(n);
  for (std::uint32_t i = 0; i < n; ++i) prev[i] = static_cast<int>(100 + i);

  SUBCASE("identity") {
    Network net = make_net(n, 1);
    run_iteration<int>(net, prev, next, 1, Tag::generic, 0, [](auto& ctx) { return ctx.own(); });
    CHECK(next == prev);
    CHECK(net.rounds() == 1);
    CHECK(net.messages() == 0);
  }
  SUBCASE("all contacts forced to node 0") {
    Network net = make_net(n, 1);
    net.force_contacts([](NodeId, unsigned) { return 0u; });
    run_iteration<int>(net, prev, next, 1, Tag::generic, 0, [](auto& ctx) { return ctx.pull(0); });
    for (int x : next) CHECK(x == 100);
    CHECK(net.messages() == n);
  }
  SUBCASE("snapshot isolation along a copy chain") {
    Network net = make_net(n, 1);
    // node i copies node i + 1
    net.force_contacts([n](NodeId v, unsigned) { return (v + 1) % n; });
    run_iteration<int>(net, prev, next, 1, Tag::generic, 0, [](auto& ctx) { return ctx.pull(0); });
    for (std::uint32_t i = 0; i < n; ++i) CHECK(next[i] == prev[(i + 1) % n]);
  }
  SUBCASE("c pulls cost c rounds and one message each") {
    Network net = make_net(n, 1);
    run_iteration<int>(net, prev, next, 3, Tag::generic, 0, [](auto& ctx) {
      return ctx.pull(0) + ctx.pull(1) + ctx.pull(2);
    });
    CHECK(net.rounds() == 3);
    CHECK(net.messages() == 3 * n);
  }
  SUBCASE("failed pulls fall back to the own state and send nothing") {
    Network net = make_net(n, 1, FailureModel::uniform(0.5));
    std::uint64_t expected_msgs = 0;
    for (NodeId v = 0; v < n; ++v) expected_msgs += !net.failed(v, 0);
    run_iteration<int>(net, prev, next, 1, Tag::generic, 0, [](auto& ctx) { return ctx.pull(0); });
    for (NodeId v = 0; v < n; ++v)
      if (net.failed(v, 0)) CHECK(next[v] == prev[v]);
    CHECK(net.messages() == expected_msgs);
  }
  SUBCASE("mismatched sizes") {
    Network net = make_net(n, 1);
    std::vector<int> small(3);
    CHECK_THROWS_AS(run_iteration<int>(net, prev, small, 1, Tag::generic, 0,
                                       [](auto& ctx) { return ctx.own(); }),
                    ParameterError);
  }
}

TEST_CASE("round budget") {
  SimConfig c;
  c.n = 10;
  c.max_rounds = 5;
  Network net(c);
  CHECK(net.advance(5) == 0);
  CHECK_THROWS_AS(net.advance(1), BudgetExceeded);

  SimConfig c2;
  c2.n = 1000;
  c2.max_rounds = 10;
  Network small(c2);
  TournamentParams tp;
  CHECK_THROWS_AS(approx_quantile(small, iota_keys(1000), tp), BudgetExceeded);
}

TEST_CASE("config validation") {
  SimConfig c;
  c.n = 0;
  CHECK_THROWS_AS(Network{c}, ParameterError);
  c.n = kMaxNodes + 1;
  CHECK_THROWS_AS(Network{c}, ParameterError);
}

TEST_CASE("phase 1 iteration equals its run_iteration reference") {
  const std::uint32_t n = 5003;
  std::vector<Key> prev(n);
  rng::Stream s(3, 0, 0);
  for (auto& k : prev) k = make_key(rng::bounded(s.next(), n), 0);
  for (auto fm : {FailureModel::none(), FailureModel::uniform(0.3), FailureModel::scheduled(0.5, 2)}) {
    for (double delta : {1.0, 0.37, 0.0}) {
      for (auto dir : {analysis::Direction::shrink_high, analysis::Direction::shrink_low}) {
        Network a = make_net(n, 19, fm), b = make_net(n, 19, fm);
        std::vector<Key> fast(n), ref(n);
        phase1_iteration(a, prev, fast, delta, dir, 4);
        const std::uint64_t coin = b.slot(Tag::phase1, 4, kCoinSub);
        const auto thr = rng::probability_threshold(delta);
        run_iteration<Key>(b, prev, ref, 2, Tag::phase1, 4, [&](auto& ctx) {
          const bool take = delta >= 1.0 || rng::node_draw(coin, ctx.self()) < thr;
          const Key x = ctx.pull(0);
          if (!take) return x;
          const Key y = ctx.pull(1);
          return dir == analysis::Direction::shrink_high ? std::min(x, y) : std::max(x, y);
        });
        CHECK(fast == ref);
        CHECK(a.messages() == b.messages());
        CHECK(a.rounds() == b.rounds());
      }
    }
  }
}

TEST_CASE("phase 2 iteration equals its run_iteration reference") {
  const std::uint32_t n = 4099;
  std::vector<Key> prev(n);
  rng::Stream s(4, 0, 0);
  for (auto& k : prev) k = make_key(rng::bounded(s.next(), n), 0);
  for (auto fm : {FailureModel::none(), FailureModel::uniform(0.5)}) {
    Network a = make_net(n, 23, fm), b = make_net(n, 23, fm);
    std::vector<Key> fast(n), ref(n);
    phase2_iteration(a, prev, fast, 2);
    run_iteration<Key>(b, prev, ref, 3, Tag::phase2, 2, [](auto& ctx) {
      Key x[3] = {ctx.pull(0), ctx.pull(1), ctx.pull(2)};
      std::sort(x, x + 3);
      return x[1];
    });
    CHECK(fast == ref);
    CHECK(a.messages() == b.messages());
  }
}

TEST_CASE("trials are bit-identical for identical config and seed") {
  const std::uint32_t n = 20000;
  auto keys = iota_keys(n);
  TournamentParams tp;
  tp.phi = 0.3;
  for (auto fm : {FailureModel::none(), FailureModel::uniform(0.3)}) {
    tp.robust = fm.active();
    tp.t_extra = tp.robust ? 5 : 0;
    Network a = make_net(n, 5, fm), b = make_net(n, 5, fm), c = make_net(n, 6, fm);
    auto ra = approx_quantile(a, keys, tp);
    auto rb = approx_quantile(b, keys, tp);
    auto rc = approx_quantile(c, keys, tp);
    CHECK(ra.outputs == rb.outputs);
    CHECK(ra.rounds == rb.rounds);
    CHECK(ra.messages == rb.messages);
    CHECK(ra.outputs != rc.outputs);
  }
}

TEST_CASE("backends give identical trials") {
  if (!kernels::avx2_table()) return;
  const std::uint32_t n = 30001;
  auto keys = iota_keys(n);
  TournamentParams tp;
  tp.phi = 0.7;
  std::vector<Key> outs[2];
  std::uint64_t msgs[2];
  int i = 0;
  for (auto b : {kernels::Backend::scalar, kernels::Backend::avx2}) {
    REQUIRE(kernels::select(b));
    Network net = make_net(n, 31, FailureModel::uniform(0.2));
    auto r = approx_quantile(net, keys, tp);
    outs[i] = r.outputs;
    msgs[i++] = r.messages;
  }
  CHECK(outs[0] == outs[1]);
  CHECK(msgs[0] == msgs[1]);
}

TEST_CASE("tournament iterations only copy existing values") {
  const std::uint32_t n = 3000;
  std::vector<Key> cur(n), nxt(n);
  rng::Stream s(8, 0, 0);
  for (auto& k : cur) k = make_key(rng::bounded(s.next(), 1u << 20), 0);
  const std::set<Key> initial(cur.begin(), cur.end());
  Network net = make_net(n, 2, FailureModel::uniform(0.2));
  for (std::uint64_t it = 0; it < 6; ++it) {
    if (it % 2)
      phase2_iteration(net, cur, nxt, it);
    else
      phase1_iteration(net, cur, nxt, 0.8, analysis::Direction::shrink_high, it);
    cur.swap(nxt);
    for (Key k : cur) CHECK(initial.count(k) == 1);
  }
}
