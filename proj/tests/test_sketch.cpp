#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "gossipq/analysis.hpp"
#include "gossipq/experiment.hpp"
#include "gossipq/oracle.hpp"
#include "gossipq/sketch.hpp"

using namespace gossipq;

namespace {

Network make_net(std::uint32_t n, std::uint64_t seed, FailureModel f = {}) {
  SimConfig c;
  c.n = n;
  c.seed = seed;
  c.failure = f;
  return Network(c);
}

std::vector<Key> dataset(std::size_t n, std::uint64_t seed, std::uint32_t range) {
  rng::Stream s(seed, 7, 0);
  std::vector<Key> v(n);
  for (auto& x : v) x = make_key(static_cast<std::uint32_t>(rng::bounded(s.next(), range)), 0);
  return v;
}

// Independent rank error: balanced merge tree built leaf by leaf, ranks by counting.
std::uint64_t naive_error(const std::vector<Key>& data, std::uint64_t k) {
  std::vector<CompactedBuffer> level;
  for (Key x : data) level.push_back(CompactedBuffer::singleton(x, k));
  while (level.size() > 1) {
    std::vector<CompactedBuffer> up;
    for (std::size_t i = 0; i < level.size(); i += 2) up.push_back(doubling_update(level[i], level[i + 1]));
    level = up;
  }
  const CompactedBuffer& root = level[0];
  std::uint64_t worst = 0;
  for (Key z : data) {
    const auto exact = static_cast<std::int64_t>(std::count_if(data.begin(), data.end(), [&](Key x) { return x <= z; }));
    const auto approx = static_cast<std::int64_t>(root.rank(z));
    worst = std::max<std::uint64_t>(worst, static_cast<std::uint64_t>(std::abs(exact - approx)));
  }
  return worst;
}

}  // namespace

TEST_CASE("compact keeps even positions") {
  CHECK(compact({7, 3, 5, 1}, 2) == std::vector<Key>{3, 7});
  CHECK(compact({4, 2, 9}, 3) == std::vector<Key>{2, 4, 9});
  CHECK(compact({1, 2, 3, 4, 5}, 4) == std::vector<Key>{2, 4});
  CHECK(compact({}, 4).empty());
  CHECK_THROWS_AS(compact({1, 2, 3, 4, 5}, 2), ParameterError);
}

TEST_CASE("compact depends only on the multiset") {
  auto a = dataset(128, 1, 40);
  auto b = a;
  std::reverse(b.begin(), b.end());
  CHECK(compact(a, 64) == compact(b, 64));
}

TEST_CASE("rank parity after one compaction") {
  CompactedBuffer before({1, 3, 5, 7}, 1, 0);
  CompactedBuffer after(compact({1, 3, 5, 7}, 2), 2, 2);
  CHECK(before.rank(4) == 2);
  CHECK(after.rank(4) == 2);  // even rank is kept
  CHECK(before.rank(5) == 3);
  CHECK(after.rank(5) == 2);  // odd rank loses one weight
}

TEST_CASE("rank and quantile queries") {
  CompactedBuffer b({3, 7}, 2, 2);
  CHECK(b.rank(1) == 0);
  CHECK(b.rank(5) == 2);
  CHECK(b.rank(100) == b.weighted_size());
  CHECK(b.weighted_size() == 4);
  CHECK(b.quantile(5) == 0.5);
  CHECK(b.quantile(7) == 1.0);
  CHECK_THROWS_AS(CompactedBuffer(4).rank(1), std::logic_error);
  CHECK_THROWS_AS(CompactedBuffer({1, 2}, 3, 0), ParameterError);
  CHECK_THROWS_AS(CompactedBuffer({2, 1}, 1, 0), ParameterError);
}

TEST_CASE("doubling update") {
  SUBCASE("two singletons") {
    auto out = doubling_update(CompactedBuffer::singleton(9, 4), CompactedBuffer::singleton(2, 4));
    CHECK(out.elements() == std::vector<Key>{2, 9});
    CHECK(out.weight() == 1);
  }
  SUBCASE("two full buffers compact once") {
    CompactedBuffer a({1, 4, 6, 8}, 2, 4), b({2, 3, 5, 7}, 2, 4);
    auto out = doubling_update(a, b);
    CHECK(out.size() == 4);
    CHECK(out.weight() == 4);
    CHECK(out.elements() == std::vector<Key>{2, 4, 6, 8});
    CHECK(out.weighted_size() == a.weighted_size() + b.weighted_size());
  }
  SUBCASE("weighted size is additive") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      auto d = dataset(16, seed, 1000);
      std::sort(d.begin(), d.end());
      CompactedBuffer a(std::vector<Key>(d.begin(), d.begin() + 8), 4, 8);
      CompactedBuffer b(std::vector<Key>(d.begin() + 8, d.end()), 4, 8);
      CHECK(doubling_update(a, b).weighted_size() == a.weighted_size() + b.weighted_size());
    }
  }
  SUBCASE("mismatched weights") {
    CompactedBuffer a({1}, 1, 4), b({2}, 2, 4);
    CHECK_THROWS_AS(doubling_update(a, b), std::logic_error);
    CHECK_THROWS_AS(doubling_update(CompactedBuffer::singleton(1, 4), CompactedBuffer::singleton(1, 8)),
                    ParameterError);
  }
}

TEST_CASE("buffer serialization") {
  CompactedBuffer b({3, 7}, 2, 4);
  auto bytes = b.serialize();
  const std::vector<std::uint8_t> golden = {
      2, 0, 0, 0, 0, 0, 0, 0,  // count
      3, 0, 0, 0, 0, 0, 0, 0,  // keys
      7, 0, 0, 0, 0, 0, 0, 0,
      2, 0, 0, 0, 0, 0, 0, 0,  // weight
      4, 0, 0, 0, 0, 0, 0, 0,  // capacity
  };
  CHECK(bytes == golden);
  CHECK(CompactedBuffer::deserialize(bytes) == b);
  std::vector<Key> sorted = dataset(64, 3, 1u << 30);
  std::sort(sorted.begin(), sorted.end());
  CompactedBuffer big_sorted(sorted, 8, 64);
  CHECK(CompactedBuffer::deserialize(big_sorted.serialize()) == big_sorted);
  bytes.pop_back();
  CHECK_THROWS_AS(CompactedBuffer::deserialize(bytes), std::invalid_argument);
  bytes.push_back(4);
  bytes.push_back(0);
  CHECK_THROWS_AS(CompactedBuffer::deserialize(bytes), std::invalid_argument);
}

TEST_CASE("compaction error check") {
  SUBCASE("no compaction, no error") {
    CHECK(compaction_error_check(dataset(64, 1, 1000), 64) == 0);
  }
  SUBCASE("matches an independent merge tree") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      auto d = dataset(512, seed, 300);
      CHECK(compaction_error_check(d, 32) == naive_error(d, 32));
    }
  }
  SUBCASE("within the deterministic bound") {
    const std::uint64_t bound = analysis::compaction_error_bound(1024, 64);
    REQUIRE(bound == 32);
    for (std::uint64_t seed = 1; seed <= 100; ++seed)
      CHECK(compaction_error_check(dataset(1024, seed, 1u << 20), 64) <= bound);
  }
  SUBCASE("sorted and reversed inputs") {
    for (std::uint64_t np : {256ull, 1024ull, 4096ull}) {
      std::vector<Key> d(np);
      for (std::uint64_t i = 0; i < np; ++i) d[i] = make_key(static_cast<std::uint32_t>(i), 0);
      CHECK(compaction_error_check(d, 32) <= analysis::compaction_error_bound(np, 32));
      std::reverse(d.begin(), d.end());
      CHECK(compaction_error_check(d, 32) <= analysis::compaction_error_bound(np, 32));
    }
  }
  SUBCASE("bad sizes") {
    CHECK_THROWS_AS(compaction_error_check(dataset(100, 1, 10), 16), ParameterError);
    CHECK_THROWS_AS(compaction_error_check(dataset(128, 1, 10), 12), ParameterError);
  }
}

TEST_CASE("sample size") {
  CHECK(sample_size(10000, 0.1) == static_cast<std::uint64_t>(std::ceil(800 * std::log(10000.0))));
  CHECK(sample_size(1, 0.5, 1.0) >= 1);
  CHECK_THROWS_AS(sample_size(100, 0.0), ParameterError);
}

TEST_CASE("uniform sampling quantile") {
  SUBCASE("outputs fall within 2 eps") {
    const std::uint32_t n = 10000;
    int ok = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      auto keys = KeyTable(make_values(n, seed, Distribution::permutation)).initial_keys();
      Network net = make_net(n, seed);
      auto r = uniform_sample_quantile(net, keys, 0.5, 0.1);
      CHECK(r.rounds == sample_size(n, 0.1));
      CHECK(r.messages == static_cast<std::uint64_t>(n) * r.rounds);
      score_outputs(r, RankOracle(keys), 0.5, 0.2);
      ok += r.success;
    }
    CHECK(ok == 5);
  }
  SUBCASE("exhaustive mode is exact") {
    const std::uint32_t n = 300;
    auto keys = KeyTable(make_values(n, 4, Distribution::permutation)).initial_keys();
    Network net = make_net(n, 4);
    SampleParams sp;
    sp.exhaustive = true;
    auto r = uniform_sample_quantile(net, keys, 0.37, 0.1, sp);
    const Key truth = RankOracle(keys).at_rank(target_rank(0.37, n));
    for (Key x : r.outputs) CHECK(x == truth);
  }
  SUBCASE("all values equal") {
    std::vector<Key> same(200, make_key(3, 0));
    Network net = make_net(200, 1);
    auto r = uniform_sample_quantile(net, same, 0.9, 0.2);
    for (Key x : r.outputs) CHECK(x == make_key(3, 0));
  }
  SUBCASE("failed pulls shrink the sample") {
    const std::uint32_t n = 500;
    auto keys = KeyTable(make_values(n, 2, Distribution::permutation)).initial_keys();
    Network net = make_net(n, 2, FailureModel::uniform(0.5));
    auto r = uniform_sample_quantile(net, keys, 0.5, 0.2);
    const double full = static_cast<double>(n) * static_cast<double>(r.rounds);
    CHECK(static_cast<double>(r.messages) == doctest::Approx(full / 2).epsilon(0.02));
  }
  SUBCASE("bad phi") {
    std::vector<Key> keys(10, make_key(0, 0));
    Network net = make_net(10, 1);
    CHECK_THROWS_AS(uniform_sample_quantile(net, keys, 1.5, 0.1), ParameterError);
  }
}

TEST_CASE("doubling protocol") {
  const std::uint32_t n = 64;
  auto keys = KeyTable(make_values(n, 3, Distribution::uniform)).initial_keys();
  for (std::uint64_t k : {0ull, 8ull}) {
    Network net = make_net(n, 3);
    const std::uint64_t np = 256;
    auto run = doubling_protocol(net, keys, np, k);
    CHECK(run.rounds == 9);
    CHECK(net.messages() == 9ull * n);
    for (NodeId v = 0; v < n; ++v) {
      const auto& b = run.buffers[v];
      CHECK(b.weighted_size() == np);
      if (k > 0) CHECK(b.size() <= k);
      CHECK(std::is_sorted(b.elements().begin(), b.elements().end()));
      CHECK(b == doubling_buffer(net, run.epoch, keys, np, k, v));
    }
  }
  Network failing = make_net(n, 3, FailureModel::uniform(0.1));
  CHECK_THROWS_AS(doubling_protocol(failing, keys, 256, 8), ParameterError);
  Network net = make_net(n, 3);
  CHECK_THROWS_AS(doubling_protocol(net, keys, 100, 8), ParameterError);
  CHECK_THROWS_AS(doubling_protocol(net, keys, 256, 6), ParameterError);
}

TEST_CASE("compacted doubling estimates quantiles") {
  ExperimentConfig cfg;
  cfg.command = "sketch";
  cfg.sketch_mode = "compact";
  cfg.n = {100000};
  cfg.phi = {0.5};
  cfg.eps = 0.1;
  cfg.trials = 20;
  auto rows = run_experiment(cfg);
  REQUIRE(rows.size() == 20);
  int ok = 0;
  for (const auto& r : rows) ok += r.success;
  CHECK(ok >= 19);
}
