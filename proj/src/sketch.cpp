#include "gossipq/sketch.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "gossipq/analysis.hpp"

namespace gossipq {
namespace {

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t x) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
}

std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t& pos) {
  if (pos + 8 > in.size()) throw std::invalid_argument("truncated buffer encoding");
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(in[pos + i]) << (8 * i);
  pos += 8;
  return x;
}

void check_capacity(std::uint64_t k) {
  if (k != 0 && !analysis::is_power_of_two(k))
    throw ParameterError("buffer capacity must be a power of two");
}

// Leaves are merged pairwise level by level; returns the root.
CompactedBuffer merge_tree(std::span<const Key> data, std::uint64_t k) {
  std::vector<CompactedBuffer> level;
  level.reserve(data.size());
  for (Key x : data) level.push_back(CompactedBuffer::singleton(x, k));
  while (level.size() > 1) {
    std::vector<CompactedBuffer> up;
    up.reserve(level.size() / 2);
    for (std::size_t i = 0; i + 1 < level.size(); i += 2)
      up.push_back(doubling_update(level[i], level[i + 1]));
    level.swap(up);
  }
  return level.front();
}

int doubling_rounds(std::uint64_t n_prime) {
  if (!analysis::is_power_of_two(n_prime)) throw ParameterError("n' must be a power of two");
  return analysis::log2_exact(n_prime);
}

}  // namespace

CompactedBuffer::CompactedBuffer(std::uint64_t capacity) : capacity_(capacity) {
  check_capacity(capacity);
}

CompactedBuffer CompactedBuffer::singleton(Key key, std::uint64_t capacity) {
  CompactedBuffer b(capacity);
  b.elements_.push_back(key);
  return b;
}

CompactedBuffer::CompactedBuffer(std::vector<Key> sorted, std::uint64_t weight,
                                 std::uint64_t capacity)
    : elements_(std::move(sorted)), weight_(weight), capacity_(capacity) {
  check_capacity(capacity);
  if (!analysis::is_power_of_two(weight)) throw ParameterError("weight must be a power of two");
  if (!std::is_sorted(elements_.begin(), elements_.end()))
    throw ParameterError("buffer elements must be sorted");
}

std::uint64_t CompactedBuffer::rank(Key z) const {
  if (elements_.empty()) throw std::logic_error("rank query on an empty buffer");
  auto it = std::upper_bound(elements_.begin(), elements_.end(), z);
  return weight_ * static_cast<std::uint64_t>(it - elements_.begin());
}

double CompactedBuffer::quantile(Key z) const {
  return static_cast<double>(rank(z)) / static_cast<double>(weighted_size());
}

std::vector<std::uint8_t> CompactedBuffer::serialize() const {
  std::vector<std::uint8_t> out;
  out.reserve(8 * (elements_.size() + 3));
  put_u64(out, elements_.size());
  for (Key k : elements_) put_u64(out, k);
  put_u64(out, weight_);
  put_u64(out, capacity_);
  return out;
}

CompactedBuffer CompactedBuffer::deserialize(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  std::uint64_t count = get_u64(bytes, pos);
  if (count > bytes.size() / 8) throw std::invalid_argument("bad element count");
  std::vector<Key> keys(count);
  for (auto& k : keys) k = get_u64(bytes, pos);
  std::uint64_t weight = get_u64(bytes, pos);
  std::uint64_t capacity = get_u64(bytes, pos);
  if (pos != bytes.size()) throw std::invalid_argument("trailing bytes in buffer encoding");
  return CompactedBuffer(std::move(keys), weight, capacity);
}

std::vector<Key> compact(std::vector<Key> elements, std::uint64_t k) {
  std::sort(elements.begin(), elements.end());
  if (k == 0 || elements.size() <= k) return elements;
  if (elements.size() > 2 * k) throw ParameterError("compaction input exceeds 2k elements");
  std::vector<Key> out;
  out.reserve(elements.size() / 2);
  for (std::size_t i = 1; i < elements.size(); i += 2) out.push_back(elements[i]);
  return out;
}

CompactedBuffer doubling_update(const CompactedBuffer& a, const CompactedBuffer& b) {
  if (a.weight() != b.weight()) throw std::logic_error("merging buffers of different weight");
  if (a.capacity() != b.capacity()) throw ParameterError("merging buffers of different capacity");
  std::vector<Key> merged;
  merged.reserve(a.size() + b.size());
  std::merge(a.elements().begin(), a.elements().end(), b.elements().begin(), b.elements().end(),
             std::back_inserter(merged));
  const std::uint64_t k = a.capacity();
  if (k == 0 || merged.size() <= k) return CompactedBuffer(std::move(merged), a.weight(), k);
  return CompactedBuffer(compact(std::move(merged), k), 2 * a.weight(), k);
}

std::uint64_t compaction_error_check(std::span<const Key> data, std::uint64_t k) {
  if (!analysis::is_power_of_two(data.size()) || !analysis::is_power_of_two(k))
    throw ParameterError("n' and k must be powers of two");
  const CompactedBuffer full = merge_tree(data, 0);
  const CompactedBuffer small = merge_tree(data, k);
  const auto& s = full.elements();
  const auto& c = small.elements();
  std::uint64_t worst = 0;
  std::size_t j = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i + 1 < s.size() && s[i + 1] == s[i]) continue;
    while (j < c.size() && c[j] <= s[i]) ++j;
    const auto exact = static_cast<std::int64_t>(i + 1);
    const auto approx = static_cast<std::int64_t>(small.weight() * j);
    worst = std::max<std::uint64_t>(worst, static_cast<std::uint64_t>(std::abs(exact - approx)));
  }
  return worst;
}

std::uint64_t sample_size(std::uint32_t n, double eps, double c) {
  if (!(eps > 0.0 && eps < 1.0)) throw ParameterError("eps must lie in (0, 1)");
  double s = std::ceil(c * std::log(std::max<double>(n, 2.0)) / (eps * eps));
  return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(s));
}

TrialReport uniform_sample_quantile(Network& net, std::span<const Key> initial, double phi,
                                    double eps, const SampleParams& params) {
  if (!(phi >= 0.0 && phi <= 1.0)) throw ParameterError("phi must lie in [0, 1]");
  const std::uint32_t n = net.n();
  if (initial.size() != n) throw ParameterError("need one key per node");
  TrialReport report;
  const std::uint64_t rounds0 = net.rounds(), msgs0 = net.messages();
  report.outputs.assign(n, kNoKey);

  if (params.exhaustive) {
    std::vector<Key> all(initial.begin(), initial.end());
    const std::uint64_t pos = target_rank(phi, n) - 1;
    std::nth_element(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(pos), all.end());
    net.advance(n);
    net.count_messages(static_cast<std::uint64_t>(n) * n);
    std::fill(report.outputs.begin(), report.outputs.end(), all[pos]);
    report.rounds = net.rounds() - rounds0;
    report.messages = net.messages() - msgs0;
    return report;
  }

  const std::uint64_t s = sample_size(n, eps, params.c);
  net.next_epoch();
  const std::uint64_t first = net.advance(s);
  constexpr std::size_t B = 256;
  std::vector<Key> buf(s * B);
  std::vector<std::uint32_t> peers(B);
  std::vector<std::uint8_t> fail(B);
  std::vector<Key> xs;
  xs.reserve(s);
  const bool failures = net.failures_active();
  std::uint64_t msgs = 0;
  for (NodeId lo = 0; lo < n; lo += B) {
    const std::size_t c = std::min<std::size_t>(B, n - lo);
    std::vector<std::uint32_t> got(c, 0);
    for (std::uint64_t j = 0; j < s; ++j) {
      net.peers(net.slot(Tag::sample, j, 0), static_cast<unsigned>(j), lo, c, peers.data());
      if (failures) net.failures(first + j, lo, c, fail.data());
      for (std::size_t i = 0; i < c; ++i) {
        if (failures && fail[i]) continue;
        buf[i * s + got[i]++] = initial[peers[i]];
      }
    }
    for (std::size_t i = 0; i < c; ++i) {
      if (got[i] == 0) continue;
      msgs += got[i];
      xs.assign(buf.begin() + static_cast<std::ptrdiff_t>(i * s),
                buf.begin() + static_cast<std::ptrdiff_t>(i * s + got[i]));
      const std::uint64_t pos = target_rank(phi, got[i]) - 1;
      std::nth_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(pos), xs.end());
      report.outputs[lo + i] = xs[pos];
    }
  }
  net.count_messages(msgs);
  report.rounds = net.rounds() - rounds0;
  report.messages = net.messages() - msgs0;
  return report;
}

DoublingRun doubling_protocol(Network& net, std::span<const Key> initial, std::uint64_t n_prime,
                              std::uint64_t k) {
  const std::uint32_t n = net.n();
  if (initial.size() != n) throw ParameterError("need one key per node");
  if (net.failures_active()) throw ParameterError("the doubling protocol assumes no failures");
  check_capacity(k);
  const int T = doubling_rounds(n_prime);

  DoublingRun run;
  run.epoch = net.next_epoch();
  const std::uint64_t rounds0 = net.rounds();
  std::vector<std::uint32_t> peers(n);
  net.advance(1);
  net.peers(net.slot(Tag::doubling, 0, 0), 0, 0, n, peers.data());
  run.buffers.reserve(n);
  for (NodeId v = 0; v < n; ++v) run.buffers.push_back(CompactedBuffer::singleton(initial[peers[v]], k));
  net.count_messages(n);

  for (int i = 1; i <= T; ++i) {
    net.advance(1);
    net.peers(net.slot(Tag::doubling, static_cast<std::uint64_t>(i), 0), 0, 0, n, peers.data());
    std::vector<CompactedBuffer> next;
    next.reserve(n);
    for (NodeId v = 0; v < n; ++v) next.push_back(doubling_update(run.buffers[v], run.buffers[peers[v]]));
    run.buffers.swap(next);
    net.count_messages(n);
  }
  run.rounds = net.rounds() - rounds0;
  return run;
}

CompactedBuffer doubling_buffer(const Network& net, std::uint64_t epoch,
                                std::span<const Key> initial, std::uint64_t n_prime,
                                std::uint64_t k, NodeId v) {
  check_capacity(k);
  const int T = doubling_rounds(n_prime);
  std::vector<std::uint64_t> bases(static_cast<std::size_t>(T) + 1);
  for (int i = 0; i <= T; ++i)
    bases[static_cast<std::size_t>(i)] = net.slot_at(epoch, Tag::doubling, static_cast<std::uint64_t>(i), 0);
  std::function<CompactedBuffer(NodeId, int)> eval = [&](NodeId u, int i) -> CompactedBuffer {
    NodeId t = net.peer(bases[static_cast<std::size_t>(i)], 0, u);
    if (i == 0) return CompactedBuffer::singleton(initial[t], k);
    return doubling_update(eval(u, i - 1), eval(t, i - 1));
  };
  return eval(v, T);
}

}  // namespace gossipq
