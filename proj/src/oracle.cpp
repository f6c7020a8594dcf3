#include "gossipq/oracle.hpp"

#include <algorithm>
#include <cmath>

namespace gossipq {

RankOracle::RankOracle(std::span<const Key> keys) : sorted_(keys.begin(), keys.end()) {
  if (sorted_.empty()) throw ParameterError("oracle needs at least one key");
  std::sort(sorted_.begin(), sorted_.end());
}

Key RankOracle::at_rank(std::uint64_t r) const {
  if (r < 1 || r > n()) throw std::out_of_range("rank out of range");
  return sorted_[r - 1];
}

std::uint64_t RankOracle::count_below(Key k) const {
  return static_cast<std::uint64_t>(std::lower_bound(sorted_.begin(), sorted_.end(), k) -
                                    sorted_.begin());
}

std::uint64_t RankOracle::count_at_most(Key k) const {
  return static_cast<std::uint64_t>(std::upper_bound(sorted_.begin(), sorted_.end(), k) -
                                    sorted_.begin());
}

RankOracle::Window RankOracle::window(double phi, double eps) const {
  const double nn = static_cast<double>(n());
  double lo = std::ceil((phi - eps) * nn - 1e-9);
  double hi = std::floor((phi + eps) * nn + 1e-9);
  Window w;
  w.lo = static_cast<std::uint64_t>(std::clamp(lo, 1.0, nn));
  w.hi = static_cast<std::uint64_t>(std::clamp(hi, 1.0, nn));
  if (w.lo > w.hi) w.lo = w.hi = target_rank(std::clamp(phi, 0.0, 1.0), n());
  w.lo_key = at_rank(w.lo);
  w.hi_key = at_rank(w.hi);
  return w;
}

bool RankOracle::in_window(Key k, const Window& w) const {
  if (k == kNoKey) return false;
  return k >= w.lo_key && k <= w.hi_key;
}

std::uint64_t RankOracle::rank_error(Key key, std::uint64_t k) const {
  std::uint64_t lo = rank_lo(key), hi = rank_hi(key);
  if (hi < lo) hi = lo;  // key absent from the multiset
  if (k < lo) return lo - k;
  if (k > hi) return k - hi;
  return 0;
}

LMH count_lmh(std::span<const Key> values, const RankOracle::Window& w) {
  const auto& kt = kernels::active();
  LMH r;
  r.low = kt.count_below(values.data(), values.size(), w.lo_key);
  std::uint64_t at_most_hi =
      w.hi_key >= kInfKey ? values.size() : kt.count_below(values.data(), values.size(), w.hi_key + 1);
  r.high = values.size() - at_most_hi;
  r.mid = values.size() - r.low - r.high;
  return r;
}

void score_outputs(TrialReport& report, const RankOracle& oracle, double phi, double eps,
                   std::uint64_t allowed_misses) {
  const auto w = oracle.window(phi, eps);
  const std::uint64_t k = target_rank(std::clamp(phi, 0.0, 1.0), oracle.n());
  report.max_rank_error = 0;
  report.nodes_without_correct = 0;
  for (Key out : report.outputs) {
    if (out == kNoKey) {
      ++report.nodes_without_correct;
      continue;
    }
    report.max_rank_error = std::max(report.max_rank_error, oracle.rank_error(out, k));
    if (!oracle.in_window(out, w)) ++report.nodes_without_correct;
  }
  report.success = report.nodes_without_correct <= allowed_misses;
}

}  // namespace gossipq
