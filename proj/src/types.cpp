#include <algorithm>
#include <cmath>
#include <numeric>

#include "gossipq/rng.hpp"
#include "gossipq/types.hpp"

namespace gossipq {

KeyTable::KeyTable(std::span<const double> values) {
  if (values.empty()) throw ParameterError("need at least one node");
  if (values.size() > kMaxNodes) throw ParameterError("too many nodes");
  for (double x : values)
    if (std::isnan(x)) throw ParameterError("node values must not be NaN");

  const auto n = static_cast<std::uint32_t>(values.size());
  origin_node_.resize(n);
  std::iota(origin_node_.begin(), origin_node_.end(), NodeId{0});
  std::stable_sort(origin_node_.begin(), origin_node_.end(),
                   [&](NodeId a, NodeId b) { return values[a] < values[b]; });

  sorted_values_.resize(n);
  keys_.resize(n);
  for (std::uint32_t r = 0; r < n; ++r) {
    sorted_values_[r] = values[origin_node_[r]];
    keys_[origin_node_[r]] = make_key(r, 0);
  }
}

ValueKey KeyTable::decode(Key k) const {
  if (k == kInfKey) return ValueKey::infinity();
  if (!is_real(k)) throw std::out_of_range("not a value key");
  std::uint32_t r = origin_of(k);
  if (r >= sorted_values_.size()) throw std::out_of_range("unknown origin rank");
  return {sorted_values_[r], (static_cast<std::uint64_t>(origin_node_[r]) << 32) | path_of(k)};
}

std::uint64_t target_rank(double phi, std::uint64_t n) {
  if (!(phi >= 0.0 && phi <= 1.0)) throw ParameterError("phi must lie in [0, 1]");
  if (n == 0) throw ParameterError("n must be positive");
  double k = std::ceil(phi * static_cast<double>(n) - 1e-9);
  return std::clamp<std::uint64_t>(k < 1.0 ? 1 : static_cast<std::uint64_t>(k), 1, n);
}

namespace rng {

std::uint64_t probability_threshold(double p) noexcept {
  if (!(p > 0.0)) return 0;
  if (p >= 1.0) return ~std::uint64_t{0};
  return static_cast<std::uint64_t>(std::ldexp(p, 64));
}

}  // namespace rng
}  // namespace gossipq
