#include "gossipq/analysis.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "gossipq/types.hpp"

namespace gossipq::analysis {

Phase1Schedule two_tournament_schedule(double phi, double eps) {
  if (!(phi >= 0.0 && phi <= 1.0)) throw ParameterError("phi must lie in [0, 1]");
  if (!(eps > 0.0 && eps <= 0.125)) throw ParameterError("eps must lie in (0, 1/8]");

  Phase1Schedule s;
  s.phi = phi;
  s.eps = eps;
  s.threshold = 0.5 - eps;
  double h0 = 1.0 - (phi + eps);
  double l0 = phi - eps;
  s.direction = h0 >= l0 ? Direction::shrink_high : Direction::shrink_low;
  s.h.push_back(s.direction == Direction::shrink_high ? h0 : l0);

  while (s.h.back() > s.threshold) {
    if (s.t >= kMaxScheduleLength) throw ParameterError("phase 1 schedule does not terminate");
    double h = s.h.back();
    double next = square_step(h);
    s.delta.push_back(std::min(1.0, (h - s.threshold) / (h - next)));
    s.h.push_back(next);
    ++s.t;
  }
  return s;
}

Phase2Schedule three_tournament_schedule(double eps, std::uint64_t n, int K) {
  if (!(eps > 0.0 && eps < 0.5)) throw ParameterError("eps must lie in (0, 1/2)");
  if (n < 2) throw ParameterError("n must be at least 2");
  if (K < 1) throw ParameterError("K must be positive");

  Phase2Schedule s;
  s.eps = eps;
  s.n = n;
  s.K = K % 2 == 0 ? K + 1 : K;
  s.threshold = std::cbrt(1.0 / static_cast<double>(n));
  s.l.push_back(0.5 - eps);
  while (s.l.back() > s.threshold) {
    if (s.t >= kMaxScheduleLength) throw ParameterError("phase 2 schedule does not terminate");
    s.l.push_back(median3_step(s.l.back()));
    ++s.t;
  }
  return s;
}

bool is_power_of_two(std::uint64_t x) { return std::has_single_bit(x); }

std::uint64_t next_power_of_two(std::uint64_t x) { return x <= 1 ? 1 : std::bit_ceil(x); }

int log2_exact(std::uint64_t x) {
  if (!is_power_of_two(x)) throw ParameterError("expected a power of two");
  return std::countr_zero(x);
}

std::uint64_t compaction_error_bound(std::uint64_t n_prime, std::uint64_t k) {
  if (!is_power_of_two(n_prime) || !is_power_of_two(k))
    throw ParameterError("n' and k must be powers of two");
  if (n_prime < k) throw ParameterError("n' must be at least k");
  std::uint64_t ratio = n_prime / k;
  return ratio / 2 * static_cast<std::uint64_t>(log2_exact(ratio));
}

std::uint64_t choose_buffer_size(double eps, std::uint64_t n, double c) {
  if (!(eps > 0.0 && eps <= 1.0)) throw ParameterError("eps must lie in (0, 1]");
  if (n < 4) throw ParameterError("n must be at least 4");
  double target =
      c / eps * (std::log2(std::log2(static_cast<double>(n))) + std::log2(1.0 / eps));
  std::uint64_t k = 2;
  while (static_cast<double>(k) < target) k *= 2;
  return k;
}

double shift_bound(double eps) { return std::log(4.0 / eps) / std::log(1.75) + 2.0; }

double tournament_bound(double eps, std::uint64_t n) {
  double log4n = std::log(static_cast<double>(n)) / std::log(4.0);
  return std::log(1.0 / (4.0 * eps)) / std::log(11.0 / 8.0) + std::log2(log4n);
}

int tournament_iteration_bound(double eps, std::uint64_t n) {
  double log4n = std::log(static_cast<double>(n)) / std::log(4.0);
  double i0 = std::max(0.0, std::ceil(std::log(1.0 / (4.0 * eps)) / std::log(11.0 / 8.0)));
  double i1 = std::max(0.0, std::ceil(std::log2(log4n)));
  return static_cast<int>(i0 + i1);
}

std::uint64_t compute_m(std::uint64_t n, std::uint64_t valued, double exponent) {
  if (valued == 0) throw ParameterError("valued count must be positive");
  double ratio = std::pow(static_cast<double>(n), exponent) / 2.0 / static_cast<double>(valued);
  std::uint64_t m = 1;
  while (static_cast<double>(m) <= ratio) m *= 2;
  return m;
}

std::uint32_t robust_batch_size(double mu) {
  if (!(mu >= 0.0 && mu < 1.0)) throw ParameterError("mu must lie in [0, 1)");
  double q = 4.0 / (1.0 - mu);
  return static_cast<std::uint32_t>(std::ceil(q * std::log2(q))) + 1;
}

std::uint32_t robust_final_batch_size(double mu, int K) {
  if (!(mu >= 0.0 && mu < 1.0)) throw ParameterError("mu must lie in [0, 1)");
  double q = 1.0 / (1.0 - mu);
  return static_cast<std::uint32_t>(std::ceil(K * q * std::log2(4.0 * q))) + 1;
}

int spread_lower_bound(double eps) {
  return static_cast<int>(std::ceil(std::log(8.0 / eps) / std::log(4.0)));
}

}  // namespace gossipq::analysis
