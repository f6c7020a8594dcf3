#pragma once

#include <cstdint>
#include <vector>

// Closed-form recurrences and bounds. Pure functions; the protocols take
// their schedules from here and the tests use the bounds as oracles.

namespace gossipq::analysis {

enum class Direction { shrink_high, shrink_low };

inline constexpr int kMaxScheduleLength = 200;

struct Phase1Schedule {
  double phi = 0.0;
  double eps = 0.0;
  Direction direction = Direction::shrink_high;
  double threshold = 0.0;   // T = 1/2 - eps
  std::vector<double> h;    // h[0..t]; l-sequence when shrinking low
  std::vector<double> delta;  // delta[0..t-1]
  int t = 0;
};

struct Phase2Schedule {
  double eps = 0.0;
  std::uint64_t n = 0;
  std::vector<double> l;  // l[0..t]
  int t = 0;
  double threshold = 0.0;  // n^(-1/3)
  int K = 31;
};

/// Throws ParameterError unless 0 <= phi <= 1 and 0 < eps <= 1/8.
Phase1Schedule two_tournament_schedule(double phi, double eps);

/// Throws ParameterError unless 0 < eps < 1/2 and n >= 2. K is rounded up to odd.
Phase2Schedule three_tournament_schedule(double eps, std::uint64_t n, int K = 30);

inline double square_step(double h) { return h * h; }
inline double median3_step(double p) { return 3 * p * p - 2 * p * p * p; }

/// (n'/2k) * log2(n'/k); both arguments powers of two with n' >= k >= 1.
std::uint64_t compaction_error_bound(std::uint64_t n_prime, std::uint64_t k);

/// Smallest power of two >= c (1/eps)(log2 log2 n + log2(1/eps)), at least 2.
std::uint64_t choose_buffer_size(double eps, std::uint64_t n, double c = 4.0);

/// log_{7/4}(4/eps) + 2
double shift_bound(double eps);
/// log_{11/8}(1/(4 eps)) + log2(log4 n)
double tournament_bound(double eps, std::uint64_t n);
/// ceil(log_{11/8}(1/(4 eps))) + ceil(log2(log4 n)): the same bound with each
/// stage counted in whole iterations.
int tournament_iteration_bound(double eps, std::uint64_t n);

/// Smallest power of two strictly greater than (n^0.99 / 2) / valued, at least 1.
std::uint64_t compute_m(std::uint64_t n, std::uint64_t valued, double exponent = 0.99);

/// ceil((4/(1-mu)) log2(4/(1-mu))) + 1
std::uint32_t robust_batch_size(double mu);
/// ceil((K/(1-mu)) log2(4/(1-mu))) + 1
std::uint32_t robust_final_batch_size(double mu, int K);

/// ceil(log4(8/eps)): the fewest rounds in which 4 eps n informed nodes can
/// reach everyone when each round at most quadruples them.
int spread_lower_bound(double eps);

bool is_power_of_two(std::uint64_t x);
std::uint64_t next_power_of_two(std::uint64_t x);
int log2_exact(std::uint64_t x);

}  // namespace gossipq::analysis
