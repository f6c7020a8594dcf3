#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gossipq/exact.hpp"
#include "gossipq/sim.hpp"
#include "gossipq/tournament.hpp"

namespace gossipq {

enum class Distribution { permutation, uniform, duplicates };

Distribution parse_distribution(const std::string& name);
std::string distribution_name(Distribution d);

/// Deterministic node values for a trial seed.
std::vector<double> make_values(std::uint32_t n, std::uint64_t seed, Distribution d);

struct ExperimentConfig {
  std::string command = "approx";
  std::vector<std::uint32_t> n{100000};
  std::vector<double> phi{0.5};
  double eps = 0.05;
  double mu = 0.0;
  bool scheduled_failures = false;
  int trials = 1;
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> seeds;  // overrides seed and trials when non-empty
  Distribution distribution = Distribution::permutation;

  int K = 30;
  double phase2_divisor = 4.0;
  int t_extra = 10;
  bool robust = false;
  double exact_eps = 0.0;
  int max_iterations = 25;
  double push_sum_c = 2.0;
  std::uint64_t push_sum_margin = 30;
  double spread_c = 4.0;
  double token_c = 2.0;
  double sample_c = 8.0;
  std::string sketch_mode = "sample";  // sample | compact
  std::uint64_t max_rounds = std::uint64_t{1} << 24;
  double min_success = -1.0;  // -1: command default

  std::string csv_path;
  std::string json_path;

  void validate() const;
  double required_success() const;
  std::vector<std::uint64_t> trial_seeds() const;
};

struct TrialRow {
  std::string experiment;
  std::uint32_t n = 0;
  double phi = 0.0;
  double eps = 0.0;
  double mu = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t rounds = 0;
  std::uint64_t messages = 0;
  std::uint64_t max_rank_error = 0;
  bool success = false;
  std::string error;  // set when the trial aborted
};

/// Runs `count` jobs on up to GOSSIPQ_THREADS threads; results keep job order.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& job);
unsigned trial_threads();

/// One trial of the configured command for the given n, phi and seed.
TrialRow run_trial(const ExperimentConfig& cfg, std::uint32_t n, double phi, std::uint64_t seed);
/// Every (n, phi, seed) combination; seeds are `seeds` or seed, seed + 1, ...
std::vector<TrialRow> run_experiment(const ExperimentConfig& cfg);

struct SelfQuantileResult {
  std::vector<double> estimate;  // per node
  std::uint64_t rounds = 0;
  std::uint64_t messages = 0;
  double max_error = 0.0;  // vs the fraction of values strictly below x_v
};

/// ceil(1/eps) - 1 approximate quantile runs at phi_j = j eps with accuracy
/// eps / 2; node v estimates eps * |{j : output_j < x_v}|.
SelfQuantileResult self_quantile(Network& net, std::span<const Key> initial, double eps, int K = 30);

struct SpreadResult {
  std::uint64_t initially_good = 0;
  std::uint64_t rounds = 0;  // first round with no bad node
  bool finished = false;
};

/// Push-pull information spread from the first 2 floor(2 eps n) nodes.
SpreadResult spread_experiment(Network& net, double eps);

/// Least-squares slope through the origin of rounds vs log2 log2 n + log2(1/eps).
double fit_round_constant(const std::vector<TrialRow>& rows);

std::string csv_header();
std::string csv_row(const TrialRow& row);
void write_csv(std::ostream& out, const std::vector<TrialRow>& rows);
/// JSON summary: config echo, aggregates and fitted constants.
std::string summary_json(const ExperimentConfig& cfg, const std::vector<TrialRow>& rows);
bool passed(const ExperimentConfig& cfg, const std::vector<TrialRow>& rows);

}  // namespace gossipq
