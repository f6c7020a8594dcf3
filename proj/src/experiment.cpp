#include "gossipq/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "gossipq/analysis.hpp"
#include "gossipq/oracle.hpp"
#include "gossipq/sketch.hpp"

namespace gossipq {
namespace {

constexpr std::uint64_t kValueSalt = 0x7661'6c75'6573'0001ULL;
constexpr std::uint64_t kScheduleSalt = 0x7363'6865'6475'6c65ULL;

FailureModel failure_for(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.mu <= 0.0) return FailureModel::none();
  if (cfg.scheduled_failures) return FailureModel::scheduled(cfg.mu, seed ^ kScheduleSalt);
  return FailureModel::uniform(cfg.mu);
}

struct Stats {
  double mean = 0, min = 0, max = 0;
};

template <class F>
Stats stats_of(const std::vector<TrialRow>& rows, F f) {
  Stats s;
  if (rows.empty()) return s;
  s.min = s.max = f(rows[0]);
  for (const auto& r : rows) {
    double x = f(r);
    s.mean += x;
    s.min = std::min(s.min, x);
    s.max = std::max(s.max, x);
  }
  s.mean /= static_cast<double>(rows.size());
  return s;
}

nlohmann::ordered_json to_json(const Stats& s) {
  return {{"mean", s.mean}, {"min", s.min}, {"max", s.max}};
}

std::string format_double(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

void compact_sketch_trial(const ExperimentConfig& cfg, Network& net, std::span<const Key> keys,
                          TrialRow& row) {
  const std::uint32_t n = net.n();
  const double half = cfg.eps / 2.0;
  const auto n_prime =
      analysis::next_power_of_two(static_cast<std::uint64_t>(std::ceil(std::log(n) / (half * half))));
  const std::uint64_t k = analysis::choose_buffer_size(half, std::max<std::uint32_t>(n, 4));
  const std::uint64_t epoch = net.next_epoch();
  net.advance(static_cast<std::uint64_t>(analysis::log2_exact(n_prime)) + 1);

  RankOracle oracle(keys);
  std::vector<Key> probes;
  for (int q = 1; q <= 9; ++q) probes.push_back(oracle.at_rank(target_rank(q / 10.0, n)));
  const int observed = static_cast<int>(std::min<std::uint32_t>(n, 16));
  rng::Stream pick = rng::Stream::for_node(net.slot(Tag::generic, 0, 0), 0);
  double worst = 0.0;
  for (int i = 0; i < observed; ++i) {
    NodeId v = rng::uniform_peer(pick, n);
    CompactedBuffer b = doubling_buffer(net, epoch, keys, n_prime, k, v);
    for (Key z : probes) {
      double truth = static_cast<double>(oracle.rank_hi(z)) / n;
      worst = std::max(worst, std::abs(truth - b.quantile(z)));
    }
  }
  net.count_messages(static_cast<std::uint64_t>(n) * (static_cast<std::uint64_t>(analysis::log2_exact(n_prime)) + 1));
  row.max_rank_error = static_cast<std::uint64_t>(std::ceil(worst * n));
  row.success = worst <= cfg.eps;
}

}  // namespace

Distribution parse_distribution(const std::string& name) {
  if (name == "perm" || name == "permutation") return Distribution::permutation;
  if (name == "uniform") return Distribution::uniform;
  if (name == "dup" || name == "duplicates") return Distribution::duplicates;
  throw ParameterError("unknown value distribution: " + name);
}

std::string distribution_name(Distribution d) {
  switch (d) {
    case Distribution::permutation:
      return "perm";
    case Distribution::uniform:
      return "uniform";
    case Distribution::duplicates:
      return "dup";
  }
  return "perm";
}

std::vector<double> make_values(std::uint32_t n, std::uint64_t seed, Distribution d) {
  rng::Stream s = rng::Stream::for_node(rng::combine(seed, kValueSalt), 0);
  std::vector<double> xs(n);
  switch (d) {
    case Distribution::permutation:
      for (std::uint32_t i = 0; i < n; ++i) xs[i] = i + 1.0;
      // Fisher-Yates with our own draws keeps the order identical on every platform.
      for (std::uint32_t i = n; i > 1; --i) std::swap(xs[i - 1], xs[rng::bounded(s.next(), i)]);
      break;
    case Distribution::uniform:
      for (auto& x : xs) x = s.uniform01();
      break;
    case Distribution::duplicates: {
      const auto levels = static_cast<std::uint32_t>(std::max(2.0, std::ceil(std::sqrt(n))));
      for (auto& x : xs) x = rng::bounded(s.next(), levels);
      break;
    }
  }
  return xs;
}

void ExperimentConfig::validate() const {
  static const char* commands[] = {"approx", "exact", "robust", "sketch", "spread", "selfq"};
  if (std::find(std::begin(commands), std::end(commands), command) == std::end(commands))
    throw ParameterError("unknown command: " + command);
  if (n.empty() || phi.empty()) throw ParameterError("need at least one n and one phi");
  for (auto x : n)
    if (x < 1 || x > kMaxNodes) throw ParameterError("n out of range");
  for (auto p : phi)
    if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("phi must lie in [0, 1]");
  if (!(eps > 0.0 && eps < 0.125) && command != "exact" && command != "sketch")
    throw ParameterError("eps must lie in (0, 1/8)");
  if (!(eps > 0.0 && eps < 1.0)) throw ParameterError("eps must lie in (0, 1)");
  if (!(mu >= 0.0 && mu < 1.0)) throw ParameterError("mu must lie in [0, 1)");
  if (trials < 1 && seeds.empty()) throw ParameterError("trials must be positive");
  if (sketch_mode != "sample" && sketch_mode != "compact")
    throw ParameterError("sketch mode must be sample or compact");
}

double ExperimentConfig::required_success() const {
  if (min_success >= 0.0) return min_success;
  if (command == "exact" || command == "spread") return 1.0;
  if (command == "robust" || command == "selfq") return 0.95;
  return 0.99;
}

std::vector<std::uint64_t> ExperimentConfig::trial_seeds() const {
  if (!seeds.empty()) return seeds;
  std::vector<std::uint64_t> out;
  for (int t = 0; t < trials; ++t) out.push_back(seed + static_cast<std::uint64_t>(t));
  return out;
}

unsigned trial_threads() {
  if (const char* env = std::getenv("GOSSIPQ_THREADS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& job) {
  const unsigned threads = static_cast<unsigned>(std::min<std::size_t>(trial_threads(), count));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

TrialRow run_trial(const ExperimentConfig& cfg, std::uint32_t n, double phi, std::uint64_t seed) {
  TrialRow row;
  row.experiment = cfg.command;
  if (cfg.command == "sketch") row.experiment += "-" + cfg.sketch_mode;
  row.n = n;
  row.phi = phi;
  row.eps = cfg.eps;
  row.mu = cfg.mu;
  row.seed = seed;

  SimConfig sc;
  sc.n = n;
  sc.seed = seed;
  sc.failure = failure_for(cfg, seed);
  sc.max_rounds = cfg.max_rounds;
  Network net(sc);

  try {
    const auto values = make_values(n, seed, cfg.distribution);
    const KeyTable table(values);
    const auto& keys = table.initial_keys();

    if (cfg.command == "approx" || cfg.command == "robust") {
      TournamentParams tp;
      tp.phi = phi;
      tp.eps = cfg.eps;
      tp.K = cfg.K;
      tp.phase2_divisor = cfg.phase2_divisor;
      tp.robust = cfg.command == "robust" || cfg.robust;
      tp.t_extra = tp.robust ? cfg.t_extra : 0;
      tp.track_lmh = false;
      TrialReport rep = run_approx_trial(net, keys, tp);
      row.max_rank_error = rep.max_rank_error;
      row.success = rep.success;
    } else if (cfg.command == "exact") {
      ExactParams ep;
      ep.phi = phi;
      ep.eps = cfg.exact_eps;
      ep.max_iterations = cfg.max_iterations;
      ep.K = cfg.K;
      ep.push_sum.c = cfg.push_sum_c;
      ep.push_sum.margin = cfg.push_sum_margin;
      ep.spread_c = cfg.spread_c;
      ep.tokens.c = cfg.token_c;
      ep.robust = cfg.robust || cfg.mu > 0.0;
      ExactResult res = run_exact_trial(net, keys, ep);
      row.max_rank_error = res.report.max_rank_error;
      row.success = res.report.success;
    } else if (cfg.command == "sketch") {
      if (cfg.sketch_mode == "compact") {
        compact_sketch_trial(cfg, net, keys, row);
      } else {
        SampleParams sp;
        sp.c = cfg.sample_c;
        TrialReport rep = uniform_sample_quantile(net, keys, phi, cfg.eps, sp);
        score_outputs(rep, RankOracle(keys), phi, 2.0 * cfg.eps);
        row.max_rank_error = rep.max_rank_error;
        row.success = rep.success;
      }
    } else if (cfg.command == "spread") {
      SpreadResult sr = spread_experiment(net, cfg.eps);
      row.success = sr.finished && sr.rounds >= static_cast<std::uint64_t>(
                                                    analysis::spread_lower_bound(cfg.eps));
    } else if (cfg.command == "selfq") {
      SelfQuantileResult r = self_quantile(net, keys, cfg.eps, cfg.K);
      row.max_rank_error = static_cast<std::uint64_t>(std::ceil(r.max_error * n - 1e-9));
      row.success = r.max_error <= 2.0 * cfg.eps + 1e-12;
    }
  } catch (const TrialFailure& e) {
    row.error = e.what();
    row.success = false;
  } catch (const BudgetExceeded& e) {
    row.error = e.what();
    row.success = false;
  }
  row.rounds = net.rounds();
  row.messages = net.messages();
  return row;
}

std::vector<TrialRow> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  struct Job {
    std::uint32_t n;
    double phi;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  const auto seeds = cfg.trial_seeds();
  for (auto n : cfg.n)
    for (auto phi : cfg.phi)
      for (auto seed : seeds) jobs.push_back({n, phi, seed});
  std::vector<TrialRow> rows(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t i) {
    rows[i] = run_trial(cfg, jobs[i].n, jobs[i].phi, jobs[i].seed);
  });
  return rows;
}

SelfQuantileResult self_quantile(Network& net, std::span<const Key> initial, double eps, int K) {
  if (!(eps > 0.0 && eps < 0.125)) throw ParameterError("eps must lie in (0, 1/8)");
  const std::uint32_t n = net.n();
  if (initial.size() != n) throw ParameterError("need one key per node");
  const int J = static_cast<int>(std::ceil(1.0 / eps - 1e-9)) - 1;
  SelfQuantileResult r;
  const std::uint64_t rounds0 = net.rounds(), msgs0 = net.messages();
  std::vector<std::uint32_t> below(n, 0);
  TournamentParams tp;
  tp.eps = eps / 2.0;
  tp.K = K;
  tp.track_lmh = false;
  for (int j = 1; j <= J; ++j) {
    tp.phi = std::min(1.0, j * eps);
    TrialReport rep = approx_quantile(net, initial, tp);
    for (NodeId v = 0; v < n; ++v) below[v] += rep.outputs[v] != kNoKey && rep.outputs[v] < initial[v];
  }
  RankOracle oracle(initial);
  r.estimate.resize(n);
  for (NodeId v = 0; v < n; ++v) {
    r.estimate[v] = eps * below[v];
    double truth = static_cast<double>(oracle.count_below(initial[v])) / n;
    r.max_error = std::max(r.max_error, std::abs(r.estimate[v] - truth));
  }
  r.rounds = net.rounds() - rounds0;
  r.messages = net.messages() - msgs0;
  return r;
}

SpreadResult spread_experiment(Network& net, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw ParameterError("eps must lie in (0, 1)");
  const std::uint32_t n = net.n();
  SpreadResult r;
  r.initially_good = std::min<std::uint64_t>(
      n, 2 * static_cast<std::uint64_t>(std::floor(2.0 * eps * n)));
  std::vector<std::uint8_t> good(n, 0), prev(n), failed(n, 0);
  std::fill_n(good.begin(), r.initially_good, std::uint8_t{1});
  std::vector<std::uint32_t> pull(n), push(n);
  const auto& kt = kernels::active();
  net.next_epoch();
  std::uint64_t bad = n - r.initially_good;
  const bool failures = net.failures_active();
  while (bad > 0) {
    const std::uint64_t t = net.advance(1);
    prev = good;
    net.peers(net.slot(Tag::lower_bound, r.rounds, 0), 0, 0, n, pull.data());
    net.peers(net.slot(Tag::lower_bound, r.rounds, 1), 1, 0, n, push.data());
    if (failures) net.failures(t, 0, n, failed.data());
    std::uint64_t active = n;
    for (NodeId v = 0; v < n; ++v) {
      if (failed[v]) {
        --active;
        continue;
      }
      if (prev[pull[v]]) good[v] = 1;
      if (prev[v]) good[push[v]] = 1;
    }
    net.count_messages(2 * active);
    ++r.rounds;
    bad = n - kt.count_nonzero(good.data(), n);
  }
  r.finished = true;
  return r;
}

double fit_round_constant(const std::vector<TrialRow>& rows) {
  double sxy = 0.0, sxx = 0.0;
  for (const auto& r : rows) {
    if (r.n < 4) continue;
    double x = std::log2(std::log2(static_cast<double>(r.n))) + std::log2(1.0 / r.eps);
    sxy += x * static_cast<double>(r.rounds);
    sxx += x * x;
  }
  return sxx > 0.0 ? sxy / sxx : 0.0;
}

std::string csv_header() {
  return "experiment,n,phi,eps,mu,seed,rounds,messages,max_rank_error,success";
}

std::string csv_row(const TrialRow& r) {
  std::ostringstream os;
  os << r.experiment << ',' << r.n << ',' << format_double(r.phi) << ',' << format_double(r.eps)
     << ',' << format_double(r.mu) << ',' << r.seed << ',' << r.rounds << ',' << r.messages << ','
     << r.max_rank_error << ',' << (r.success ? 1 : 0);
  return os.str();
}

void write_csv(std::ostream& out, const std::vector<TrialRow>& rows) {
  out << csv_header() << '\n';
  for (const auto& r : rows) out << csv_row(r) << '\n';
}

bool passed(const ExperimentConfig& cfg, const std::vector<TrialRow>& rows) {
  if (rows.empty()) return false;
  auto ok = std::count_if(rows.begin(), rows.end(), [](const TrialRow& r) { return r.success; });
  return static_cast<double>(ok) >= cfg.required_success() * static_cast<double>(rows.size()) - 1e-9;
}

std::string summary_json(const ExperimentConfig& cfg, const std::vector<TrialRow>& rows) {
  nlohmann::ordered_json j;
  j["experiment"] = cfg.command;
  j["config"] = {{"n", cfg.n},
                 {"phi", cfg.phi},
                 {"eps", cfg.eps},
                 {"mu", cfg.mu},
                 {"scheduled_failures", cfg.scheduled_failures},
                 {"trials", cfg.trials},
                 {"seeds", cfg.trial_seeds()},
                 {"distribution", distribution_name(cfg.distribution)},
                 {"K", cfg.K},
                 {"phase2_divisor", cfg.phase2_divisor},
                 {"t_extra", cfg.t_extra},
                 {"robust", cfg.robust},
                 {"exact_eps", cfg.exact_eps},
                 {"max_iterations", cfg.max_iterations},
                 {"push_sum_c", cfg.push_sum_c},
                 {"push_sum_margin", cfg.push_sum_margin},
                 {"spread_c", cfg.spread_c},
                 {"token_c", cfg.token_c},
                 {"sample_c", cfg.sample_c},
                 {"sketch_mode", cfg.sketch_mode},
                 {"max_rounds", cfg.max_rounds},
                 {"threads", trial_threads()}};
  const auto successes =
      std::count_if(rows.begin(), rows.end(), [](const TrialRow& r) { return r.success; });
  const auto aborted =
      std::count_if(rows.begin(), rows.end(), [](const TrialRow& r) { return !r.error.empty(); });
  j["trials"] = rows.size();
  j["successes"] = successes;
  j["aborted"] = aborted;
  j["success_rate"] = rows.empty() ? 0.0 : static_cast<double>(successes) / rows.size();
  j["required_success_rate"] = cfg.required_success();
  j["rounds"] = to_json(stats_of(rows, [](const TrialRow& r) { return double(r.rounds); }));
  j["messages"] = to_json(stats_of(rows, [](const TrialRow& r) { return double(r.messages); }));
  j["max_rank_error"] =
      to_json(stats_of(rows, [](const TrialRow& r) { return double(r.max_rank_error); }));
  j["fitted_round_constant"] = fit_round_constant(rows);
  if (cfg.command == "spread") j["spread_lower_bound"] = analysis::spread_lower_bound(cfg.eps);
  j["passed"] = passed(cfg, rows);
  return j.dump(2);
}

}  // namespace gossipq
