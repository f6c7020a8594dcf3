#include <charconv>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gossipq/analysis.hpp"
#include "gossipq/experiment.hpp"
#include "gossipq/kernels.hpp"

namespace {

using gossipq::ExperimentConfig;
using nlohmann::json;

constexpr int kExitFailed = 1;
constexpr int kExitBadConfig = 2;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string shortest(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string format_list(const std::vector<double>& xs) {
  std::string s = "[";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) s += ", ";
    s += shortest(xs[i]);
  }
  return s + "]";
}

template <class T>
std::vector<T> as_list(const json& v) {
  if (v.is_array()) return v.get<std::vector<T>>();
  return {v.get<T>()};
}

void apply_json(ExperimentConfig& cfg, const json& j) {
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "command") cfg.command = v.get<std::string>();
    else if (key == "n") cfg.n = as_list<std::uint32_t>(v);
    else if (key == "phi") cfg.phi = as_list<double>(v);
    else if (key == "eps") cfg.eps = v.get<double>();
    else if (key == "mu") cfg.mu = v.get<double>();
    else if (key == "scheduled_failures") cfg.scheduled_failures = v.get<bool>();
    else if (key == "trials") cfg.trials = v.get<int>();
    else if (key == "seed") cfg.seed = v.get<std::uint64_t>();
    else if (key == "seeds") cfg.seeds = as_list<std::uint64_t>(v);
    else if (key == "distribution") cfg.distribution = gossipq::parse_distribution(v.get<std::string>());
    else if (key == "K") cfg.K = v.get<int>();
    else if (key == "phase2_divisor") cfg.phase2_divisor = v.get<double>();
    else if (key == "t_extra") cfg.t_extra = v.get<int>();
    else if (key == "robust") cfg.robust = v.get<bool>();
    else if (key == "exact_eps") cfg.exact_eps = v.get<double>();
    else if (key == "max_iterations") cfg.max_iterations = v.get<int>();
    else if (key == "push_sum_c") cfg.push_sum_c = v.get<double>();
    else if (key == "push_sum_margin") cfg.push_sum_margin = v.get<std::uint64_t>();
    else if (key == "spread_c") cfg.spread_c = v.get<double>();
    else if (key == "token_c") cfg.token_c = v.get<double>();
    else if (key == "sample_c") cfg.sample_c = v.get<double>();
    else if (key == "sketch_mode") cfg.sketch_mode = v.get<std::string>();
    else if (key == "max_rounds") cfg.max_rounds = v.get<std::uint64_t>();
    else if (key == "min_success") cfg.min_success = v.get<double>();
    else if (key == "csv") cfg.csv_path = v.get<std::string>();
    else if (key == "json") cfg.json_path = v.get<std::string>();
    else throw ConfigError("unknown config key: " + key);
  }
}

void load_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("bad config file " + path + ": " + e.what());
  }
  try {
    apply_json(cfg, j);
  } catch (const json::exception& e) {
    throw ConfigError("bad config file " + path + ": " + e.what());
  }
}

// Flag values as parsed; only options the user actually gave are applied.
struct Flags {
  std::string config;
  std::vector<std::uint32_t> n;
  std::vector<double> phi;
  double eps = 0, mu = 0, phase2_divisor = 0, exact_eps = 0, push_sum_c = 0, spread_c = 0,
         token_c = 0, sample_c = 0, min_success = 0;
  bool scheduled = false, robust = false;
  int trials = 0, K = 0, t_extra = 0, max_iterations = 0;
  std::uint64_t seed = 0, push_sum_margin = 0, max_rounds = 0;
  std::vector<std::uint64_t> seeds;
  std::string dist, mode, csv, json_path;
};

struct Registered {
  CLI::App* app;
  std::vector<std::pair<CLI::Option*, std::function<void(ExperimentConfig&)>>> options;

  template <class T>
  void add(const std::string& name, T& target, const std::string& help,
           std::function<void(ExperimentConfig&)> apply) {
    options.emplace_back(app->add_option(name, target, help), std::move(apply));
  }
  void flag(const std::string& name, bool& target, const std::string& help,
            std::function<void(ExperimentConfig&)> apply) {
    options.emplace_back(app->add_flag(name, target, help), std::move(apply));
  }
  void apply(ExperimentConfig& cfg) const {
    for (const auto& [opt, fn] : options)
      if (opt->count() > 0) fn(cfg);
  }
};

Registered register_run_options(CLI::App* sub, Flags& f) {
  Registered r{sub, {}};
  sub->add_option("--config", f.config, "JSON config file; flags override its values");
  r.add("--n", f.n, "network sizes", [&](auto& c) { c.n = f.n; });
  r.add("--phi", f.phi, "target quantiles", [&](auto& c) { c.phi = f.phi; });
  r.add("--eps", f.eps, "accuracy", [&](auto& c) { c.eps = f.eps; });
  r.add("--mu", f.mu, "per-round failure probability", [&](auto& c) { c.mu = f.mu; });
  r.flag("--scheduled-failures", f.scheduled, "per-node failure probabilities up to mu",
         [&](auto& c) { c.scheduled_failures = f.scheduled; });
  r.add("--trials", f.trials, "trials per (n, phi)", [&](auto& c) { c.trials = f.trials; });
  r.add("--seed", f.seed, "first seed", [&](auto& c) { c.seed = f.seed; });
  r.add("--seeds", f.seeds, "explicit seed list", [&](auto& c) { c.seeds = f.seeds; });
  r.add("--dist", f.dist, "value distribution: perm, uniform or dup",
        [&](auto& c) { c.distribution = gossipq::parse_distribution(f.dist); });
  r.add("--K", f.K, "samples in the final median step", [&](auto& c) { c.K = f.K; });
  r.add("--phase2-divisor", f.phase2_divisor, "phase II accuracy is eps divided by this",
        [&](auto& c) { c.phase2_divisor = f.phase2_divisor; });
  r.add("--t-extra", f.t_extra, "extra spreading rounds after robust runs",
        [&](auto& c) { c.t_extra = f.t_extra; });
  r.flag("--robust", f.robust, "use the failure-tolerant variant", [&](auto& c) { c.robust = f.robust; });
  r.add("--exact-eps", f.exact_eps, "exact algorithm window (0: default)",
        [&](auto& c) { c.exact_eps = f.exact_eps; });
  r.add("--max-iterations", f.max_iterations, "exact algorithm iteration cap",
        [&](auto& c) { c.max_iterations = f.max_iterations; });
  r.add("--push-sum-c", f.push_sum_c, "push-sum round constant", [&](auto& c) { c.push_sum_c = f.push_sum_c; });
  r.add("--push-sum-margin", f.push_sum_margin, "push-sum extra rounds",
        [&](auto& c) { c.push_sum_margin = f.push_sum_margin; });
  r.add("--spread-c", f.spread_c, "min/max spreading round constant", [&](auto& c) { c.spread_c = f.spread_c; });
  r.add("--token-c", f.token_c, "token distribution round constant", [&](auto& c) { c.token_c = f.token_c; });
  r.add("--sample-c", f.sample_c, "sample size constant", [&](auto& c) { c.sample_c = f.sample_c; });
  r.add("--mode", f.mode, "sketch mode: sample or compact", [&](auto& c) { c.sketch_mode = f.mode; });
  r.add("--max-rounds", f.max_rounds, "round budget per trial", [&](auto& c) { c.max_rounds = f.max_rounds; });
  r.add("--min-success", f.min_success, "required success rate (default per command)",
        [&](auto& c) { c.min_success = f.min_success; });
  r.add("--csv", f.csv, "CSV output path (default: standard output)", [&](auto& c) { c.csv_path = f.csv; });
  r.add("--json", f.json_path, "JSON summary path (default: standard error)",
        [&](auto& c) { c.json_path = f.json_path; });
  return r;
}

std::unique_ptr<std::ofstream> open_output(const std::string& path) {
  if (path.empty()) return nullptr;
  auto out = std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::trunc);
  if (!*out) throw ConfigError("cannot write " + path);
  return out;
}

int run_experiment_command(const std::string& command, const Flags& flags, const Registered& reg) {
  ExperimentConfig cfg;
  if (!flags.config.empty()) load_config_file(cfg, flags.config);
  reg.apply(cfg);
  cfg.command = command;
  cfg.validate();

  auto csv = open_output(cfg.csv_path);
  auto js = open_output(cfg.json_path);
  const auto rows = gossipq::run_experiment(cfg);

  std::ostream& csv_out = csv ? *csv : std::cout;
  gossipq::write_csv(csv_out, rows);
  std::ostream& json_out = js ? *js : std::cerr;
  json_out << gossipq::summary_json(cfg, rows) << '\n';
  if ((csv && !*csv) || (js && !*js)) throw ConfigError("failed writing output");

  for (const auto& r : rows)
    if (!r.error.empty()) std::cerr << "seed " << r.seed << ": " << r.error << '\n';
  if (!gossipq::passed(cfg, rows)) {
    std::cerr << "assertion failed: success rate below " << cfg.required_success() << '\n';
    return kExitFailed;
  }
  return 0;
}

int run_schedule(double phi, double eps, std::optional<std::uint64_t> n, int K) {
  auto s = gossipq::analysis::two_tournament_schedule(phi, eps);
  std::cout << "direction = "
            << (s.direction == gossipq::analysis::Direction::shrink_high ? "high" : "low") << '\n'
            << "T = " << shortest(s.threshold) << '\n'
            << "h = " << format_list(s.h) << '\n'
            << "delta = " << format_list(s.delta) << '\n'
            << "t = " << s.t << '\n';
  if (n) {
    auto p2 = gossipq::analysis::three_tournament_schedule(eps, *n, K);
    std::cout << "phase2.T = " << shortest(p2.threshold) << '\n'
              << "phase2.l = " << format_list(p2.l) << '\n'
              << "phase2.t = " << p2.t << '\n'
              << "phase2.K = " << p2.K << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gossip quantile simulator"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"approx", "approximate quantile by tournaments"},
      {"exact", "exact quantile"},
      {"robust", "approximate quantile under random node failures"},
      {"sketch", "sampling and compaction baselines"},
      {"spread", "information spread from a small informed set"},
      {"selfq", "every node estimates the quantile of its own value"}};
  std::vector<std::unique_ptr<Flags>> flags;
  std::vector<Registered> regs;
  std::vector<CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    flags.push_back(std::make_unique<Flags>());
    subs.push_back(app.add_subcommand(name, help));
    regs.push_back(register_run_options(subs.back(), *flags.back()));
  }

  double sched_phi = 0.5, sched_eps = 0.05;
  std::uint64_t sched_n = 0;
  int sched_K = 30;
  CLI::App* schedule = app.add_subcommand("schedule", "print the tournament schedules");
  schedule->add_option("--phi", sched_phi, "target quantile");
  schedule->add_option("--eps", sched_eps, "accuracy");
  CLI::Option* n_opt = schedule->add_option("--n", sched_n, "network size (adds phase II)");
  schedule->add_option("--K", sched_K, "final median samples");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitBadConfig;
  }

  try {
    std::cerr << "kernels: " << gossipq::kernels::backend_name(gossipq::kernels::active().backend)
              << '\n';
    if (schedule->parsed())
      return run_schedule(sched_phi, sched_eps,
                          n_opt->count() ? std::optional<std::uint64_t>(sched_n) : std::nullopt, sched_K);
    for (std::size_t i = 0; i < subs.size(); ++i)
      if (subs[i]->parsed()) return run_experiment_command(commands[i].first, *flags[i], regs[i]);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBadConfig;
  } catch (const gossipq::ParameterError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBadConfig;
  }
  return kExitBadConfig;
}
