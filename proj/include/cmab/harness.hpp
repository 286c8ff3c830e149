#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cmab/instance.hpp"
#include "cmab/metrics.hpp"
#include "cmab/mixcombkl.hpp"
#include "cmab/mixcombucb.hpp"
#include "cmab/rng.hpp"
#include "cmab/serialize.hpp"

namespace cmab {

inline constexpr const char* kVersion = "1.0.0";

struct RunError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Algo { kl, ucb };

inline const char* algo_name(Algo a) { return a == Algo::kl ? "kl" : "ucb"; }

struct FamilySpec {
  enum class Kind { uniform_matroid, restricted, file } kind =
      Kind::uniform_matroid;
  int d = 8;
  int m = 3;
  int d0 = 2;
  std::string path;
};

struct MeanSpec {
  enum class Kind { uniform, explicit_vec } kind = Kind::uniform;
  double lo = 0.1;
  double hi = 0.9;
  Eigen::VectorXd values;
};

struct ExperimentConfig {
  Algo algo = Algo::kl;
  FamilySpec family;
  long n = 1000;
  std::vector<double> alphas = {0.5};
  int trials = 1;
  std::uint64_t seed = 0;
  MeanSpec means;
  NoiseKind noise = NoiseKind::bernoulli;
  bool fixed_instance = false;
  std::string out_path;  // empty: no file output
  enum class Format { csv, json } format = Format::csv;
  int threads = 0;  // <= 0: hardware concurrency
};

struct TrialResult {
  std::uint64_t stream_seed = 0;
  double alpha = 0.0;
  int trial_index = 0;
  std::vector<Checkpoint> checkpoints;
  GapEstimates final_est;
  GapTables truth;
  std::vector<std::string> warnings;
  double wall_seconds = 0.0;  // informational; never serialized
};

// One per-round record streamed to an optional observer: (t, u_flag, arm,
// observed total) for the full-bandit algorithm; (t, arm, alpha_t, UCB arm)
// plus the summed member rewards for the semi-bandit one.
struct TraceRow {
  long t = 0;
  int arm = -1;
  double observed_total = 0.0;
  bool u_flag = false;   // kl only
  double alpha_t = 0.0;  // ucb only
  int ucb_arm = -1;      // ucb only
};

using TraceHook = std::function<void(const TraceRow&)>;

// Powers of two below n, then n itself.
inline std::vector<long> checkpoint_schedule(long n) {
  std::vector<long> out;
  for (long t = 1; t < n; t *= 2) out.push_back(t);
  out.push_back(n);
  return out;
}

struct LoadedFamily {
  SuperArmFamily family;
  std::optional<Eigen::VectorXd> mu;
  std::optional<NoiseKind> noise;
};

inline LoadedFamily build_family(const FamilySpec& spec) {
  LoadedFamily out;
  switch (spec.kind) {
    case FamilySpec::Kind::uniform_matroid:
      out.family = make_uniform_matroid(spec.d, spec.m);
      break;
    case FamilySpec::Kind::restricted:
      out.family = make_restricted_family(spec.d0);
      break;
    case FamilySpec::Kind::file: {
      nlohmann::json j = load_json_file(spec.path);
      out.family = family_from_json(j);
      if (j.contains("mu")) {
        BanditInstance inst = instance_from_json(j);
        out.mu = inst.mu;
        out.noise = inst.noise;
      }
      break;
    }
  }
  return out;
}

namespace detail {

// seed stream index reserved for the shared instance of --fixed-instance runs
inline constexpr std::uint64_t kInstanceStream = 0x100000000ULL;

inline Eigen::VectorXd resolve_means(const ExperimentConfig& cfg,
                                     const LoadedFamily& loaded, Rng& trial_rng) {
  const int d = loaded.family.d;
  if (cfg.means.kind == MeanSpec::Kind::explicit_vec) {
    if (cfg.means.values.size() != d)
      throw std::invalid_argument("mean vector dimension mismatch");
    return cfg.means.values;
  }
  if (loaded.mu) return *loaded.mu;
  if (cfg.fixed_instance) {
    Rng instance_rng(mix_seed(cfg.seed, kInstanceStream));
    return sample_means(instance_rng, d, cfg.means.lo, cfg.means.hi);
  }
  return sample_means(trial_rng, d, cfg.means.lo, cfg.means.hi);
}

inline Checkpoint make_checkpoint(long t, double cum_regret,
                                  const GapEstimates& est,
                                  const GapTables& gaps) {
  Checkpoint cp;
  cp.t = t;
  cp.cum_regret = cum_regret;
  Eigen::MatrixXd base_truth = base_truth_subset(gaps, est.base_arms);
  cp.mse_mu = mse_mu(est.base, base_truth);
  cp.max_err_mu = max_err_mu(est.base, base_truth);
  Eigen::MatrixXd super_truth = super_truth_subset(gaps, est.super_arms);
  cp.mse_M = mse_M(est.super, super_truth);
  cp.max_err_M = max_err_M(est.super, super_truth);
  cp.pareto_product = pareto_product(cp.max_err_M, cp.cum_regret);
  return cp;
}

}  // namespace detail

// One seeded run of the configured algorithm to the horizon, with checkpoint
// logging. Deterministic in (config, trial_index): the trial stream seed is
// mix_seed(config.seed, trial_index).
inline TrialResult run_trial(const ExperimentConfig& cfg, double alpha,
                             int trial_index, const TraceHook& trace = {}) {
  auto started = std::chrono::steady_clock::now();
  TrialResult result;
  result.alpha = alpha;
  result.trial_index = trial_index;
  result.stream_seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(trial_index));
  Rng rng(result.stream_seed);

  LoadedFamily loaded = build_family(cfg.family);
  Eigen::VectorXd mu = detail::resolve_means(cfg, loaded, rng);
  NoiseKind noise = loaded.noise.value_or(cfg.noise);
  BanditInstance inst = make_instance(loaded.family, std::move(mu), noise);
  GapTables gaps = true_gaps(inst);
  std::vector<long> schedule = checkpoint_schedule(cfg.n);

  double cum_regret = 0.0;
  std::size_t next_cp = 0;

  if (cfg.algo == Algo::kl) {
    KLState state = make_kl_state(inst.family, cfg.n, alpha);
    result.warnings = state.params.warnings;
    for (long t = 1; t <= cfg.n; ++t) {
      KLSelection sel = kl_select(state, rng);
      Eigen::VectorXd w = sample_reward(rng, inst);
      double observed = arm_value(inst.family.arms[sel.arm], w);
      kl_update(state, observed, sel.arm, sel.u_flag);
      if (trace) trace({t, sel.arm, observed, sel.u_flag, 0.0, -1});
      cum_regret += gaps.opt_gap[sel.arm];
      if (next_cp < schedule.size() && schedule[next_cp] == t) {
        result.checkpoints.push_back(detail::make_checkpoint(
            t, cum_regret, kl_estimates_partial(state, t), gaps));
        ++next_cp;
      }
    }
    result.final_est = kl_estimates(state, cfg.n);
  } else {
    UCBState state = init_ucb(inst.family, inst, rng, alpha);
    result.warnings = state.warnings;
    if (cfg.n < state.t)
      throw std::invalid_argument(
          "ucb: horizon smaller than the initialization round count");
    for (int arm : state.init_trace) cum_regret += gaps.opt_gap[arm];
    while (next_cp < schedule.size() && schedule[next_cp] < state.t) ++next_cp;
    for (long t = state.t; t <= cfg.n; ++t) {
      UCBSelection sel = ucb_select(state, rng);
      Eigen::VectorXd w = sample_reward(rng, inst);
      const Subset& members = inst.family.arms[sel.arm];
      std::vector<double> observed(members.size());
      for (std::size_t i = 0; i < members.size(); ++i) observed[i] = w[members[i]];
      ucb_update(state, sel.arm, observed, sel.pi);
      if (trace)
        trace({t, sel.arm, arm_value(members, w), false, sel.pi.alpha_t,
               sel.pi.ucb_arm});
      cum_regret += gaps.opt_gap[sel.arm];
      if (next_cp < schedule.size() && schedule[next_cp] == t) {
        result.checkpoints.push_back(detail::make_checkpoint(
            t, cum_regret, ucb_estimates_partial(state, t), gaps));
        ++next_cp;
      }
    }
    result.final_est = ucb_estimates(state, cfg.n);
  }
  result.truth = std::move(gaps);
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
          .count();
  return result;
}

// Per-alpha, per-checkpoint mean and standard error of each metric, reusing
// Checkpoint as the bag of six metrics. SEs are NaN when trials == 1.
struct AggregateRow {
  long t = 0;
  Checkpoint mean;
  Checkpoint se;
};

struct AlphaSummary {
  double alpha = 0.0;
  std::vector<AggregateRow> rows;
};

struct ExperimentSummary {
  std::vector<AlphaSummary> per_alpha;
};

struct ExperimentOutcome {
  std::vector<TrialResult> trials;  // alpha-major, then trial index
  ExperimentSummary summary;
};

namespace detail {

inline AlphaSummary aggregate_alpha(const std::vector<const TrialResult*>& trials,
                                    double alpha) {
  AlphaSummary out;
  out.alpha = alpha;
  if (trials.empty()) return out;
  const std::size_t n_cp = trials.front()->checkpoints.size();
  const double T = static_cast<double>(trials.size());
  for (std::size_t c = 0; c < n_cp; ++c) {
    AggregateRow row;
    row.t = trials.front()->checkpoints[c].t;
    auto metric = [&](auto getter) {
      double mean = 0.0;
      for (const TrialResult* tr : trials) mean += getter(tr->checkpoints[c]);
      mean /= T;
      double var = std::numeric_limits<double>::quiet_NaN();
      if (trials.size() > 1) {
        var = 0.0;
        for (const TrialResult* tr : trials) {
          double dev = getter(tr->checkpoints[c]) - mean;
          var += dev * dev;
        }
        var /= (T - 1.0) * T;  // squared standard error of the mean
      }
      return std::pair<double, double>(mean, std::sqrt(var));
    };
    std::tie(row.mean.cum_regret, row.se.cum_regret) =
        metric([](const Checkpoint& cp) { return cp.cum_regret; });
    std::tie(row.mean.mse_mu, row.se.mse_mu) =
        metric([](const Checkpoint& cp) { return cp.mse_mu; });
    std::tie(row.mean.mse_M, row.se.mse_M) =
        metric([](const Checkpoint& cp) { return cp.mse_M; });
    std::tie(row.mean.max_err_mu, row.se.max_err_mu) =
        metric([](const Checkpoint& cp) { return cp.max_err_mu; });
    std::tie(row.mean.max_err_M, row.se.max_err_M) =
        metric([](const Checkpoint& cp) { return cp.max_err_M; });
    std::tie(row.mean.pareto_product, row.se.pareto_product) =
        metric([](const Checkpoint& cp) { return cp.pareto_product; });
    row.mean.t = row.se.t = row.t;
    out.rows.push_back(row);
  }
  return out;
}

// Shortest round-trip decimal form; keeps output files byte-stable.
inline std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

inline constexpr const char* kCsvHeader =
    "algo,alpha,trial,seed,t,cum_regret,mse_mu,mse_M,max_err_mu,max_err_M,"
    "pareto_product";

inline std::string to_csv(const ExperimentConfig& cfg,
                          const std::vector<TrialResult>& trials) {
  std::string out = kCsvHeader;
  out += '\n';
  for (const TrialResult& tr : trials)
    for (const Checkpoint& cp : tr.checkpoints) {
      out += algo_name(cfg.algo);
      out += ',';
      out += detail::fmt(tr.alpha);
      out += ',';
      out += std::to_string(tr.trial_index);
      out += ',';
      out += std::to_string(tr.stream_seed);
      out += ',';
      out += std::to_string(cp.t);
      out += ',';
      out += detail::fmt(cp.cum_regret);
      out += ',';
      out += detail::fmt(cp.mse_mu);
      out += ',';
      out += detail::fmt(cp.mse_M);
      out += ',';
      out += detail::fmt(cp.max_err_mu);
      out += ',';
      out += detail::fmt(cp.max_err_M);
      out += ',';
      out += detail::fmt(cp.pareto_product);
      out += '\n';
    }
  return out;
}

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["algo"] = algo_name(cfg.algo);
  switch (cfg.family.kind) {
    case FamilySpec::Kind::uniform_matroid:
      j["family"] = {{"kind", "uniform-matroid"},
                     {"d", cfg.family.d},
                     {"m", cfg.family.m}};
      break;
    case FamilySpec::Kind::restricted:
      j["family"] = {{"kind", "restricted"}, {"d0", cfg.family.d0}};
      break;
    case FamilySpec::Kind::file:
      j["family"] = {{"kind", "file"}, {"path", cfg.family.path}};
      break;
  }
  j["n"] = cfg.n;
  j["alpha"] = cfg.alphas;
  j["trials"] = cfg.trials;
  j["seed"] = cfg.seed;
  j["noise"] = cfg.noise == NoiseKind::bernoulli ? "bernoulli" : "uniform";
  j["fixed_instance"] = cfg.fixed_instance;
  if (cfg.means.kind == MeanSpec::Kind::uniform)
    j["means"] = {{"kind", "uniform"}, {"lo", cfg.means.lo}, {"hi", cfg.means.hi}};
  else
    j["means"] = {{"kind", "explicit"},
                  {"values", std::vector<double>(cfg.means.values.data(),
                                                 cfg.means.values.data() +
                                                     cfg.means.values.size())}};
  return j;
}

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json to_json(const ExperimentConfig& cfg,
                              const std::vector<TrialResult>& trials) {
  nlohmann::json j;
  j["config"] = config_to_json(cfg);
  j["metadata"] = {{"seed_mix", kSeedMixId}, {"version", kVersion}};
  auto& arr = j["trials"] = nlohmann::json::array();
  for (const TrialResult& tr : trials) {
    nlohmann::json t;
    t["alpha"] = tr.alpha;
    t["trial"] = tr.trial_index;
    t["seed"] = tr.stream_seed;
    t["warnings"] = tr.warnings;
    auto& cps = t["checkpoints"] = nlohmann::json::array();
    for (const Checkpoint& cp : tr.checkpoints)
      cps.push_back({{"t", cp.t},
                     {"cum_regret", cp.cum_regret},
                     {"mse_mu", cp.mse_mu},
                     {"mse_M", cp.mse_M},
                     {"max_err_mu", cp.max_err_mu},
                     {"max_err_M", cp.max_err_M},
                     {"pareto_product", cp.pareto_product}});
    std::vector<int> base_arms_1based;
    for (int e : tr.final_est.base_arms) base_arms_1based.push_back(e + 1);
    t["final_estimates"] = {{"super", matrix_to_json(tr.final_est.super)},
                            {"base", matrix_to_json(tr.final_est.base)},
                            {"base_arms", base_arms_1based},
                            {"super_arms", tr.final_est.super_arms}};
    t["true_gaps"] = {{"super", matrix_to_json(tr.truth.super_gap)},
                      {"base", matrix_to_json(tr.truth.base_gap)},
                      {"opt", std::vector<double>(tr.truth.opt_gap.data(),
                                                  tr.truth.opt_gap.data() +
                                                      tr.truth.opt_gap.size())},
                      {"best_index", tr.truth.best_index}};
    arr.push_back(std::move(t));
  }
  return j;
}

inline void validate_config(const ExperimentConfig& cfg) {
  if (cfg.n < 1) throw std::invalid_argument("config: n >= 1");
  if (cfg.trials < 1) throw std::invalid_argument("config: trials >= 1");
  if (cfg.alphas.empty()) throw std::invalid_argument("config: empty alpha grid");
  for (double a : cfg.alphas)
    if (a < 0.0 || a > 1.0)
      throw std::invalid_argument("config: alpha values must lie in [0,1]");
}

// Runs the full alpha grid x trial grid, in parallel over a worker pool.
// Aggregation consumes results in task order, so the outcome is independent
// of the parallelism degree; a failing trial aborts the run after writing a
// partial-results manifest next to the intended output.
inline ExperimentOutcome run_experiment(const ExperimentConfig& cfg) {
  validate_config(cfg);
  const std::size_t total = cfg.alphas.size() * static_cast<std::size_t>(cfg.trials);
  std::vector<std::optional<TrialResult>> slots(total);
  std::vector<std::pair<std::size_t, std::string>> failures;
  std::mutex failures_mutex;
  std::atomic<std::size_t> next{0};

  unsigned n_threads = cfg.threads > 0
                           ? static_cast<unsigned>(cfg.threads)
                           : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min<unsigned>(n_threads, static_cast<unsigned>(total));
  auto worker = [&] {
    while (true) {
      std::size_t task = next.fetch_add(1);
      if (task >= total) return;
      double alpha = cfg.alphas[task / static_cast<std::size_t>(cfg.trials)];
      int trial = static_cast<int>(task % static_cast<std::size_t>(cfg.trials));
      try {
        slots[task] = run_trial(cfg, alpha, trial);
      } catch (const std::exception& ex) {
        std::lock_guard<std::mutex> lock(failures_mutex);
        failures.emplace_back(task, std::string(ex.what()));
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned i = 0; i + 1 < n_threads; ++i) pool.emplace_back(worker);
  worker();
  for (std::thread& th : pool) th.join();

  if (!failures.empty()) {
    auto first = *std::min_element(failures.begin(), failures.end());
    double alpha = cfg.alphas[first.first / static_cast<std::size_t>(cfg.trials)];
    int trial = static_cast<int>(first.first % static_cast<std::size_t>(cfg.trials));
    if (!cfg.out_path.empty()) {
      nlohmann::json manifest;
      manifest["error"] = first.second;
      manifest["failed_alpha"] = alpha;
      manifest["failed_trial"] = trial;
      auto& done = manifest["completed"] = nlohmann::json::array();
      for (std::size_t task = 0; task < total; ++task)
        if (slots[task])
          done.push_back(
              {{"alpha", cfg.alphas[task / static_cast<std::size_t>(cfg.trials)]},
               {"trial", static_cast<int>(task % static_cast<std::size_t>(cfg.trials))}});
      save_json_file(cfg.out_path + ".partial.json", manifest);
    }
    throw RunError("trial " + std::to_string(trial) + " (alpha " +
                   detail::fmt(alpha) + ") failed: " + first.second);
  }

  ExperimentOutcome outcome;
  outcome.trials.reserve(total);
  for (auto& slot : slots) outcome.trials.push_back(std::move(*slot));
  for (std::size_t a = 0; a < cfg.alphas.size(); ++a) {
    std::vector<const TrialResult*> group;
    for (int k = 0; k < cfg.trials; ++k)
      group.push_back(
          &outcome.trials[a * static_cast<std::size_t>(cfg.trials) +
                          static_cast<std::size_t>(k)]);
    outcome.summary.per_alpha.push_back(
        detail::aggregate_alpha(group, cfg.alphas[a]));
  }

  if (!cfg.out_path.empty()) {
    std::ofstream out(cfg.out_path, std::ios::binary);
    if (!out) throw RunError("cannot write " + cfg.out_path);
    if (cfg.format == ExperimentConfig::Format::csv)
      out << to_csv(cfg, outcome.trials);
    else
      out << to_json(cfg, outcome.trials).dump() << '\n';
  }
  return outcome;
}

}  // namespace cmab
