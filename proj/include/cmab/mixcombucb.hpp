#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmab/instance.hpp"
#include "cmab/rng.hpp"

namespace cmab {

// c_{t,s} = sqrt(2 log t / s), natural log.
inline double confidence_radius(double t, long s) {
  if (!(t >= 1.0)) throw std::domain_error("confidence_radius: t >= 1");
  if (s < 1) throw std::domain_error("confidence_radius: s >= 1");
  return std::sqrt(2.0 * std::log(t) / static_cast<double>(s));
}

struct ForcedPair {
  int base_arm = -1;   // e
  int arm_index = -1;  // the covering super arm M_e (family index)
};

// All mutable state of the semi-bandit algorithm, owned by a single trial.
struct UCBState {
  SuperArmFamily family;
  double alpha = 0.0;
  long t = 0;                 // current round; the main loop runs t = m0..n
  Eigen::VectorXd means;      // running reward means per base arm
  std::vector<long> counts;   // observation counts per base arm
  Eigen::VectorXd ipw_acc;    // inverse-propensity accumulators per base arm
  std::vector<ForcedPair> forced;
  std::vector<int> forced_membership;  // #{k : e in M_{forced[k]}} per base arm
  int m0 = 0;
  std::vector<int> covered;     // E, the observable base arms, sorted
  std::vector<int> init_trace;  // arms played during initialization
  long rounds_accumulated = 0;  // completed main-loop rounds
  std::vector<std::string> warnings;
};

// Covering initialization: repeatedly ask the oracle for the arm covering
// the most unobserved base arms, observe it, and record a covering super arm
// per base arm. At most d oracle calls. Base arms in no arm at all are
// dropped from E with a warning.
inline UCBState init_ucb(const SuperArmFamily& family,
                         const BanditInstance& env, Rng& rng, double alpha) {
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("init_ucb: alpha must lie in [0,1]");
  UCBState state;
  state.family = family;
  validate_family(state.family);
  state.alpha = alpha;
  const int d = family.d;
  state.means = Eigen::VectorXd::Zero(d);
  state.counts.assign(static_cast<std::size_t>(d), 0);
  state.ipw_acc = Eigen::VectorXd::Zero(d);
  state.forced_membership.assign(static_cast<std::size_t>(d), 0);

  Eigen::VectorXd unobserved = Eigen::VectorXd::Ones(d);
  for (const Subset& arm : family.arms)
    for (int e : arm) unobserved[e] = 2.0;  // mark coverable
  for (int e = 0; e < d; ++e) {
    if (unobserved[e] < 2.0) {
      unobserved[e] = 0.0;
      state.warnings.push_back("base arm " + std::to_string(e + 1) +
                               " is covered by no super arm; dropped from E");
    } else {
      unobserved[e] = 1.0;
    }
  }

  std::vector<int> covering(static_cast<std::size_t>(d), -1);
  std::vector<int> order;  // first-coverage order of base arms
  while (unobserved.maxCoeff() > 0.5) {
    int idx = solve_oracle(family, unobserved).index;
    state.init_trace.push_back(idx);
    Eigen::VectorXd w = sample_reward(rng, env);
    for (int e : family.arms[static_cast<std::size_t>(idx)]) {
      state.means[e] = w[e];
      if (unobserved[e] > 0.5) order.push_back(e);
      unobserved[e] = 0.0;
      covering[static_cast<std::size_t>(e)] = idx;
    }
  }

  for (int e : order) {
    state.forced.push_back({e, covering[static_cast<std::size_t>(e)]});
    for (int f : family.arms[static_cast<std::size_t>(
             covering[static_cast<std::size_t>(e)])])
      ++state.forced_membership[static_cast<std::size_t>(f)];
  }
  state.m0 = static_cast<int>(state.forced.size());
  state.covered = order;
  std::sort(state.covered.begin(), state.covered.end());
  for (int e : state.covered) state.counts[static_cast<std::size_t>(e)] = 1;
  state.t = state.m0;

  if (alpha == 0.0)
    state.warnings.push_back(
        "alpha=0: the mixture puts all mass on the forced covering arms; the "
        "UCB arm is only played when it coincides with one");
  if (alpha > 0.5)
    state.warnings.push_back(
        "alpha=" + std::to_string(alpha) +
        " relies on the large-gap property for the Pareto guarantee");
  return state;
}

struct UCBPiRecord {
  long t = 0;
  double alpha_t = 0.0;  // per-pair forced mass 1/(m0 t^alpha)
  int ucb_arm = -1;      // the UCB-optimal arm of this round
};

struct UCBSelection {
  int arm = -1;
  UCBPiRecord pi;
};

// One arm draw from the mixture
//   pi_t(M) = (1 - m0 alpha_t) I{M = UCB arm} + sum_pairs alpha_t I{M = M_e}.
inline UCBSelection ucb_select(UCBState& state, Rng& rng) {
  const long t = state.t;
  Eigen::VectorXd ucb(state.family.d);
  for (int e = 0; e < state.family.d; ++e) {
    long s = std::max<long>(1, state.counts[static_cast<std::size_t>(e)]);
    ucb[e] = state.means[e] + confidence_radius(std::max<long>(1, t - 1), s);
  }
  UCBSelection sel;
  sel.pi.t = t;
  sel.pi.ucb_arm = solve_oracle(state.family, ucb).index;
  sel.pi.alpha_t =
      1.0 / (state.m0 * std::pow(static_cast<double>(t), state.alpha));
  double ucb_mass = 1.0 - state.m0 * sel.pi.alpha_t;
  double u = rng.uniform();
  if (u < ucb_mass) {
    sel.arm = sel.pi.ucb_arm;
  } else {
    auto k = static_cast<std::size_t>((u - ucb_mass) / sel.pi.alpha_t);
    k = std::min(k, state.forced.size() - 1);
    sel.arm = state.forced[k].arm_index;
  }
  return sel;
}

// Exact P(e in M(t)) under the round's mixture; the inverse-propensity
// divisor. Forced sets shared by several base arms count with multiplicity.
inline double inclusion_prob(const UCBState& state, const UCBPiRecord& pi,
                             int e) {
  if (e < 0 || e >= state.family.d ||
      !std::binary_search(state.covered.begin(), state.covered.end(), e))
    throw std::domain_error("inclusion_prob: base arm not covered");
  const Subset& ucb_arm = state.family.arms[static_cast<std::size_t>(pi.ucb_arm)];
  double p = pi.alpha_t * state.forced_membership[static_cast<std::size_t>(e)];
  if (std::binary_search(ucb_arm.begin(), ucb_arm.end(), e))
    p += 1.0 - state.m0 * pi.alpha_t;
  return p;
}

// One state update from the semi-bandit observation of the selected arm.
// observed holds the reward of each member of arms[arm], in member order.
inline void ucb_update(UCBState& state, int arm,
                       const std::vector<double>& observed,
                       const UCBPiRecord& pi) {
  if (arm < 0 || arm >= static_cast<int>(state.family.arms.size()))
    throw std::invalid_argument("ucb_update: arm index out of range");
  const Subset& members = state.family.arms[static_cast<std::size_t>(arm)];
  if (observed.size() != members.size())
    throw std::invalid_argument(
        "ucb_update: observation set does not match the selected arm");
  for (std::size_t i = 0; i < members.size(); ++i) {
    int e = members[i];
    double w = observed[i];
    state.ipw_acc[e] += w / inclusion_prob(state, pi, e);
    long sr = state.counts[static_cast<std::size_t>(e)];
    state.counts[static_cast<std::size_t>(e)] = sr + 1;
    state.means[e] = (static_cast<double>(sr) * state.means[e] + w) /
                     static_cast<double>(sr + 1);
  }
  ++state.t;
  ++state.rounds_accumulated;
}

// Gap estimates after the full horizon. Super-arm entries sum the member
// accumulators; base entries are pairwise accumulator differences over the
// covered set.
inline GapEstimates ucb_estimates_partial(const UCBState& state, long rounds) {
  GapEstimates est;
  const double n = static_cast<double>(rounds);
  const auto K = static_cast<Eigen::Index>(state.family.arms.size());
  Eigen::VectorXd arm_sums(K);
  for (Eigen::Index k = 0; k < K; ++k)
    arm_sums[k] =
        arm_value(state.family.arms[static_cast<std::size_t>(k)], state.ipw_acc) / n;
  est.super = arm_sums.replicate(1, K) - arm_sums.transpose().replicate(K, 1);
  est.super_arms.resize(static_cast<std::size_t>(K));
  for (Eigen::Index k = 0; k < K; ++k)
    est.super_arms[static_cast<std::size_t>(k)] = static_cast<int>(k);
  const auto C = static_cast<Eigen::Index>(state.covered.size());
  Eigen::VectorXd base(C);
  for (Eigen::Index i = 0; i < C; ++i)
    base[i] = state.ipw_acc[state.covered[static_cast<std::size_t>(i)]] / n;
  est.base = base.replicate(1, C) - base.transpose().replicate(C, 1);
  est.base_arms = state.covered;
  return est;
}

inline GapEstimates ucb_estimates(const UCBState& state, long n) {
  if (state.t != n + 1)
    throw std::logic_error("ucb_estimates: horizon not reached");
  return ucb_estimates_partial(state, n);
}

}  // namespace cmab
