#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cmab/rng.hpp"

namespace cmab {

// A base-arm subset; members are 0-based indices into {0, ..., d-1}, sorted
// ascending. (Files and CLI output use 1-based indices, see serialize.hpp.)
using Subset = std::vector<int>;

inline constexpr long kEnumerationGuard = 1'000'000;

// binomial(n, k) with saturation at 2 * kEnumerationGuard so callers can
// check the enumeration guard without overflow.
inline long binomial_capped(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  double acc = 1.0;
  for (int i = 1; i <= k; ++i) {
    acc *= static_cast<double>(n - k + i) / i;
    if (acc > 2.0 * kEnumerationGuard) return 2 * kEnumerationGuard;
  }
  return static_cast<long>(std::llround(acc));
}

// The feasible super-arm set over d base arms. Arms are distinct, non-empty,
// sorted subsets; uniform_size is set when every arm has the same cardinality.
struct SuperArmFamily {
  int d = 0;
  std::vector<Subset> arms;
  std::optional<int> uniform_size;
};

inline void validate_family(const SuperArmFamily& family) {
  if (family.d <= 0) throw std::invalid_argument("family: d must be positive");
  if (family.arms.empty()) throw std::invalid_argument("family: no arms");
  std::set<Subset> seen;
  for (const Subset& arm : family.arms) {
    if (arm.empty()) throw std::invalid_argument("family: empty arm");
    if (!std::is_sorted(arm.begin(), arm.end()))
      throw std::invalid_argument("family: arm members must be sorted");
    if (std::adjacent_find(arm.begin(), arm.end()) != arm.end())
      throw std::invalid_argument("family: repeated member in arm");
    if (arm.front() < 0 || arm.back() >= family.d)
      throw std::invalid_argument("family: arm member out of range");
    if (!seen.insert(arm).second)
      throw std::invalid_argument("family: duplicate arm");
    if (family.uniform_size && static_cast<int>(arm.size()) != *family.uniform_size)
      throw std::invalid_argument("family: arm violates uniform size");
  }
}

inline SuperArmFamily make_family(int d, std::vector<Subset> arms) {
  SuperArmFamily family;
  family.d = d;
  family.arms = std::move(arms);
  for (Subset& arm : family.arms) std::sort(arm.begin(), arm.end());
  bool uniform = true;
  for (const Subset& arm : family.arms)
    uniform = uniform && arm.size() == family.arms.front().size();
  if (!family.arms.empty() && uniform)
    family.uniform_size = static_cast<int>(family.arms.front().size());
  validate_family(family);
  return family;
}

// All size-m subsets of {0..d-1} in lexicographic order.
inline SuperArmFamily make_uniform_matroid(int d, int m) {
  if (m < 1 || m > d)
    throw std::invalid_argument("uniform matroid: need 1 <= m <= d");
  long count = binomial_capped(d, m);
  if (count > kEnumerationGuard)
    throw std::invalid_argument("uniform matroid: C(" + std::to_string(d) +
                                "," + std::to_string(m) +
                                ") exceeds the 10^6 enumeration guard");
  std::vector<Subset> arms;
  arms.reserve(static_cast<std::size_t>(count));
  Subset cur(m);
  for (int i = 0; i < m; ++i) cur[i] = i;
  while (true) {
    arms.push_back(cur);
    int i = m - 1;
    while (i >= 0 && cur[i] == d - m + i) --i;
    if (i < 0) break;
    ++cur[i];
    for (int j = i + 1; j < m; ++j) cur[j] = cur[j - 1] + 1;
  }
  SuperArmFamily family;
  family.d = d;
  family.arms = std::move(arms);
  family.uniform_size = m;
  return family;
}

// True when the family is exactly all size-m subsets of {0..d-1}. Arms are
// distinct by invariant, so a cardinality check suffices.
inline bool is_complete_uniform_matroid(const SuperArmFamily& family) {
  if (!family.uniform_size) return false;
  return static_cast<long>(family.arms.size()) ==
         binomial_capped(family.d, *family.uniform_size);
}

// The two singletons {1}, {2} plus the pairs {3,4}, ..., {2*d0-1, 2*d0}
// (1-based); over d = 2*d0 base arms. Only the singleton rewards are
// identifiable from full-bandit feedback on this family.
inline SuperArmFamily make_restricted_family(int d0) {
  if (d0 < 1) throw std::invalid_argument("restricted family: d0 >= 1");
  SuperArmFamily family;
  family.d = 2 * d0;
  family.arms.push_back({0});
  family.arms.push_back({1});
  for (int i = 1; i < d0; ++i) family.arms.push_back({2 * i, 2 * i + 1});
  return family;
}

// Perfect matchings of the complete bipartite graph K_{m,m}: d = m^2 base
// arms (edges), one arm per permutation, m! arms in total.
inline SuperArmFamily make_perfect_matchings(int m) {
  if (m < 1) throw std::invalid_argument("matchings: m >= 1");
  double fact = 1.0;
  for (int i = 2; i <= m; ++i) fact *= i;
  if (fact > kEnumerationGuard)
    throw std::invalid_argument("matchings: m! exceeds the enumeration guard");
  SuperArmFamily family;
  family.d = m * m;
  family.uniform_size = m;
  std::vector<int> perm(m);
  for (int i = 0; i < m; ++i) perm[i] = i;
  do {
    Subset arm(m);
    for (int i = 0; i < m; ++i) arm[i] = i * m + perm[i];
    std::sort(arm.begin(), arm.end());
    family.arms.push_back(std::move(arm));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return family;
}

enum class NoiseKind { bernoulli, uniform_interval };

// A family plus per-coordinate mean rewards on [0,1] and a reward law whose
// coordinate-wise expectation is exactly mu.
struct BanditInstance {
  SuperArmFamily family;
  Eigen::VectorXd mu;
  NoiseKind noise = NoiseKind::bernoulli;
};

inline BanditInstance make_instance(SuperArmFamily family, Eigen::VectorXd mu,
                                    NoiseKind noise = NoiseKind::bernoulli) {
  validate_family(family);
  if (mu.size() != family.d)
    throw std::invalid_argument("instance: mu dimension mismatch");
  for (int e = 0; e < mu.size(); ++e)
    if (!(mu[e] >= 0.0 && mu[e] <= 1.0))
      throw std::invalid_argument("instance: mu out of [0,1]");
  return BanditInstance{std::move(family), std::move(mu), noise};
}

// Two-arm Bernoulli pair differing only in arm 2's mean by 2g; the classic
// hard pair for the error/regret lower bound.
inline std::pair<BanditInstance, BanditInstance> make_hard_pair(double zeta,
                                                                double g) {
  if (!(zeta >= 0.0 && zeta < 1.0) || !(g >= 0.0 && g <= 0.125))
    throw std::invalid_argument("hard pair: need zeta in [0,1), g in [0,1/8]");
  SuperArmFamily family = make_family(2, {{0}, {1}});
  Eigen::VectorXd mu1(2), mu2(2);
  mu1 << 0.5 - zeta, 0.5;
  mu2 << 0.5 - zeta, 0.5 + 2.0 * g;
  return {make_instance(family, mu1), make_instance(std::move(family), mu2)};
}

inline Eigen::VectorXd sample_means(Rng& rng, int d, double lo, double hi) {
  if (!(lo >= 0.0 && lo < hi && hi <= 1.0))
    throw std::invalid_argument("sample_means: need 0 <= lo < hi <= 1");
  Eigen::VectorXd mu(d);
  for (int e = 0; e < d; ++e) mu[e] = rng.uniform(lo, hi);
  return mu;
}

// One reward vector draw. Bernoulli(mu(e)) per coordinate, or uniform on
// [mu-h, mu+h] with h = min(0.1, mu, 1-mu) so the interval stays inside
// [0,1] and the mean stays exactly mu.
inline Eigen::VectorXd sample_reward(Rng& rng, const BanditInstance& inst) {
  const int d = inst.family.d;
  Eigen::VectorXd w(d);
  for (int e = 0; e < d; ++e) {
    switch (inst.noise) {
      case NoiseKind::bernoulli:
        w[e] = rng.bernoulli(inst.mu[e]) ? 1.0 : 0.0;
        break;
      case NoiseKind::uniform_interval: {
        double h = std::min({0.1, inst.mu[e], 1.0 - inst.mu[e]});
        w[e] = inst.mu[e] + h * (2.0 * rng.uniform() - 1.0);
        break;
      }
    }
  }
  return w;
}

// f(M, w) = sum of the weights of M's members.
inline double arm_value(const Subset& arm, const Eigen::VectorXd& weights) {
  double v = 0.0;
  for (int e : arm) v += weights[e];
  return v;
}

struct OracleResult {
  int index = -1;
  double value = 0.0;
};

// Exact combinatorial oracle: argmax_M f(M, weights), ties broken by lowest
// family index.
inline OracleResult solve_oracle(const SuperArmFamily& family,
                                 const Eigen::VectorXd& weights) {
  if (family.arms.empty()) throw std::invalid_argument("oracle: empty family");
  if (weights.size() != family.d)
    throw std::invalid_argument("oracle: weight dimension mismatch");
  if (!weights.allFinite())
    throw std::invalid_argument("oracle: non-finite weights");
  OracleResult best;
  for (int k = 0; k < static_cast<int>(family.arms.size()); ++k) {
    double v = arm_value(family.arms[k], weights);
    if (best.index < 0 || v > best.value) best = {k, v};
  }
  return best;
}

// Exact gap tables computed from mu.
struct GapTables {
  Eigen::MatrixXd super_gap;  // super_gap(i,j) = f(M_i, mu) - f(M_j, mu)
  Eigen::MatrixXd base_gap;   // base_gap(i,j) = mu(i) - mu(j)
  Eigen::VectorXd opt_gap;    // f(M*, mu) - f(M, mu)
  int best_index = -1;
};

inline GapTables true_gaps(const BanditInstance& inst) {
  const int K = static_cast<int>(inst.family.arms.size());
  const int d = inst.family.d;
  Eigen::VectorXd values(K);
  for (int k = 0; k < K; ++k) values[k] = arm_value(inst.family.arms[k], inst.mu);
  GapTables gaps;
  gaps.super_gap = values.replicate(1, K) - values.transpose().replicate(K, 1);
  gaps.base_gap = inst.mu.replicate(1, d) - inst.mu.transpose().replicate(d, 1);
  values.maxCoeff(&gaps.best_index);
  gaps.opt_gap = Eigen::VectorXd::Constant(K, values[gaps.best_index]) - values;
  return gaps;
}

// Gap estimate tables emitted by either algorithm. base covers only the
// estimable base arms, listed in base_arms; super covers the tracked super
// arms, listed in super_arms (all of them in the usual full-tracking mode).
struct GapEstimates {
  Eigen::MatrixXd super;
  Eigen::MatrixXd base;
  std::vector<int> base_arms;
  std::vector<int> super_arms;
};

// Minimum gap of base arm e: the shortfall of the best strictly suboptimal
// super arm containing e. Requires e outside M* and covered by at least one
// suboptimal arm.
inline double min_gap(const BanditInstance& inst, int e) {
  if (e < 0 || e >= inst.family.d)
    throw std::domain_error("min_gap: base arm out of range");
  GapTables gaps = true_gaps(inst);
  const Subset& best = inst.family.arms[gaps.best_index];
  if (std::binary_search(best.begin(), best.end(), e))
    throw std::domain_error("min_gap: base arm belongs to the optimal arm");
  double best_subopt = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < static_cast<int>(inst.family.arms.size()); ++k) {
    const Subset& arm = inst.family.arms[k];
    if (gaps.opt_gap[k] <= 0.0) continue;
    if (std::binary_search(arm.begin(), arm.end(), e))
      best_subopt = std::max(best_subopt, arm_value(arm, inst.mu));
  }
  if (!std::isfinite(best_subopt))
    throw std::domain_error("min_gap: base arm not covered by a suboptimal arm");
  return arm_value(best, inst.mu) - best_subopt;
}

// min over eligible base arms of min_gap; the large-gap property holds when
// this is bounded away from zero.
inline double large_gap_report(const BanditInstance& inst) {
  GapTables gaps = true_gaps(inst);
  const Subset& best = inst.family.arms[gaps.best_index];
  double out = std::numeric_limits<double>::infinity();
  bool any = false;
  for (int e = 0; e < inst.family.d; ++e) {
    if (std::binary_search(best.begin(), best.end(), e)) continue;
    bool covered = false;
    for (int k = 0; k < static_cast<int>(inst.family.arms.size()); ++k)
      if (gaps.opt_gap[k] > 0.0 &&
          std::binary_search(inst.family.arms[k].begin(),
                             inst.family.arms[k].end(), e))
        covered = true;
    if (!covered) continue;
    out = std::min(out, min_gap(inst, e));
    any = true;
  }
  if (!any)
    throw std::domain_error("large_gap_report: no eligible base arm");
  return out;
}

}  // namespace cmab
