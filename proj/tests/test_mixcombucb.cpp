#include "cmab/mixcombucb.hpp"

#include <gtest/gtest.h>

#include "cmab/metrics.hpp"
#include "test_util.hpp"

using namespace cmab;

namespace {

struct UCBRun {
  UCBState state;
  double cum_regret = 0.0;
  long confidence_checks = 0;
  long confidence_misses = 0;
};

UCBRun run_ucb(const BanditInstance& inst, long n, double alpha,
               std::uint64_t seed, bool track_coverage = false) {
  Rng rng(seed);
  UCBRun run{init_ucb(inst.family, inst, rng, alpha), 0.0, 0, 0};
  GapTables gaps = true_gaps(inst);
  for (int arm : run.state.init_trace) run.cum_regret += gaps.opt_gap[arm];
  for (long t = run.state.t; t <= n; ++t) {
    if (track_coverage) {
      for (int e : run.state.covered) {
        double radius = confidence_radius(
            std::max<long>(1, t - 1), run.state.counts[static_cast<std::size_t>(e)]);
        ++run.confidence_checks;
        if (std::abs(inst.mu[e] - run.state.means[e]) >= radius)
          ++run.confidence_misses;
      }
    }
    UCBSelection sel = ucb_select(run.state, rng);
    Eigen::VectorXd w = sample_reward(rng, inst);
    const Subset& members = inst.family.arms[static_cast<std::size_t>(sel.arm)];
    std::vector<double> observed(members.size());
    for (std::size_t i = 0; i < members.size(); ++i) observed[i] = w[members[i]];
    ucb_update(run.state, sel.arm, observed, sel.pi);
    run.cum_regret += gaps.opt_gap[sel.arm];
  }
  return run;
}

BanditInstance fresh_instance(const SuperArmFamily& family, Rng& rng) {
  return make_instance(family, sample_means(rng, family.d, 0.1, 0.9));
}

}  // namespace

TEST(ConfidenceRadius, ClosedForm) {
  EXPECT_EQ(confidence_radius(1, 1), 0.0);
  EXPECT_EQ(confidence_radius(1, 50), 0.0);
  EXPECT_NEAR(confidence_radius(std::exp(2.0), 2), std::sqrt(2.0), 1e-12);
  // frozen from sqrt(2 ln 100 / 10)
  EXPECT_NEAR(confidence_radius(100, 10), 0.9597051824376163, 1e-12);
  EXPECT_THROW(confidence_radius(100, 0), std::domain_error);
  EXPECT_THROW(confidence_radius(0, 1), std::domain_error);
}

TEST(InitUcb, UniformMatroidCoversInCeilDOverMCalls) {
  SuperArmFamily family = make_uniform_matroid(9, 4);
  BanditInstance inst =
      make_instance(family, Eigen::VectorXd::Constant(9, 0.5));
  Rng rng(1);
  UCBState state = init_ucb(family, inst, rng, 0.25);
  EXPECT_EQ(state.init_trace.size(), 3u);  // ceil(9/4)
  EXPECT_EQ(state.m0, 9);
  EXPECT_EQ(state.covered, (std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8}));
  for (int e : state.covered)
    EXPECT_EQ(state.counts[static_cast<std::size_t>(e)], 1);
  EXPECT_EQ(state.t, 9);
}

TEST(InitUcb, RestrictedFamilyTrace) {
  SuperArmFamily family = make_restricted_family(2);
  BanditInstance inst =
      make_instance(family, Eigen::VectorXd::Constant(4, 0.5));
  Rng rng(2);
  UCBState state = init_ucb(family, inst, rng, 0.25);
  // oracle picks the pair {3,4} first, then the singletons in index order
  ASSERT_EQ(state.init_trace.size(), 3u);
  EXPECT_EQ(family.arms[static_cast<std::size_t>(state.init_trace[0])],
            (Subset{2, 3}));
  EXPECT_EQ(family.arms[static_cast<std::size_t>(state.init_trace[1])],
            (Subset{0}));
  EXPECT_EQ(family.arms[static_cast<std::size_t>(state.init_trace[2])],
            (Subset{1}));
  EXPECT_EQ(state.m0, 4);
  ASSERT_EQ(state.forced.size(), 4u);
  EXPECT_EQ(state.forced[0].base_arm, 2);
  EXPECT_EQ(family.arms[static_cast<std::size_t>(state.forced[0].arm_index)],
            (Subset{2, 3}));
  EXPECT_EQ(state.forced[1].base_arm, 3);
  EXPECT_EQ(state.forced[2].base_arm, 0);
  EXPECT_EQ(family.arms[static_cast<std::size_t>(state.forced[2].arm_index)],
            (Subset{0}));
  EXPECT_EQ(state.forced[3].base_arm, 1);
}

TEST(InitUcb, SingleArmFamily) {
  SuperArmFamily family = make_family(2, {{0, 1}});
  BanditInstance inst =
      make_instance(family, Eigen::VectorXd::Constant(2, 0.5));
  Rng rng(3);
  UCBState state = init_ucb(family, inst, rng, 0.5);
  EXPECT_EQ(state.init_trace.size(), 1u);
  EXPECT_EQ(state.m0, 2);
}

TEST(InitUcb, DropsUncoveredArmsWithWarning) {
  SuperArmFamily family = make_family(3, {{0, 1}});
  BanditInstance inst =
      make_instance(family, Eigen::VectorXd::Constant(3, 0.5));
  Rng rng(4);
  UCBState state = init_ucb(family, inst, rng, 0.25);
  EXPECT_EQ(state.covered, (std::vector<int>{0, 1}));
  EXPECT_EQ(state.m0, 2);
  bool mentioned = false;
  for (const std::string& w : state.warnings)
    mentioned = mentioned || w.find("covered by no super arm") != std::string::npos;
  EXPECT_TRUE(mentioned);
}

TEST(InitUcb, CallCountNeverExceedsD) {
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    int d = 3 + static_cast<int>(rng.uniform_int(6));
    int m = 1 + static_cast<int>(rng.uniform_int(3));
    m = std::min(m, d);
    SuperArmFamily family = make_uniform_matroid(d, m);
    BanditInstance inst = fresh_instance(family, rng);
    Rng init_rng(rng.uniform_int(1u << 30));
    UCBState state = init_ucb(family, inst, init_rng, 0.25);
    EXPECT_LE(state.init_trace.size(), static_cast<std::size_t>(d));
    EXPECT_EQ(state.init_trace.size(),
              static_cast<std::size_t>((d + m - 1) / m));
    EXPECT_EQ(state.covered.size(), static_cast<std::size_t>(d));
  }
}

TEST(UcbSelect, MixtureAndInclusionProbabilities) {
  SuperArmFamily family = make_restricted_family(2);
  BanditInstance inst =
      make_instance(family, Eigen::VectorXd::Constant(4, 0.5));
  Rng rng(6);
  UCBState state = init_ucb(family, inst, rng, 1.0);
  state.t = 10;
  // pin the UCB winner to the singleton {1}: large mean, tight radii
  state.means << 1.0, 0.0, 0.0, 0.0;
  state.counts = {1000, 1000, 1000, 1000};
  UCBSelection sel = ucb_select(state, rng);
  EXPECT_EQ(family.arms[static_cast<std::size_t>(sel.pi.ucb_arm)], (Subset{0}));
  EXPECT_NEAR(sel.pi.alpha_t, 0.025, 1e-15);  // 1/(4*10)
  EXPECT_NEAR(1.0 - state.m0 * sel.pi.alpha_t, 0.9, 1e-15);
  // base arm 3 (1-based 4) sits only in the doubly-forced pair {3,4}
  EXPECT_NEAR(inclusion_prob(state, sel.pi, 3), 0.05, 1e-15);
  EXPECT_NEAR(inclusion_prob(state, sel.pi, 2), 0.05, 1e-15);
  // the UCB winner's member adds the exploitation mass
  EXPECT_NEAR(inclusion_prob(state, sel.pi, 0), 0.9 + 0.025, 1e-15);
  EXPECT_THROW(inclusion_prob(state, sel.pi, 9), std::domain_error);
}

TEST(UcbSelect, InclusionCoversUcbArmWithTwoForcedPairs) {
  SuperArmFamily family = make_restricted_family(2);
  BanditInstance inst =
      make_instance(family, Eigen::VectorXd::Constant(4, 0.5));
  Rng rng(61);
  UCBState state = init_ucb(family, inst, rng, 1.0);
  state.t = 10;
  state.means << 0.0, 0.0, 1.0, 1.0;  // winner is the pair {3,4}
  state.counts = {1000, 1000, 1000, 1000};
  UCBSelection sel = ucb_select(state, rng);
  EXPECT_EQ(family.arms[static_cast<std::size_t>(sel.pi.ucb_arm)],
            (Subset{2, 3}));
  EXPECT_NEAR(inclusion_prob(state, sel.pi, 2), 0.9 + 0.05, 1e-15);
}

TEST(UcbSelect, SamplingFrequenciesMatchTheMixture) {
  SuperArmFamily family = make_restricted_family(2);
  BanditInstance inst =
      make_instance(family, Eigen::VectorXd::Constant(4, 0.5));
  Rng rng(7);
  UCBState state = init_ucb(family, inst, rng, 1.0);
  state.t = 10;
  state.means << 1.0, 0.0, 0.0, 0.0;
  state.counts = {1000, 1000, 1000, 1000};
  const int draws = 40000;
  long forced_pair = 0;
  for (int i = 0; i < draws; ++i) {
    UCBSelection sel = ucb_select(state, rng);
    if (family.arms[static_cast<std::size_t>(sel.arm)] == (Subset{2, 3}))
      ++forced_pair;
  }
  // the pair {3,4} carries two alpha_t shares = 0.05
  double freq = static_cast<double>(forced_pair) / draws;
  EXPECT_NEAR(freq, 0.05, 3.0 * std::sqrt(0.05 * 0.95 / draws));
}

TEST(UcbSelect, AlphaZeroIsForcedOnly) {
  SuperArmFamily family = make_restricted_family(2);
  BanditInstance inst =
      make_instance(family, Eigen::VectorXd::Constant(4, 0.5));
  Rng rng(8);
  UCBState state = init_ucb(family, inst, rng, 0.0);
  EXPECT_FALSE(state.warnings.empty());
  state.means << 1.0, 0.0, 0.0, 0.0;
  state.counts = {1000, 1000, 1000, 1000};
  state.t = 50;
  for (int i = 0; i < 200; ++i) {
    UCBSelection sel = ucb_select(state, rng);
    // UCB winner {1} is also a forced set here, so it may still be drawn,
    // but only with its single forced share
    EXPECT_NEAR(sel.pi.alpha_t, 0.25, 1e-15);
    double p0 = inclusion_prob(state, sel.pi, 0);
    EXPECT_NEAR(p0, 0.25, 1e-15);  // no exploitation mass at alpha = 0
  }
}

TEST(UcbUpdate, InversePropensityAndRunningMean) {
  SuperArmFamily family = make_restricted_family(2);
  BanditInstance inst =
      make_instance(family, Eigen::VectorXd::Constant(4, 0.5));
  Rng rng(9);
  UCBState state = init_ucb(family, inst, rng, 1.0);
  state.t = 10;
  state.means << 1.0, 0.0, 0.5, 0.0;
  state.counts = {1000, 1000, 1, 1000};
  UCBPiRecord pi;
  pi.t = 10;
  pi.alpha_t = 0.025;  // 1/(4*10)
  pi.ucb_arm = 0;      // arm {0}
  ASSERT_NEAR(inclusion_prob(state, pi, 2), 0.05, 1e-15);
  Eigen::VectorXd acc_before = state.ipw_acc;
  int pair_arm = 2;  // family index of {2,3}
  ucb_update(state, pair_arm, {1.0, 0.0}, pi);
  EXPECT_NEAR(state.ipw_acc[2] - acc_before[2], 20.0, 1e-12);  // 1 / 0.05
  EXPECT_NEAR(state.ipw_acc[3] - acc_before[3], 0.0, 1e-12);
  EXPECT_EQ(state.ipw_acc[0], acc_before[0]);  // unobserved arm untouched
  EXPECT_NEAR(state.means[2], 0.75, 1e-12);    // (1*0.5 + 1)/2
  EXPECT_EQ(state.counts[2], 2);
  EXPECT_EQ(state.counts[0], 1000);
  EXPECT_EQ(state.t, 11);
}

TEST(UcbUpdate, RejectsMismatchedObservations) {
  SuperArmFamily family = make_restricted_family(2);
  BanditInstance inst =
      make_instance(family, Eigen::VectorXd::Constant(4, 0.5));
  Rng rng(10);
  UCBState state = init_ucb(family, inst, rng, 0.5);
  UCBSelection sel = ucb_select(state, rng);
  EXPECT_THROW(ucb_update(state, 2, {1.0}, sel.pi), std::invalid_argument);
  EXPECT_THROW(ucb_update(state, 99, {1.0}, sel.pi), std::invalid_argument);
}

TEST(UcbEstimates, SumsMemberAccumulators) {
  SuperArmFamily family = make_uniform_matroid(4, 2);
  BanditInstance inst =
      make_instance(family, Eigen::VectorXd::Constant(4, 0.5));
  Rng rng(11);
  UCBState state = init_ucb(family, inst, rng, 0.5);
  state.ipw_acc << 50.0, 30.0, 10.0, 10.0;
  state.t = 101;
  GapEstimates est = ucb_estimates(state, 100);
  // arms {1,2} (index 0) and {3,4} (index 5)
  EXPECT_NEAR(est.super(0, 5), 0.6, 1e-12);
  EXPECT_NEAR(est.super(5, 0), -0.6, 1e-12);
  EXPECT_EQ(est.super(0, 0), 0.0);
  EXPECT_LE((est.super + est.super.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(est.base(0, 1), 0.2, 1e-12);  // (50-30)/100
  EXPECT_THROW(ucb_estimates(state, 300), std::logic_error);
}

TEST(UcbInvariant, InclusionProbabilitiesInUnitInterval) {
  BanditInstance inst = testutil::reference_instance();
  Rng rng(12);
  UCBState state = init_ucb(inst.family, inst, rng, 0.25);
  for (long t = state.t; t <= 500; ++t) {
    UCBSelection sel = ucb_select(state, rng);
    for (int e : state.covered) {
      double p = inclusion_prob(state, sel.pi, e);
      ASSERT_GT(p, 0.0);
      ASSERT_LE(p, 1.0 + 1e-12);
    }
    Eigen::VectorXd w = sample_reward(rng, inst);
    const Subset& members = inst.family.arms[static_cast<std::size_t>(sel.arm)];
    std::vector<double> observed(members.size());
    for (std::size_t i = 0; i < members.size(); ++i) observed[i] = w[members[i]];
    ucb_update(state, sel.arm, observed, sel.pi);
  }
}

TEST(UcbInvariant, UnbiasedGapEstimates) {
  BanditInstance inst = testutil::reference_instance();
  GapTables gaps = true_gaps(inst);
  const long n = 2000;
  const int seeds = 200;
  const int K = static_cast<int>(inst.family.arms.size());
  std::vector<GapEstimates> runs;
  std::vector<Eigen::VectorXd> ipw_means;
  for (int s = 0; s < seeds; ++s) {
    UCBRun run = run_ucb(inst, n, 0.25, 40000 + s);
    runs.push_back(ucb_estimates(run.state, n));
    ipw_means.push_back(run.state.ipw_acc /
                        static_cast<double>(run.state.rounds_accumulated));
  }
  for (int i = 0; i < K; ++i)
    for (int j = i + 1; j < K; ++j) {
      std::vector<double> vals;
      for (const GapEstimates& est : runs) vals.push_back(est.super(i, j));
      auto [mean, se] = testutil::mean_se(vals);
      EXPECT_NEAR(mean, gaps.super_gap(i, j), 3.0 * se)
          << "super pair " << i << "," << j;
    }
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) {
      std::vector<double> vals;
      for (const GapEstimates& est : runs) vals.push_back(est.base(i, j));
      auto [mean, se] = testutil::mean_se(vals);
      EXPECT_NEAR(mean, gaps.base_gap(i, j), 3.0 * se)
          << "base pair " << i << "," << j;
    }
  // IPW consistency per covered base arm, normalized by accumulation rounds
  for (int e = 0; e < 4; ++e) {
    std::vector<double> vals;
    for (const Eigen::VectorXd& v : ipw_means) vals.push_back(v[e]);
    auto [mean, se] = testutil::mean_se(vals);
    EXPECT_NEAR(mean, inst.mu[e], 3.0 * se) << "base arm " << e;
  }
}

TEST(UcbInvariant, ErrorRateSlope) {
  BanditInstance inst = testutil::reference_instance();
  GapTables gaps = true_gaps(inst);
  const std::vector<long> horizons = {256, 512, 1024, 2048, 4096, 8192};
  const int seeds = 50;
  for (double alpha : {0.25, 0.5}) {
    std::vector<double> log_n, log_err;
    for (long n : horizons) {
      double mean_err = 0.0;
      for (int s = 0; s < seeds; ++s) {
        GapEstimates est =
            ucb_estimates(run_ucb(inst, n, alpha, 777 + s).state, n);
        mean_err += max_err_M(est.super, gaps.super_gap);
      }
      log_n.push_back(std::log(static_cast<double>(n)));
      log_err.push_back(std::log(mean_err / seeds));
    }
    double slope = testutil::fit_slope(log_n, log_err);
    EXPECT_NEAR(slope, (alpha - 1.0) / 2.0, 0.15) << "alpha=" << alpha;
  }
}

TEST(UcbInvariant, RegretAndErrorOrderingInAlpha) {
  // the paper-scale semi-bandit configuration: d=9, m=4, n=2000, 20 seeds
  SuperArmFamily family = make_uniform_matroid(9, 4);
  const std::vector<double> alphas = {0.0, 0.25, 0.5, 1.0};
  const int seeds = 20;
  std::vector<double> mean_regret(alphas.size(), 0.0);
  std::vector<double> mean_err(alphas.size(), 0.0);
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    for (int s = 0; s < seeds; ++s) {
      Rng inst_rng(6000 + s);
      BanditInstance inst = fresh_instance(family, inst_rng);
      GapTables gaps = true_gaps(inst);
      UCBRun run = run_ucb(inst, 2000, alphas[a], 6000 + s);
      mean_regret[a] += run.cum_regret / seeds;
      GapEstimates est = ucb_estimates(run.state, 2000);
      mean_err[a] += max_err_M(est.super, gaps.super_gap) / seeds;
    }
  }
  for (std::size_t a = 0; a + 1 < alphas.size(); ++a) {
    EXPECT_GT(mean_regret[a], mean_regret[a + 1]) << "alpha step " << a;
    EXPECT_LT(mean_err[a], mean_err[a + 1]) << "alpha step " << a;
  }
}

TEST(UcbInvariant, ConfidenceCoverage) {
  // the radii are loose: actual misses should be far below 1%
  BanditInstance inst = testutil::reference_instance();
  UCBRun run = run_ucb(inst, 2000, 0.25, 321, /*track_coverage=*/true);
  double miss_rate = static_cast<double>(run.confidence_misses) /
                     static_cast<double>(run.confidence_checks);
  EXPECT_LT(miss_rate, 0.01);
}
