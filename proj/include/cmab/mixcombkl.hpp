#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmab/geometry.hpp"
#include "cmab/instance.hpp"
#include "cmab/rng.hpp"

namespace cmab {

// Tuning constants of the full-bandit algorithm:
//   C     = lambda_min * m^{-3/2}
//   gamma = sqrt(m log 1/rho_min) /
//           (sqrt(m log 1/rho_min) + sqrt(C (C m^2 d + m) n))
//   eta   = gamma * C
struct KLParams {
  double alpha = 0.0;
  double C = 0.0;
  double gamma = 0.0;
  double eta = 0.0;
  long n = 0;
  std::vector<std::string> warnings;
};

inline KLParams kl_params(const SpectralConstants& constants,
                          const SuperArmFamily& family, long n, double alpha) {
  if (n < 1) throw std::invalid_argument("kl_params: n >= 1");
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("kl_params: alpha must lie in [0,1]");
  if (!(constants.rho_min > 0.0))
    throw std::invalid_argument("kl_params: family leaves base arms uncovered");
  if (!family.uniform_size)
    throw std::invalid_argument("kl_params: family must have uniform arm size");
  const double m = static_cast<double>(*family.uniform_size);
  const double d = static_cast<double>(family.d);
  KLParams params;
  params.alpha = alpha;
  params.n = n;
  params.C = constants.lambda_min * std::pow(m, -1.5);
  double a = std::sqrt(m * std::log(1.0 / constants.rho_min));
  double b = std::sqrt(params.C * (params.C * m * m * d + m) *
                       static_cast<double>(n));
  params.gamma = a / (a + b);
  params.eta = params.gamma * params.C;
  if (alpha > 0.5)
    params.warnings.push_back(
        "alpha=" + std::to_string(alpha) +
        " is outside [0,1/2]; the Pareto guarantee does not apply");
  return params;
}

// P(U_t = 1) = 1/(2 t^alpha): the forced uniform-exploration probability.
inline double kl_u_prob(long t, double alpha) {
  return 0.5 / std::pow(static_cast<double>(t), alpha);
}

// Projection accuracy schedule eps_t = 1/(t^2 max(1, ln t)^3).
inline double kl_projection_accuracy(long t) {
  double lt = std::max(1.0, std::log(static_cast<double>(t)));
  return 1.0 / (static_cast<double>(t) * static_cast<double>(t) * lt * lt * lt);
}

struct KLPiRecord {
  bool u_flag = false;
  double u_prob = 0.0;
  SparseArmDistribution osmd;  // sampling law of the OSMD branch (empty on
                               // forced-uniform rounds)
};

// Past this family size the super-arm accumulators are no longer
// materialized for every arm; callers name the arms they want tracked.
inline constexpr std::size_t kFullTrackingLimit = 10000;

// All mutable state of the full-bandit algorithm, owned by a single trial.
struct KLState {
  SuperArmFamily family;
  ThetaMatrix theta;
  SpectralConstants constants;
  KLParams params;
  long t = 1;                  // current round, 1-based
  Eigen::VectorXd mirror;      // q_t, a point of Q; starts at rho0
  Eigen::VectorXd acc_super;   // R_t per tracked super arm
  Eigen::VectorXd acc_base;    // R_t per estimable singleton
  std::vector<int> estimable;  // the base arms backing acc_base
  std::vector<int> tracked;    // the super arms backing acc_super
  Eigen::MatrixXd theta_tracked;    // indicator rows of the tracked arms
  SparseArmDistribution last_osmd;  // p_{t-1} of the most recent OSMD round
};

inline KLState make_kl_state(const SuperArmFamily& family, long n, double alpha,
                             std::vector<int> tracked_super = {}) {
  KLState state;
  state.family = family;
  validate_family(state.family);
  state.theta = theta_matrix(state.family);
  state.constants = spectral_constants(state.family);
  state.params = kl_params(state.constants, state.family, n, alpha);
  state.mirror = state.constants.rho0;
  const std::size_t K = state.family.arms.size();
  if (tracked_super.empty()) {
    if (K > kFullTrackingLimit)
      throw std::invalid_argument(
          "make_kl_state: family too large to track every super arm; pass the "
          "arm indices to track");
    state.tracked.resize(K);
    for (std::size_t k = 0; k < K; ++k) state.tracked[k] = static_cast<int>(k);
    state.theta_tracked = state.theta.rows;
  } else {
    for (int k : tracked_super)
      if (k < 0 || k >= static_cast<int>(K))
        throw std::invalid_argument("make_kl_state: tracked arm out of range");
    state.tracked = std::move(tracked_super);
    state.theta_tracked.resize(
        static_cast<Eigen::Index>(state.tracked.size()), state.family.d);
    for (std::size_t i = 0; i < state.tracked.size(); ++i)
      state.theta_tracked.row(static_cast<Eigen::Index>(i)) =
          state.theta.rows.row(state.tracked[i]);
  }
  state.acc_super =
      Eigen::VectorXd::Zero(static_cast<Eigen::Index>(state.tracked.size()));
  state.estimable = estimable_base_arms(state.family);
  state.acc_base =
      Eigen::VectorXd::Zero(static_cast<Eigen::Index>(state.estimable.size()));
  return state;
}

struct KLSelection {
  int arm = -1;
  bool u_flag = false;
  KLPiRecord pi;
};

inline int sample_sparse(const SparseArmDistribution& dist, Rng& rng) {
  double u = rng.uniform();
  double acc = 0.0;
  for (const auto& [idx, w] : dist.pairs) {
    acc += w;
    if (u < acc) return idx;
  }
  return dist.pairs.back().first;
}

// One arm draw. With probability 1/(2 t^alpha) the arm is uniform over the
// family; otherwise the mirror point is gamma-mixed with rho0, scaled by m,
// decomposed into a sparse arm law p_{t-1}, and sampled.
inline KLSelection kl_select(KLState& state, Rng& rng) {
  KLSelection sel;
  sel.pi.u_prob = kl_u_prob(state.t, state.params.alpha);
  sel.u_flag = rng.bernoulli(sel.pi.u_prob);
  sel.pi.u_flag = sel.u_flag;
  if (sel.u_flag) {
    sel.arm = static_cast<int>(rng.uniform_int(state.family.arms.size()));
  } else {
    const double m = static_cast<double>(*state.family.uniform_size);
    Eigen::VectorXd mixed = (1.0 - state.params.gamma) * state.mirror +
                            state.params.gamma * state.constants.rho0;
    state.last_osmd = decompose(state.family, m * mixed);
    sel.pi.osmd = state.last_osmd;
    sel.arm = sample_sparse(state.last_osmd, rng);
  }
  return sel;
}

// One state update from the observed aggregate reward.
//
// Forced rounds feed the inverse-propensity accumulators, using the fixed
// uniform-law pseudo-inverse (that law is what makes the estimator unbiased);
// the mirror point is untouched. OSMD rounds run the exponentiated-gradient
// step with the covariance of the round's own sampling law p_{t-1}, then
// project back onto Q; the accumulators are untouched.
inline void kl_update(KLState& state, double observed_total, int arm,
                      bool u_flag) {
  const double m = static_cast<double>(*state.family.uniform_size);
  if (!(observed_total >= -1e-12 && observed_total <= m + 1e-12))
    throw std::invalid_argument("kl_update: observed total outside [0, m]");
  if (arm < 0 || arm >= static_cast<int>(state.family.arms.size()))
    throw std::invalid_argument("kl_update: arm index out of range");
  const Eigen::VectorXd theta_arm = state.theta.rows.row(arm).transpose();

  if (u_flag) {
    Eigen::VectorXd w_tilde =
        observed_total * (state.constants.sigma_unif_pinv * theta_arm);
    double factor =
        2.0 * std::pow(static_cast<double>(state.t), state.params.alpha);
    state.acc_super += factor * (state.theta_tracked * w_tilde);
    for (std::size_t l = 0; l < state.estimable.size(); ++l)
      state.acc_base[static_cast<Eigen::Index>(l)] +=
          factor * w_tilde[state.estimable[l]];
  } else {
    Eigen::MatrixXd sigma = covariance(state.last_osmd, state.family);
    Eigen::VectorXd w_tilde = observed_total * (pseudo_inverse(sigma) * theta_arm);
    Eigen::VectorXd scaled =
        state.mirror.array() * (state.params.eta * w_tilde).array().exp();
    Eigen::VectorXd q_tilde = scaled / scaled.sum();
    Eigen::VectorXd projected =
        kl_project(state.family, q_tilde, kl_projection_accuracy(state.t));
    // nudge toward rho0 so the mirror point stays strictly positive; the
    // convex mix stays inside Q exactly
    state.mirror = (1.0 - 1e-13) * projected + 1e-13 * state.constants.rho0;
  }
  ++state.t;
}

// Gap estimates after the full horizon: pairwise accumulator differences
// over n. Antisymmetric by construction.
inline GapEstimates kl_estimates_partial(const KLState& state, long rounds) {
  GapEstimates est;
  const double n = static_cast<double>(rounds);
  Eigen::VectorXd s = state.acc_super / n;
  Eigen::VectorXd b = state.acc_base / n;
  est.super = s.replicate(1, s.size()) - s.transpose().replicate(s.size(), 1);
  est.base = b.replicate(1, b.size()) - b.transpose().replicate(b.size(), 1);
  est.base_arms = state.estimable;
  est.super_arms = state.tracked;
  return est;
}

inline GapEstimates kl_estimates(const KLState& state, long n) {
  if (state.t != n + 1)
    throw std::logic_error("kl_estimates: horizon not reached");
  return kl_estimates_partial(state, n);
}

}  // namespace cmab
