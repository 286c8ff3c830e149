#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "cmab/instance.hpp"

namespace cmab {

// Per-checkpoint metric row of one trial.
struct Checkpoint {
  long t = 0;
  double cum_regret = 0.0;
  double mse_mu = 0.0;
  double mse_M = 0.0;
  double max_err_mu = 0.0;
  double max_err_M = 0.0;
  double pareto_product = 0.0;
};

// Cumulative pseudo-regret of a trace of realized arm choices: the sum of
// true optimality gaps, not realized reward differences.
inline double regret(const std::vector<int>& trace, const GapTables& gaps) {
  double out = 0.0;
  for (int arm : trace) {
    if (arm < 0 || arm >= gaps.opt_gap.size())
      throw std::invalid_argument("regret: arm index out of range");
    out += gaps.opt_gap[arm];
  }
  return out;
}

namespace detail {

inline void check_tables(const Eigen::MatrixXd& est,
                         const Eigen::MatrixXd& truth) {
  if (est.rows() != est.cols() || est.rows() != truth.rows() ||
      est.cols() != truth.cols())
    throw std::invalid_argument("gap tables: dimension mismatch");
}

inline double mse_pairwise(const Eigen::MatrixXd& est,
                           const Eigen::MatrixXd& truth) {
  check_tables(est, truth);
  const Eigen::Index K = est.rows();
  if (K < 2) return 0.0;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < K; ++i)
    for (Eigen::Index j = i + 1; j < K; ++j) {
      double err = est(i, j) - truth(i, j);
      sum += err * err;
    }
  return 2.0 * sum / (static_cast<double>(K) * static_cast<double>(K - 1));
}

inline double max_err_pairwise(const Eigen::MatrixXd& est,
                               const Eigen::MatrixXd& truth) {
  check_tables(est, truth);
  const Eigen::Index K = est.rows();
  double out = 0.0;
  for (Eigen::Index i = 0; i < K; ++i)
    for (Eigen::Index j = i + 1; j < K; ++j)
      out = std::max(out, std::abs(est(i, j) - truth(i, j)));
  return out;
}

}  // namespace detail

// MSE_mu = 2/(K(K-1)) sum_{i<j} (est - truth)^2 over the estimable base-arm
// pairs. When only a subset of base arms is estimable, K is that subset's
// size (unestimable gaps are undefined, not zero-error).
inline double mse_mu(const Eigen::MatrixXd& est, const Eigen::MatrixXd& truth) {
  return detail::mse_pairwise(est, truth);
}

// Same formula over super-arm pairs, K = |M|.
inline double mse_M(const Eigen::MatrixXd& est, const Eigen::MatrixXd& truth) {
  return detail::mse_pairwise(est, truth);
}

inline double max_err_mu(const Eigen::MatrixXd& est,
                         const Eigen::MatrixXd& truth) {
  return detail::max_err_pairwise(est, truth);
}

inline double max_err_M(const Eigen::MatrixXd& est,
                        const Eigen::MatrixXd& truth) {
  return detail::max_err_pairwise(est, truth);
}

// The Pareto diagnostic: (max pairwise estimation error) * sqrt(regret).
// Constant order over n exactly when the policy/estimator pair is efficient.
inline double pareto_product(double max_err, double regret_value) {
  if (max_err < 0.0 || regret_value < 0.0)
    throw std::invalid_argument("pareto_product: arguments must be >= 0");
  return max_err * std::sqrt(regret_value);
}

// True base-arm gap table restricted to an estimable subset, aligned with a
// GapEstimates::base table.
inline Eigen::MatrixXd base_truth_subset(const GapTables& gaps,
                                         const std::vector<int>& base_arms) {
  const auto K = static_cast<Eigen::Index>(base_arms.size());
  Eigen::MatrixXd out(K, K);
  for (Eigen::Index i = 0; i < K; ++i)
    for (Eigen::Index j = 0; j < K; ++j)
      out(i, j) = gaps.base_gap(base_arms[static_cast<std::size_t>(i)],
                                base_arms[static_cast<std::size_t>(j)]);
  return out;
}

// True super-arm gap table restricted to a tracked subset, aligned with a
// GapEstimates::super table.
inline Eigen::MatrixXd super_truth_subset(const GapTables& gaps,
                                          const std::vector<int>& super_arms) {
  const auto K = static_cast<Eigen::Index>(super_arms.size());
  Eigen::MatrixXd out(K, K);
  for (Eigen::Index i = 0; i < K; ++i)
    for (Eigen::Index j = 0; j < K; ++j)
      out(i, j) = gaps.super_gap(super_arms[static_cast<std::size_t>(i)],
                                 super_arms[static_cast<std::size_t>(j)]);
  return out;
}

}  // namespace cmab
