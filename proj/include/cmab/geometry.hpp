#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmab/instance.hpp"

namespace cmab {

// Relative eigenvalue cutoff below which a spectrum entry is treated as zero.
inline constexpr double kEigenZeroCutoff = 1e-10;
// Tolerance of the singleton-in-row-span rank test.
inline constexpr double kSpanTolerance = 1e-8;

struct DecompositionError : std::runtime_error {
  double residual;
  explicit DecompositionError(double r)
      : std::runtime_error("decomposition failed, residual " +
                           std::to_string(r)),
        residual(r) {}
};

struct SolverError : std::runtime_error {
  double gap;
  explicit SolverError(double g)
      : std::runtime_error("projection did not converge, optimality gap " +
                           std::to_string(g)),
        gap(g) {}
};

// Indicator vector of a super arm: coordinate e is 1 iff e is a member.
inline Eigen::VectorXd vectorize(const Subset& arm, int d) {
  if (arm.empty()) throw std::invalid_argument("vectorize: empty arm");
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(d);
  for (int e : arm) {
    if (e < 0 || e >= d)
      throw std::invalid_argument("vectorize: member out of range");
    theta[e] = 1.0;
  }
  return theta;
}

// One indicator row per arm; m set when the family has uniform arm size.
struct ThetaMatrix {
  Eigen::MatrixXd rows;  // |M| x d
  std::optional<int> m;
};

inline ThetaMatrix theta_matrix(const SuperArmFamily& family) {
  ThetaMatrix theta;
  theta.rows = Eigen::MatrixXd::Zero(
      static_cast<Eigen::Index>(family.arms.size()), family.d);
  for (Eigen::Index k = 0; k < theta.rows.rows(); ++k)
    for (int e : family.arms[static_cast<std::size_t>(k)]) theta.rows(k, e) = 1.0;
  theta.m = family.uniform_size;
  return theta;
}

// Second-moment matrix sum_M p(M) theta_M theta_M^T of the arm law p.
inline Eigen::MatrixXd covariance(const Eigen::VectorXd& weights,
                                  const ThetaMatrix& theta) {
  if (weights.size() != theta.rows.rows())
    throw std::invalid_argument("covariance: weight count mismatch");
  if (weights.minCoeff() < -1e-12)
    throw std::invalid_argument("covariance: negative weight");
  if (std::abs(weights.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("covariance: weights must sum to 1");
  return theta.rows.transpose() * weights.asDiagonal() * theta.rows;
}

// Distribution over arms with small support; the decomposition output.
struct SparseArmDistribution {
  std::vector<std::pair<int, double>> pairs;  // (arm index, weight > 0)
};

inline Eigen::MatrixXd covariance(const SparseArmDistribution& dist,
                                  const SuperArmFamily& family) {
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(family.d, family.d);
  double total = 0.0;
  for (const auto& [idx, w] : dist.pairs) {
    const Subset& arm = family.arms[static_cast<std::size_t>(idx)];
    for (int a : arm)
      for (int b : arm) sigma(a, b) += w;
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("covariance: weights must sum to 1");
  return sigma;
}

// Moore-Penrose pseudo-inverse of a symmetric PSD matrix via symmetric
// eigendecomposition; eigenvalues below kEigenZeroCutoff * lambda_max count
// as zero.
inline Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& sigma) {
  if (sigma.rows() != sigma.cols() ||
      (sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw std::invalid_argument("pseudo_inverse: matrix not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma);
  const Eigen::VectorXd& ev = eig.eigenvalues();
  double cutoff = kEigenZeroCutoff * ev.cwiseAbs().maxCoeff();
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev[i] > cutoff) inv[i] = 1.0 / ev[i];
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

// Problem constants induced by the uniform law over arms:
//   lambda_min      smallest nonzero eigenvalue of E[theta theta^T]
//   rho0            base-arm distribution of a uniformly drawn arm's members
//   rho_min         min over base arms of the coverage probability P(e in M)
//                   (equals min_e m * rho0(e) for uniform arm size)
//   sigma_unif_pinv pseudo-inverse of the uniform-law second moment
struct SpectralConstants {
  double lambda_min = 0.0;
  Eigen::VectorXd rho0;
  double rho_min = 0.0;
  Eigen::MatrixXd sigma_unif_pinv;
};

inline SpectralConstants spectral_constants(const SuperArmFamily& family) {
  if (family.arms.empty())
    throw std::invalid_argument("spectral_constants: empty family");
  ThetaMatrix theta = theta_matrix(family);
  const double K = static_cast<double>(family.arms.size());
  Eigen::MatrixXd sigma = theta.rows.transpose() * theta.rows / K;

  SpectralConstants out;
  Eigen::VectorXd coverage = theta.rows.colwise().sum() / K;  // P(e in M)
  out.rho0 = coverage / coverage.sum();
  out.rho_min = coverage.minCoeff();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma);
  const Eigen::VectorXd& ev = eig.eigenvalues();
  double cutoff = kEigenZeroCutoff * ev.cwiseAbs().maxCoeff();
  out.lambda_min = std::numeric_limits<double>::infinity();
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] > cutoff) {
      out.lambda_min = std::min(out.lambda_min, ev[i]);
      inv[i] = 1.0 / ev[i];
    }
  }
  out.sigma_unif_pinv =
      eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
  return out;
}

// Base arms whose singleton indicator lies in the row span of the theta
// matrix; only these have identifiable rewards under full-bandit feedback.
inline std::vector<int> estimable_base_arms(const SuperArmFamily& family) {
  ThetaMatrix theta = theta_matrix(family);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(theta.rows.transpose());
  qr.setThreshold(kSpanTolerance);
  Eigen::Index rank = qr.rank();
  Eigen::MatrixXd basis =
      qr.householderQ() * Eigen::MatrixXd::Identity(family.d, rank);
  std::vector<int> out;
  for (int e = 0; e < family.d; ++e) {
    Eigen::VectorXd unit = Eigen::VectorXd::Unit(family.d, e);
    double residual = (unit - basis * (basis.transpose() * unit)).norm();
    if (residual <= kSpanTolerance) out.push_back(e);
  }
  return out;
}

// Carathéodory decomposition by vertex peeling. target must satisfy
// sum(target) = m and 0 <= target <= 1, and lie in Co(theta); on the
// complete uniform matroid those box-and-sum conditions are exactly
// Co(theta), so the greedy always terminates within d+1 vertices. Other
// families are attempted with the same rule and rejected through the
// residual check when it fails.
inline SparseArmDistribution decompose(const SuperArmFamily& family,
                                       const Eigen::VectorXd& target) {
  if (!family.uniform_size)
    throw std::invalid_argument("decompose: family must have uniform arm size");
  const int m = *family.uniform_size;
  const int d = family.d;
  if (target.size() != d)
    throw std::invalid_argument("decompose: target dimension mismatch");
  if (target.minCoeff() < -1e-9 || target.maxCoeff() > 1.0 + 1e-9)
    throw std::invalid_argument("decompose: target outside [0,1]^d");
  if (std::abs(target.sum() - m) > 1e-9)
    throw std::invalid_argument("decompose: target must sum to m");

  Eigen::VectorXd r = target;
  double remaining = 1.0;
  std::vector<double> weight_by_arm(family.arms.size(), 0.0);

  for (int step = 0; step <= d + 1 && remaining > 1e-13; ++step) {
    // keep the residual inside remaining * [0,1]^d against rounding drift
    for (int e = 0; e < d; ++e)
      r[e] = std::clamp(r[e], 0.0, remaining);
    int idx = solve_oracle(family, r).index;
    const Subset& arm = family.arms[static_cast<std::size_t>(idx)];
    double w_in = remaining;
    for (int e : arm) w_in = std::min(w_in, r[e]);
    double max_out = 0.0;
    std::vector<bool> member(d, false);
    for (int e : arm) member[e] = true;
    for (int e = 0; e < d; ++e)
      if (!member[e]) max_out = std::max(max_out, r[e]);
    double w = std::min(w_in, remaining - max_out);
    if (w <= 1e-13) break;  // stalled: target not reachable by this rule
    weight_by_arm[static_cast<std::size_t>(idx)] += w;
    for (int e : arm) r[e] -= w;
    remaining -= w;
  }

  SparseArmDistribution dist;
  double total = 0.0;
  for (std::size_t k = 0; k < weight_by_arm.size(); ++k)
    if (weight_by_arm[k] > 0.0) {
      dist.pairs.emplace_back(static_cast<int>(k), weight_by_arm[k]);
      total += weight_by_arm[k];
    }
  if (total <= 0.0) throw DecompositionError(target.cwiseAbs().maxCoeff());
  Eigen::VectorXd recon = Eigen::VectorXd::Zero(d);
  for (auto& [idx, w] : dist.pairs) {
    w /= total;
    for (int e : family.arms[static_cast<std::size_t>(idx)]) recon[e] += w;
  }
  double residual = (recon - target).cwiseAbs().maxCoeff();
  if (residual > 1e-9 || dist.pairs.size() > static_cast<std::size_t>(d) + 1)
    throw DecompositionError(residual);
  return dist;
}

// KL(p, q) = sum_e p(e) log(p(e)/q(e)), with 0 log 0 = 0.
inline double kl_divergence(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  double out = 0.0;
  for (Eigen::Index e = 0; e < p.size(); ++e) {
    if (p[e] <= 0.0) continue;
    if (q[e] <= 0.0) return std::numeric_limits<double>::infinity();
    out += p[e] * std::log(p[e] / q[e]);
  }
  return out;
}

namespace detail {

// Closed-form KL projection onto {p in simplex : p <= 1/m}: scale q_tilde
// and cap at 1/m, choosing the capped set by the KKT conditions. Exact up to
// rounding, so the eps contract is met with eps = 0.
inline Eigen::VectorXd kl_project_water_filling(const Eigen::VectorXd& q_tilde,
                                                int m) {
  const Eigen::Index d = q_tilde.size();
  const double cap = 1.0 / m;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return q_tilde[a] > q_tilde[b] || (q_tilde[a] == q_tilde[b] && a < b);
  });
  // suffix sums from the small end; a running subtraction would cancel
  // catastrophically once the distribution concentrates
  std::vector<double> tail(static_cast<std::size_t>(d) + 1, 0.0);
  for (Eigen::Index k = d - 1; k >= 0; --k)
    tail[static_cast<std::size_t>(k)] =
        tail[static_cast<std::size_t>(k) + 1] +
        q_tilde[order[static_cast<std::size_t>(k)]];
  const double tol = 1e-12 * cap;
  for (Eigen::Index capped = 0; capped < d; ++capped) {
    double c = (1.0 - static_cast<double>(capped) * cap) /
               tail[static_cast<std::size_t>(capped)];
    if (c * q_tilde[order[static_cast<std::size_t>(capped)]] > cap + tol)
      continue;
    if (capped > 0 &&
        c * q_tilde[order[static_cast<std::size_t>(capped) - 1]] < cap - tol)
      continue;
    Eigen::VectorXd p(d);
    for (Eigen::Index e = 0; e < d; ++e) p[e] = std::min(c * q_tilde[e], cap);
    for (Eigen::Index k = 0; k < capped; ++k)
      p[order[static_cast<std::size_t>(k)]] = cap;
    return p;
  }
  // fallback: bisect the scale on g(c) = sum_e min(c q_tilde_e, cap) = 1
  double lo = 0.0, hi = cap / q_tilde.minCoeff();
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    double g = 0.0;
    for (Eigen::Index e = 0; e < d; ++e) g += std::min(mid * q_tilde[e], cap);
    (g < 1.0 ? lo : hi) = mid;
  }
  double c = 0.5 * (lo + hi);
  Eigen::VectorXd p(d);
  for (Eigen::Index e = 0; e < d; ++e) p[e] = std::min(c * q_tilde[e], cap);
  return p / p.sum();
}

// Away-step Frank-Wolfe for min_{p in Co(theta)/m} KL(p, q_tilde) on
// families without the closed form. The linear subproblem is one oracle
// call; the Frank-Wolfe duality gap is the stopping certificate.
inline Eigen::VectorXd kl_project_frank_wolfe(const SuperArmFamily& family,
                                              const Eigen::VectorXd& q_tilde,
                                              double eps,
                                              long max_iters = 200000) {
  if (!family.uniform_size)
    throw std::invalid_argument("kl_project: family must have uniform arm size");
  const double m = static_cast<double>(*family.uniform_size);
  const int d = family.d;
  const int K = static_cast<int>(family.arms.size());

  std::vector<double> w(static_cast<std::size_t>(K), 1.0 / K);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(d);
  for (int k = 0; k < K; ++k)
    for (int e : family.arms[static_cast<std::size_t>(k)]) p[e] += w[k] / m;

  auto grad_at = [&](const Eigen::VectorXd& point) {
    Eigen::VectorXd g(d);
    for (int e = 0; e < d; ++e)
      g[e] = q_tilde[e] > 0.0
                 ? std::log(std::max(point[e], 1e-300) / q_tilde[e]) + 1.0
                 : 0.0;
    return g;
  };
  auto arm_dot = [&](const Eigen::VectorXd& v, int k) {
    double s = 0.0;
    for (int e : family.arms[static_cast<std::size_t>(k)]) s += v[e];
    return s / m;
  };

  double gap = std::numeric_limits<double>::infinity();
  for (long iter = 0; iter < max_iters; ++iter) {
    Eigen::VectorXd grad = grad_at(p);
    int fw_idx = solve_oracle(family, -grad).index;
    gap = grad.dot(p) - arm_dot(grad, fw_idx);
    if (gap <= eps) break;

    int away_idx = -1;
    double away_val = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k)
      if (w[static_cast<std::size_t>(k)] > 0.0 && arm_dot(grad, k) > away_val) {
        away_val = arm_dot(grad, k);
        away_idx = k;
      }

    bool use_away = away_idx >= 0 &&
                    away_val - grad.dot(p) > gap &&
                    w[static_cast<std::size_t>(away_idx)] < 1.0 - 1e-15;
    Eigen::VectorXd dir;
    double gamma_max;
    if (use_away) {
      dir = p - vectorize(family.arms[static_cast<std::size_t>(away_idx)], d) / m;
      double wa = w[static_cast<std::size_t>(away_idx)];
      gamma_max = wa / (1.0 - wa);
    } else {
      dir = vectorize(family.arms[static_cast<std::size_t>(fw_idx)], d) / m - p;
      gamma_max = 1.0;
    }

    // exact line search: bisect the monotone directional derivative
    auto dphi = [&](double gamma) {
      double s = 0.0;
      for (int e = 0; e < d; ++e) {
        if (dir[e] == 0.0 || q_tilde[e] <= 0.0) continue;
        double pe = std::max(p[e] + gamma * dir[e], 1e-300);
        s += dir[e] * (std::log(pe / q_tilde[e]) + 1.0);
      }
      return s;
    };
    double gamma = gamma_max;
    if (dphi(gamma_max) > 0.0) {
      double lo = 0.0, hi = gamma_max;
      for (int it = 0; it < 80; ++it) {
        double mid = 0.5 * (lo + hi);
        (dphi(mid) <= 0.0 ? lo : hi) = mid;
      }
      gamma = 0.5 * (lo + hi);
    }
    if (gamma <= 0.0) break;

    p += gamma * dir;
    if (use_away) {
      for (double& wk : w) wk *= 1.0 + gamma;
      w[static_cast<std::size_t>(away_idx)] -= gamma;
      w[static_cast<std::size_t>(away_idx)] =
          std::max(w[static_cast<std::size_t>(away_idx)], 0.0);
    } else {
      for (double& wk : w) wk *= 1.0 - gamma;
      w[static_cast<std::size_t>(fw_idx)] += gamma;
    }
    if ((iter & 0xFF) == 0xFF) {  // periodic re-sync against drift
      p.setZero();
      for (int k = 0; k < K; ++k)
        for (int e : family.arms[static_cast<std::size_t>(k)])
          p[e] += w[static_cast<std::size_t>(k)] / m;
    }
  }
  if (gap > eps) throw SolverError(gap);
  return p;
}

}  // namespace detail

// KL projection of q_tilde onto Q = Co(theta)/m, solved to within eps of the
// optimal divergence. The complete uniform matroid uses the exact
// water-filling form; other families use away-step Frank-Wolfe.
inline Eigen::VectorXd kl_project(const SuperArmFamily& family,
                                  const Eigen::VectorXd& q_tilde, double eps) {
  if (q_tilde.size() != family.d)
    throw std::invalid_argument("kl_project: dimension mismatch");
  if (!(eps > 0.0) && !is_complete_uniform_matroid(family))
    throw std::invalid_argument("kl_project: eps must be positive");
  if (std::abs(q_tilde.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("kl_project: q_tilde must sum to 1");
  std::vector<bool> covered(static_cast<std::size_t>(family.d), false);
  for (const Subset& arm : family.arms)
    for (int e : arm) covered[static_cast<std::size_t>(e)] = true;
  for (int e = 0; e < family.d; ++e) {
    if (q_tilde[e] < 0.0 || (covered[static_cast<std::size_t>(e)] && q_tilde[e] <= 0.0))
      throw std::invalid_argument("kl_project: q_tilde must be positive");
  }
  Eigen::VectorXd q = q_tilde / q_tilde.sum();
  if (is_complete_uniform_matroid(family))
    return detail::kl_project_water_filling(q, *family.uniform_size);
  return detail::kl_project_frank_wolfe(family, q, eps);
}

}  // namespace cmab
