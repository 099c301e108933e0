#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rsr/combinatorics.hpp"
#include "rsr/errors.hpp"
#include "rsr/model.hpp"
#include "rsr/support_uncertainty.hpp"

namespace rsr {

// Euclidean prior region ||x - center|| <= radius; its diameter 2*radius is
// what enters the constrained-reconstruction bound.
struct BallConstraint {
  Vector center;
  double radius = 0.0;

  BallConstraint(Vector c, double rho) : center(std::move(c)), radius(rho) {
    if (!(radius > 0.0)) throw InvalidInput("BallConstraint: radius must be positive");
  }
};

struct ReconResult {
  Vector x_hat;
  double residual_norm = 0.0;
  SupportSet active_rows;
  std::optional<double> bound;
  bool on_boundary = false;
};

inline double bound_thm1(double eps, double sigma) {
  if (!(sigma > 0.0)) throw InvalidInput("bound_thm1: sigma must be positive");
  if (eps < 0.0) throw InvalidInput("bound_thm1: negative eps");
  return 2.0 * eps / sigma;
}

inline double bound_cor1(double delta, double eps, double delta_n) {
  if (!(delta > 0.0)) throw InvalidInput("bound_cor1: delta must be positive");
  if (eps < 0.0) throw InvalidInput("bound_cor1: negative eps");
  if (!(delta_n >= 0.0 && delta_n < 1.0))
    throw InvalidInput("bound_cor1: delta_n must lie in [0, 1)");
  return 2.0 * std::min(delta / 2.0, eps / (1.0 - delta_n));
}

namespace detail {

constexpr double kRankTolRel = 1e-10;

struct BallLsSolution {
  Vector x;
  bool on_boundary = false;
  double lambda = 0.0;
};

// Exact minimizer of ||b - A x||^2 over ||x - center|| <= radius.
//
// Working in the SVD basis A = U S V', the regularized solution
//   x(lambda) = (A'A + lambda I)^{-1} (A'b + lambda center)
// has offset components (x(lambda) - center)_i = d_i / (s_i^2 + lambda) with
// d = V'(A'b) - S^2 V'center, so ||x(lambda) - center|| is strictly
// decreasing in lambda. If the unconstrained solution set already meets the
// ball (taking the point of that set nearest the center), it is returned;
// otherwise the radius equation is solved by safeguarded bisection.
inline BallLsSolution ball_constrained_ls(const Matrix& A, const Vector& b,
                                          const Vector& center, double radius) {
  const int n = static_cast<int>(A.cols());
  if (b.size() != A.rows())
    throw InvalidInput("ball_constrained_ls: rhs length mismatch");
  if (center.size() != n)
    throw InvalidInput("ball_constrained_ls: center length mismatch");

  Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeFullV);
  const Matrix& V = svd.matrixV();  // n x n
  const Vector& sv = svd.singularValues();
  Vector sig2 = Vector::Zero(n);
  for (int i = 0; i < sv.size(); ++i) sig2(i) = sv(i) * sv(i);
  const double sig_max = sv.size() > 0 ? sv(0) : 0.0;
  const double rank_tol = kRankTolRel * sig_max;

  const Vector btld = V.transpose() * (A.transpose() * b);
  const Vector ctld = V.transpose() * center;
  Vector d(n);
  for (int i = 0; i < n; ++i) d(i) = btld(i) - sig2(i) * ctld(i);

  // Nearest point of the unconstrained solution set to the center.
  Vector w = Vector::Zero(n);
  for (int i = 0; i < n; ++i)
    if (i < sv.size() && sv(i) > rank_tol) w(i) = d(i) / sig2(i);
  if (w.norm() <= radius) return {center + V * w, false, 0.0};

  const auto offset_norm = [&](double lambda) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      const double t = d(i) / (sig2(i) + lambda);
      s += t * t;
    }
    return std::sqrt(s);
  };

  const double tol = 1e-10 * std::max(1.0, radius);
  double hi = std::max(1.0, sig_max * sig_max);
  int grow = 0;
  while (offset_norm(hi) > radius) {
    hi *= 2.0;
    if (++grow > 200)
      throw NumericError(
          "ball_constrained_ls: failed to bracket the radius equation "
          "(offset at lambda=" +
          std::to_string(hi) + " is " + std::to_string(offset_norm(hi)) + ")");
  }
  double lo = 0.0;
  double lambda = hi;
  bool converged = false;
  for (int it = 0; it < 200; ++it) {
    lambda = 0.5 * (lo + hi);
    const double nrm = offset_norm(lambda);
    if (std::abs(nrm - radius) <= tol) {
      converged = true;
      break;
    }
    if (nrm > radius)
      lo = lambda;
    else
      hi = lambda;
  }
  if (!converged)
    throw NumericError(
        "ball_constrained_ls: radius equation not solved after 200 "
        "bisections; bracket [" +
        std::to_string(lo) + ", " + std::to_string(hi) + "], gap " +
        std::to_string(offset_norm(lambda) - radius));

  Vector u(n);
  for (int i = 0; i < n; ++i) u(i) = d(i) / (sig2(i) + lambda);
  return {center + V * u, true, lambda};
}

}  // namespace detail

// Plain least squares on the selected rows. Requires a full-column-rank
// selection; on success the Theorem-1 style bound 2*eps/sigma_min rides along.
inline ReconResult ls_reconstruct(const Vector& y,
                                  const MeasurementModel& model,
                                  const SupportSet& safe) {
  const int n = model.n();
  if (y.size() != model.m())
    throw InvalidInput("ls_reconstruct: measurement length mismatch");
  if (safe.size() < n)
    throw InvalidInput("ls_reconstruct: selection keeps " +
                       std::to_string(safe.size()) + " rows but needs at least " +
                       std::to_string(n));
  const Matrix Cs = row_select(model.C, safe);
  const Vector ys = row_select(y, safe);
  Eigen::JacobiSVD<Matrix> svd(Cs, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double sigma_min = sv(sv.size() - 1);
  if (!(sigma_min > detail::kRankTolRel * sv(0)))
    throw RankDeficient("ls_reconstruct: selected rows are rank deficient "
                        "(sigma_min = " + std::to_string(sigma_min) + ")",
                        sigma_min);
  ReconResult out;
  out.x_hat = svd.solve(ys);
  out.residual_norm = (ys - Cs * out.x_hat).norm();
  out.active_rows = safe;
  out.bound = bound_thm1(model.noise_bound, sigma_min);
  out.on_boundary = false;
  return out;
}

// Ball-constrained least squares. Rank deficiency is allowed; the ball keeps
// the answer bounded regardless of what the selection lost.
inline ReconResult constrained_ls(const Vector& y,
                                  const MeasurementModel& model,
                                  const SupportSet& safe,
                                  const BallConstraint& ball) {
  if (y.size() != model.m())
    throw InvalidInput("constrained_ls: measurement length mismatch");
  if (safe.size() < 1)
    throw InvalidInput("constrained_ls: selection must keep at least one row");
  if (ball.center.size() != model.n())
    throw InvalidInput("constrained_ls: ball center dimension mismatch");
  const Matrix Cs = row_select(model.C, safe);
  const Vector ys = row_select(y, safe);
  const auto sol = detail::ball_constrained_ls(Cs, ys, ball.center, ball.radius);
  ReconResult out;
  out.x_hat = sol.x;
  out.residual_norm = (ys - Cs * out.x_hat).norm();
  out.active_rows = safe;
  out.on_boundary = sol.on_boundary;
  return out;
}

// Exact S-restricted isometry constant by enumerating every column subset of
// size <= S: delta_S = max over subsets of max(lmax(G)-1, 1-lmin(G)).
inline double rip_constant(const Matrix& M, int S) {
  const int cols = static_cast<int>(M.cols());
  if (S < 1 || S > cols)
    throw InvalidInput("rip_constant: S must lie in {1,...," +
                       std::to_string(cols) + "}");
  double total = 0.0;
  for (int k = 1; k <= S; ++k) total += subset_count(cols, k);
  if (total > 2e6)
    throw BudgetExceeded("rip_constant: " + std::to_string(total) +
                         " column subsets exceed the 2e6 enumeration guard");

  const Matrix gram = M.transpose() * M;
  double delta = 0.0;
  for (int k = 1; k <= S; ++k) {
    Matrix G(k, k);
    for_each_combination(cols, k, [&](const std::vector<int>& T) {
      for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b) G(a, b) = gram(T[a], T[b]);
      Eigen::SelfAdjointEigenSolver<Matrix> es(G, Eigen::EigenvaluesOnly);
      delta = std::max({delta, es.eigenvalues().maxCoeff() - 1.0,
                        1.0 - es.eigenvalues().minCoeff()});
      return true;
    });
  }
  return delta;
}

struct SparseRecovery {
  Vector x_hat;
  Vector e_hat;
  Vector v_hat;
  SupportSet support;
  double residual_norm = 0.0;
};

// Brute-force oracle for the sparsest-attack reconstruction: smallest k such
// that deleting some k rows leaves a least-squares residual within the noise
// bound. Ties at equal k break by smaller residual, then by lexicographic
// support (the enumeration order).
inline SparseRecovery sparse_recover_bruteforce(const Vector& y,
                                                const MeasurementModel& model,
                                                int q_max,
                                                double feas_tol = 1e-9) {
  const int m = model.m();
  if (y.size() != m)
    throw InvalidInput("sparse_recover_bruteforce: measurement length mismatch");
  if (q_max < 0 || q_max >= m)
    throw InvalidInput("sparse_recover_bruteforce: q_max must lie in [0, m)");
  double total = 0.0;
  for (int k = 0; k <= q_max; ++k) total += subset_count(m, k);
  if (total > 1e6)
    throw BudgetExceeded("sparse_recover_bruteforce: " + std::to_string(total) +
                         " supports exceed the 1e6 enumeration guard");

  for (int k = 0; k <= q_max; ++k) {
    bool found = false;
    double best_res = std::numeric_limits<double>::infinity();
    std::vector<int> best_T;
    Vector best_x;
    for_each_combination(m, k, [&](const std::vector<int>& T) {
      const SupportSet attacked(T, m);
      const SupportSet kept = attacked.complement();
      const Matrix Ck = row_select(model.C, kept);
      const Vector yk = row_select(y, kept);
      Eigen::JacobiSVD<Matrix> svd(Ck,
                                   Eigen::ComputeThinU | Eigen::ComputeThinV);
      const Vector x = svd.solve(yk);
      const double res = (yk - Ck * x).norm();
      if (res <= model.noise_bound + feas_tol && res < best_res) {
        best_res = res;
        best_T = T;
        best_x = x;
        found = true;
      }
      return true;
    });
    if (found) {
      SparseRecovery out;
      out.x_hat = best_x;
      out.support = SupportSet(best_T, m);
      out.e_hat = Vector::Zero(m);
      const Vector clean = model.C * best_x;
      for (int i : out.support.indices()) out.e_hat(i) = y(i) - clean(i);
      out.v_hat = y - clean - out.e_hat;
      out.residual_norm = best_res;
      return out;
    }
  }
  throw Infeasible(
      "sparse_recover_bruteforce: no support of size <= " +
      std::to_string(q_max) + " explains the data within the noise bound");
}

struct OracleReconOptions {
  SupportMode support_mode = SupportMode::ranked_conservative;
  LEtaIndexing indexing = LEtaIndexing::exact_tail;
  // n-restricted isometry constant of C', if the caller precomputed it.
  std::optional<double> delta_n;
};

// Full pipeline: reliability integer from the oracle statistics, robust
// support, ball-constrained solve, and the constrained-reconstruction bound.
// When delta_n >= 1 the isometry term gives no guarantee and the bound falls
// back to the ball diameter, which feasibility alone always delivers.
inline ReconResult reconstruct_with_oracle(const Vector& y,
                                           const MeasurementModel& model,
                                           const IndicatorVector& q_hat,
                                           const OracleModel& oracle,
                                           double eta,
                                           const BallConstraint& ball,
                                           const OracleReconOptions& opts,
                                           Rng& rng) {
  const int m = model.m();
  if (q_hat.size() != m || oracle.size() != m)
    throw InvalidInput("reconstruct_with_oracle: oracle length mismatch");

  const auto profile = ReliabilityProfile::from_rates(oracle.p, eta, opts.indexing);
  const int l_eta = std::max(profile.l_eta, 0);

  SupportSet safe;
  switch (opts.support_mode) {
    case SupportMode::random_matching:
      safe = robust_support_random(q_hat, l_eta, rng);
      break;
    case SupportMode::ranked_literal:
      safe = robust_support_ranked(q_hat, oracle, l_eta, RankedMode::literal);
      break;
    case SupportMode::ranked_conservative:
      safe = robust_support_ranked(q_hat, oracle, l_eta,
                                   RankedMode::conservative);
      break;
    case SupportMode::true_support:
      throw InvalidInput(
          "reconstruct_with_oracle: true_support needs ground truth; use "
          "ls_reconstruct directly");
  }

  double delta_n;
  if (opts.delta_n) {
    delta_n = *opts.delta_n;
  } else {
    try {
      delta_n = rip_constant(model.C.transpose(), model.n());
    } catch (const BudgetExceeded&) {
      delta_n = 1.0;  // no certificate; only the ball term remains
    }
  }
  const double diameter = 2.0 * ball.radius;
  const double bound =
      delta_n < 1.0 ? bound_cor1(diameter, model.noise_bound, delta_n)
                    : diameter;

  ReconResult out;
  if (safe.empty()) {
    // Nothing trustworthy: degenerate solve, the prior center.
    out.x_hat = ball.center;
    out.residual_norm = 0.0;
    out.active_rows = safe;
    out.on_boundary = false;
  } else {
    out = constrained_ls(y, model, safe, ball);
  }
  out.bound = bound;
  return out;
}

}  // namespace rsr
