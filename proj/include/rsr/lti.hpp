#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "rsr/combinatorics.hpp"
#include "rsr/errors.hpp"
#include "rsr/model.hpp"
#include "rsr/reconstruct.hpp"
#include "rsr/support_uncertainty.hpp"

namespace rsr {

struct LtiSystem {
  Matrix A;
  Matrix C;

  LtiSystem(Matrix dynamics, Matrix output)
      : A(std::move(dynamics)), C(std::move(output)) {
    if (A.rows() != A.cols()) throw InvalidInput("LtiSystem: A must be square");
    if (C.cols() != A.rows())
      throw InvalidInput("LtiSystem: C must have as many columns as states");
    if (C.rows() < 1) throw InvalidInput("LtiSystem: C must have rows");
  }

  int n() const { return static_cast<int>(A.rows()); }
  int m() const { return static_cast<int>(C.rows()); }
};

// Vertical stack C, CA, ..., CA^{T-1}; row k*m + j observes node j at step k.
struct ObservabilityStack {
  Matrix Phi;
  int T = 0;
  std::vector<std::pair<int, int>> row_map;  // (node, time) per row

  int m() const { return T > 0 ? static_cast<int>(Phi.rows()) / T : 0; }
  int n() const { return static_cast<int>(Phi.cols()); }
};

inline ObservabilityStack observability_stack(const LtiSystem& sys, int T) {
  if (T < 1) throw InvalidInput("observability_stack: T must be >= 1");
  const int m = sys.m(), n = sys.n();
  ObservabilityStack st;
  st.T = T;
  st.Phi.resize(static_cast<Eigen::Index>(m) * T, n);
  st.row_map.reserve(static_cast<std::size_t>(m) * T);
  Matrix P = Matrix::Identity(n, n);
  for (int k = 0; k < T; ++k) {
    st.Phi.middleRows(static_cast<Eigen::Index>(k) * m, m) = sys.C * P;
    for (int j = 0; j < m; ++j) st.row_map.emplace_back(j, k);
    P = sys.A * P;
  }
  return st;
}

namespace detail {

inline bool full_column_rank(const Matrix& M) {
  if (M.rows() < M.cols()) return false;
  if (M.cols() == 0) return true;
  Eigen::JacobiSVD<Matrix> svd(M);
  const Vector& sv = svd.singularValues();
  return sv(sv.size() - 1) > kRankTolRel * sv(0);
}

// Rows of M with the listed indices removed.
inline Matrix drop_rows(const Matrix& M, const std::vector<int>& drop) {
  std::vector<char> gone(M.rows(), 0);
  for (int i : drop) gone[i] = 1;
  Matrix out(M.rows() - static_cast<Eigen::Index>(drop.size()), M.cols());
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    if (!gone[i]) out.row(r++) = M.row(i);
  return out;
}

}  // namespace detail

// Correctability certificate for a fixed attacked-node set: after deleting
// any min(2q, m) nodes, the remaining stacked rows keep full column rank.
inline bool certify_correctable_fixed(const LtiSystem& sys, int T, int q) {
  if (T < 1) throw InvalidInput("certify_correctable_fixed: T must be >= 1");
  if (q < 0) throw InvalidInput("certify_correctable_fixed: q must be >= 0");
  const int m = sys.m();
  const int s = std::min(2 * q, m);
  if (subset_count(m, s) > 2e6)
    throw BudgetExceeded("certify_correctable_fixed: node subsets exceed the "
                         "2e6 enumeration guard");
  const ObservabilityStack st = observability_stack(sys, T);
  bool ok = true;
  for_each_combination(m, s, [&](const std::vector<int>& nodes) {
    std::vector<int> rows;
    rows.reserve(static_cast<std::size_t>(s) * T);
    for (int k = 0; k < T; ++k)
      for (int j : nodes) rows.push_back(k * m + j);
    std::sort(rows.begin(), rows.end());
    ok = detail::full_column_rank(detail::drop_rows(st.Phi, rows));
    return ok;
  });
  return ok;
}

// Correctability certificate for per-step attacked sets: after deleting any
// min(2q, mT) rows of the stack, full column rank survives.
inline bool certify_correctable_varying(const LtiSystem& sys, int T, int q) {
  if (T < 1) throw InvalidInput("certify_correctable_varying: T must be >= 1");
  if (q < 0) throw InvalidInput("certify_correctable_varying: q must be >= 0");
  const ObservabilityStack st = observability_stack(sys, T);
  const int rows = static_cast<int>(st.Phi.rows());
  const int s = std::min(2 * q, rows);
  if (subset_count(rows, s) > 2e6)
    throw BudgetExceeded("certify_correctable_varying: row subsets exceed the "
                         "2e6 enumeration guard");
  bool ok = true;
  for_each_combination(rows, s, [&](const std::vector<int>& drop) {
    ok = detail::full_column_rank(detail::drop_rows(st.Phi, drop));
    return ok;
  });
  return ok;
}

struct DecodeResult {
  Vector x0;
  // Varying decoder: corrupted rows of the stacked window (universe mT).
  // Fixed decoder: corrupted nodes (universe m).
  SupportSet corrupted;
};

namespace detail {

// Candidate corrupted-row sets in order of increasing size then
// lexicographic content; the first whose complement is exactly consistent
// wins, which makes the decoder deterministic.
inline std::vector<std::vector<int>> candidate_row_sets_per_step(int m, int T,
                                                                 int q) {
  std::vector<std::vector<int>> base;  // step-local subsets, size <= q
  for (int j = 0; j <= std::min(q, m); ++j)
    for_each_combination(m, j, [&](const std::vector<int>& c) {
      base.push_back(c);
      return true;
    });
  std::vector<std::vector<int>> out;
  std::vector<int> current;
  const std::function<void(int)> rec = [&](int step) {
    if (step == T) {
      out.push_back(current);
      return;
    }
    for (const auto& sub : base) {
      const std::size_t mark = current.size();
      for (int j : sub) current.push_back(step * m + j);
      rec(step + 1);
      current.resize(mark);
    }
  };
  rec(0);
  for (auto& k : out) std::sort(k.begin(), k.end());
  std::sort(out.begin(), out.end(),
            [](const std::vector<int>& a, const std::vector<int>& b) {
              if (a.size() != b.size()) return a.size() < b.size();
              return a < b;
            });
  return out;
}

inline double consistency_tol(const Vector& y) {
  return 1e-8 * (1.0 + y.cwiseAbs().maxCoeff());
}

}  // namespace detail

// Brute-force decoder for per-step sparse attacks: smallest candidate
// corrupted-row set whose complement rows admit an exactly consistent state.
// With per_step=false the candidates are unstructured row sets of size <= q.
inline DecodeResult bruteforce_decoder_varying(const Vector& y_stack,
                                               const ObservabilityStack& stack,
                                               int q, bool per_step = true) {
  const int rows = static_cast<int>(stack.Phi.rows());
  const int m = stack.m();
  if (y_stack.size() != rows)
    throw InvalidInput("bruteforce_decoder_varying: window length mismatch");
  if (q < 0) throw InvalidInput("bruteforce_decoder_varying: q must be >= 0");

  std::vector<std::vector<int>> candidates;
  if (per_step) {
    double opts = 0.0;
    for (int j = 0; j <= std::min(q, m); ++j) opts += subset_count(m, j);
    if (std::pow(opts, stack.T) > 1e6)
      throw BudgetExceeded(
          "bruteforce_decoder_varying: candidate sets exceed the 1e6 guard");
    candidates = detail::candidate_row_sets_per_step(m, stack.T, q);
  } else {
    double total = 0.0;
    for (int k = 0; k <= std::min(q, rows); ++k) total += subset_count(rows, k);
    if (total > 1e6)
      throw BudgetExceeded(
          "bruteforce_decoder_varying: candidate sets exceed the 1e6 guard");
    for (int k = 0; k <= std::min(q, rows); ++k)
      for_each_combination(rows, k, [&](const std::vector<int>& c) {
        candidates.push_back(c);
        return true;
      });
  }

  const double tol = detail::consistency_tol(y_stack);
  for (const auto& drop : candidates) {
    const SupportSet dropped(drop, rows);
    const SupportSet kept = dropped.complement();
    if (kept.empty()) continue;
    const Matrix Pk = row_select(stack.Phi, kept);
    const Vector yk = row_select(y_stack, kept);
    Eigen::JacobiSVD<Matrix> svd(Pk, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector x = svd.solve(yk);
    if ((yk - Pk * x).cwiseAbs().maxCoeff() <= tol) {
      const Vector resid = y_stack - stack.Phi * x;
      std::vector<int> bad;
      for (int i = 0; i < rows; ++i)
        if (std::abs(resid(i)) > tol) bad.push_back(i);
      return {x, SupportSet(std::move(bad), rows)};
    }
  }
  throw Infeasible(
      "bruteforce_decoder_varying: no state is consistent with the window "
      "under the attack budget");
}

// Brute-force decoder assuming one fixed attacked-node set across the whole
// window: smallest node set whose complement rows are consistent at every
// step. Y holds one column per time step.
inline DecodeResult bruteforce_decoder_fixed(const Matrix& Y,
                                             const LtiSystem& sys, int T,
                                             int q) {
  const int m = sys.m();
  if (Y.rows() != m || Y.cols() != T)
    throw InvalidInput("bruteforce_decoder_fixed: Y must be m x T");
  if (q < 0 || q > m)
    throw InvalidInput("bruteforce_decoder_fixed: q must lie in [0, m]");
  double total = 0.0;
  for (int k = 0; k <= q; ++k) total += subset_count(m, k);
  if (total > 1e6)
    throw BudgetExceeded(
        "bruteforce_decoder_fixed: node sets exceed the 1e6 guard");

  const ObservabilityStack st = observability_stack(sys, T);
  Vector y_stack(static_cast<Eigen::Index>(m) * T);
  for (int k = 0; k < T; ++k) y_stack.segment(static_cast<Eigen::Index>(k) * m, m) = Y.col(k);
  const double tol = detail::consistency_tol(y_stack);

  for (int k = 0; k <= q; ++k) {
    DecodeResult found;
    bool have = false;
    for_each_combination(m, k, [&](const std::vector<int>& nodes) {
      std::vector<int> rows;
      rows.reserve(static_cast<std::size_t>(k) * T);
      for (int t = 0; t < T; ++t)
        for (int j : nodes) rows.push_back(t * m + j);
      std::sort(rows.begin(), rows.end());
      const SupportSet dropped(rows, m * T);
      const SupportSet kept = dropped.complement();
      if (kept.empty()) return true;
      const Matrix Pk = row_select(st.Phi, kept);
      const Vector yk = row_select(y_stack, kept);
      Eigen::JacobiSVD<Matrix> svd(Pk,
                                   Eigen::ComputeThinU | Eigen::ComputeThinV);
      const Vector x = svd.solve(yk);
      if ((yk - Pk * x).cwiseAbs().maxCoeff() <= tol) {
        const Vector resid = y_stack - st.Phi * x;
        std::vector<int> bad_nodes;
        for (int j = 0; j < m; ++j) {
          for (int t = 0; t < T; ++t) {
            if (std::abs(resid(t * m + j)) > tol) {
              bad_nodes.push_back(j);
              break;
            }
          }
        }
        found = {x, SupportSet(std::move(bad_nodes), m)};
        have = true;
        return false;  // first hit at this size is the lexicographic winner
      }
      return true;
    });
    if (have) return found;
  }
  throw Infeasible(
      "bruteforce_decoder_fixed: no state is consistent with the window "
      "under the attack budget");
}

// Rank-n_g split of the observability stack. U1 keeps orthonormal columns;
// the discarded spectral mass is exactly the (n_g+1)-th singular value.
struct Featurization {
  Matrix U1;                   // mT x n_g
  Vector sigma1;               // n_g, descending
  Matrix V1;                   // n x n_g
  int n_g = 0;
  Vector all_singular_values;  // length n, zero-padded if mT < n
};

inline Featurization featurize(const ObservabilityStack& stack, int n_g) {
  const int n = stack.n();
  if (n_g < 1 || n_g > n)
    throw InvalidInput("featurize: n_g must lie in {1,...," +
                       std::to_string(n) + "}");
  Eigen::JacobiSVD<Matrix> svd(stack.Phi,
                               Eigen::ComputeThinU | Eigen::ComputeThinV);
  Vector sv = Vector::Zero(n);
  sv.head(svd.singularValues().size()) = svd.singularValues();
  if (!(sv(n_g - 1) > detail::kRankTolRel * sv(0)))
    throw RankDeficient("featurize: sigma_" + std::to_string(n_g) +
                        " is too small to invert", sv(n_g - 1));

  Featurization f;
  f.U1 = svd.matrixU().leftCols(n_g);
  f.sigma1 = sv.head(n_g);
  f.V1 = svd.matrixV().leftCols(n_g);
  f.n_g = n_g;
  f.all_singular_values = sv;

  const double ortho =
      (f.U1.transpose() * f.U1 - Matrix::Identity(n_g, n_g)).cwiseAbs().maxCoeff();
  if (ortho > 1e-10)
    throw NumericError("featurize: U1 lost orthonormality (defect " +
                       std::to_string(ortho) + ")");
  const Matrix resid = stack.Phi - f.U1 * f.sigma1.asDiagonal() * f.V1.transpose();
  Eigen::JacobiSVD<Matrix> rs(resid);
  const double spectral = rs.singularValues().size() ? rs.singularValues()(0) : 0.0;
  const double expected = n_g < n ? sv(n_g) : 0.0;
  if (std::abs(spectral - expected) > 1e-8)
    throw NumericError("featurize: truncation residual " +
                       std::to_string(spectral) + " != sigma_" +
                       std::to_string(n_g + 1));
  return f;
}

// Model-error bound for the truncated feature measurement:
// ||v|| <= sigma_{n_g+1} * ||x0||.
inline double feature_noise_bound(const Featurization& f,
                                  double x0_norm_bound) {
  if (x0_norm_bound < 0.0)
    throw InvalidInput("feature_noise_bound: negative norm bound");
  const int n = static_cast<int>(f.all_singular_values.size());
  if (f.n_g >= n) return 0.0;
  return f.all_singular_values(f.n_g) * x0_norm_bound;
}

// Refinement when the feature is known to move inside a ball of radius delta:
// ||v|| <= (sigma_{n_g+1} / sigma_{n_g}) * delta.
inline double feature_noise_bound_from_ball(const Featurization& f,
                                            double feature_ball_radius) {
  if (feature_ball_radius < 0.0)
    throw InvalidInput("feature_noise_bound_from_ball: negative radius");
  const int n = static_cast<int>(f.all_singular_values.size());
  if (f.n_g >= n) return 0.0;
  return f.all_singular_values(f.n_g) / f.sigma1(f.n_g - 1) *
         feature_ball_radius;
}

// Largest per-window attack budget the featurized estimator can absorb.
inline int q_max(int l_eta, int n_g) {
  return l_eta >= n_g ? l_eta - n_g : -1;
}

// Mutable state of the sliding-window estimator: one instance per trial.
struct EstimatorState {
  Vector g_prev;
  double delta = 0.0;  // ball radius on the per-step feature motion
  double eta = 0.0;

  EstimatorState(Vector g0, double delta_, double eta_)
      : g_prev(std::move(g0)), delta(delta_), eta(eta_) {
    if (!(delta > 0.0)) throw InvalidInput("EstimatorState: delta must be positive");
    if (!(eta > 0.0 && eta <= 1.0))
      throw InvalidInput("EstimatorState: eta must lie in (0, 1]");
  }
};

struct EstimatorStepDiag {
  int l_eta = 0;
  int safe_rows = 0;
  bool degenerate = false;
  bool on_boundary = false;
  double residual_norm = 0.0;
};

struct EstimatorStep {
  Vector g;
  Vector x0_hat;
  EstimatorStepDiag diag;
};

// Unconstrained min-norm feature estimate from a window's safe rows; used to
// seed g_prev for the first step. Returns zero when nothing is trusted.
inline Vector initialize_feature_estimate(const Vector& y_window,
                                          const Featurization& feat,
                                          const SupportSet& safe_rows) {
  if (y_window.size() != feat.U1.rows())
    throw InvalidInput("initialize_feature_estimate: window length mismatch");
  if (safe_rows.empty()) return Vector::Zero(feat.n_g);
  const Matrix Us = row_select(feat.U1, safe_rows);
  const Vector ys = row_select(y_window, safe_rows);
  Eigen::JacobiSVD<Matrix> svd(Us, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return svd.solve(ys);
}

// One step of the robust resilient estimator: robust support over the mT
// window rows (node statistics tiled across time slots), ball-constrained
// solve around the previous feature, and the back-map to the initial state.
inline EstimatorStep robust_resilient_step(
    EstimatorState& state, const Vector& y_window, const Featurization& feat,
    const OracleModel& node_oracle, const IndicatorVector& q_hat_window,
    Rng& rng, SupportMode mode = SupportMode::random_matching,
    LEtaIndexing indexing = LEtaIndexing::exact_tail) {
  const int rows = static_cast<int>(feat.U1.rows());
  if (y_window.size() != rows)
    throw InvalidInput("robust_resilient_step: window length mismatch");
  if (q_hat_window.size() != rows)
    throw InvalidInput("robust_resilient_step: oracle output length mismatch");
  if (rows % node_oracle.size() != 0)
    throw InvalidInput(
        "robust_resilient_step: window rows are not a multiple of the node "
        "count");
  if (state.g_prev.size() != feat.n_g)
    throw InvalidInput("robust_resilient_step: state dimension != n_g");

  const OracleModel window_oracle =
      node_oracle.replicate(rows / node_oracle.size());
  const auto profile =
      ReliabilityProfile::from_rates(window_oracle.p, state.eta, indexing);
  const int l_eta = std::max(profile.l_eta, 0);

  SupportSet safe;
  switch (mode) {
    case SupportMode::random_matching:
      safe = robust_support_random(q_hat_window, l_eta, rng);
      break;
    case SupportMode::ranked_literal:
      safe = robust_support_ranked(q_hat_window, window_oracle, l_eta,
                                   RankedMode::literal);
      break;
    case SupportMode::ranked_conservative:
      safe = robust_support_ranked(q_hat_window, window_oracle, l_eta,
                                   RankedMode::conservative);
      break;
    case SupportMode::true_support:
      throw InvalidInput("robust_resilient_step: true_support needs ground "
                         "truth; pass the safe rows to constrained_ls instead");
  }

  EstimatorStep out;
  out.diag.l_eta = l_eta;
  out.diag.safe_rows = safe.size();
  if (safe.empty()) {
    out.g = state.g_prev;  // no information: stay at the prior
    out.diag.degenerate = true;
  } else {
    const auto sol = detail::ball_constrained_ls(
        row_select(feat.U1, safe), row_select(y_window, safe), state.g_prev,
        state.delta);
    out.g = sol.x;
    out.diag.on_boundary = sol.on_boundary;
    out.diag.residual_norm =
        (row_select(y_window, safe) - row_select(feat.U1, safe) * out.g).norm();
  }
  out.x0_hat = feat.V1 * out.g.cwiseQuotient(feat.sigma1);
  state.g_prev = out.g;
  return out;
}

}  // namespace rsr
