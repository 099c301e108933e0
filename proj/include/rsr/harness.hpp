#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rsr/datadriven.hpp"
#include "rsr/errors.hpp"
#include "rsr/io.hpp"
#include "rsr/lti.hpp"
#include "rsr/model.hpp"
#include "rsr/reconstruct.hpp"
#include "rsr/rng.hpp"
#include "rsr/support_uncertainty.hpp"

namespace rsr {

enum class ScenarioMode { static_mode, lti, datadriven };

enum class BallCenterPolicy { zero, truth };

// Everything a seeded Monte Carlo batch needs. Parsed from flat key = value
// text; scalars broadcast where a per-node vector is expected.
struct Scenario {
  ScenarioMode mode = ScenarioMode::static_mode;

  int m = 30;
  int n = 4;
  int n_g = 2;      // lti: retained feature dimension
  int T = 3;        // lti: window length
  int n_sigma = 2;  // datadriven: exogenous dimension

  int q = 3;
  double attack_lo = 0.5;
  double attack_hi = 1.5;
  SignMode attack_sign = SignMode::random_sign;

  Vector oracle_p;  // length m
  Vector oracle_s;  // length m
  double eta = 0.9;

  BallCenterPolicy ball_center = BallCenterPolicy::zero;
  double ball_radius = 2.0;
  double truth_radius = 1.0;

  double eps = 0.01;

  int trials = 100;
  std::uint64_t base_seed = 1;

  SupportMode support_mode = SupportMode::random_matching;
  LEtaIndexing indexing = LEtaIndexing::exact_tail;

  std::string c_file;  // optional matrix files; generated when absent
  std::string a_file;

  int data_samples = 400;       // datadriven: dataset size
  double subspace_scale = 1.0;  // datadriven: residual subspace magnitude
  double pca_safety = -1.0;     // datadriven: noise-bound factor (<0: default)

  static Scenario from_config(const Config& cfg);
  void validate() const;
};

inline void Scenario::validate() const {
  if (m < 2 || n < 1 || m <= n)
    throw ConfigError("scenario: need dims with m > n >= 1");
  if (trials < 1) throw ConfigError("scenario: trials must be >= 1");
  if (!(eta > 0.0 && eta <= 1.0))
    throw ConfigError("scenario: eta must lie in (0, 1]");
  if (q < 0 || q >= m) throw ConfigError("scenario: q must lie in [0, m)");
  if (!(attack_lo > 0.0) || attack_hi < attack_lo)
    throw ConfigError("scenario: attack magnitudes need 0 < lo <= hi");
  if (!(ball_radius > 0.0)) throw ConfigError("scenario: ball.radius must be positive");
  if (!(truth_radius > 0.0))
    throw ConfigError("scenario: truth.radius must be positive");
  if (eps < 0.0) throw ConfigError("scenario: noise.eps must be >= 0");
  if (oracle_p.size() != m || oracle_s.size() != m)
    throw ConfigError("scenario: oracle vectors must have length m");
  if (mode == ScenarioMode::lti) {
    if (T < 1) throw ConfigError("scenario: dims.T must be >= 1");
    if (n_g < 1 || n_g > n)
      throw ConfigError("scenario: dims.n_g must lie in {1,...,n}");
  }
  if (mode == ScenarioMode::datadriven) {
    if (n_sigma < 1) throw ConfigError("scenario: dims.n_sigma must be >= 1");
    if (data_samples <= n_sigma + 1)
      throw ConfigError("scenario: data.samples must exceed n_sigma + 1");
  }
}

inline Scenario Scenario::from_config(const Config& cfg) {
  Scenario sc;
  const std::string mode = cfg.get_string_or("mode", "static");
  if (mode == "static")
    sc.mode = ScenarioMode::static_mode;
  else if (mode == "lti")
    sc.mode = ScenarioMode::lti;
  else if (mode == "datadriven")
    sc.mode = ScenarioMode::datadriven;
  else
    throw ConfigError("scenario: unknown mode '" + mode + "'");

  sc.m = static_cast<int>(cfg.get_int_or("dims.m", sc.m));
  sc.n = static_cast<int>(cfg.get_int_or("dims.n", sc.n));
  sc.n_g = static_cast<int>(cfg.get_int_or("dims.n_g", sc.n_g));
  sc.T = static_cast<int>(cfg.get_int_or("dims.T", sc.T));
  sc.n_sigma = static_cast<int>(cfg.get_int_or("dims.n_sigma", sc.n_sigma));

  sc.q = static_cast<int>(cfg.get_int_or("attack.q", sc.q));
  sc.attack_lo = cfg.get_double_or("attack.lo", sc.attack_lo);
  sc.attack_hi = cfg.get_double_or("attack.hi", sc.attack_hi);
  const std::string sign = cfg.get_string_or("attack.sign", "random");
  if (sign == "random")
    sc.attack_sign = SignMode::random_sign;
  else if (sign == "positive")
    sc.attack_sign = SignMode::positive;
  else
    throw ConfigError("scenario: unknown attack.sign '" + sign + "'");

  sc.oracle_p = cfg.has("oracle.p") ? cfg.get_broadcast("oracle.p", sc.m)
                                    : Vector::Constant(sc.m, 0.95);
  sc.oracle_s = cfg.has("oracle.s") ? cfg.get_broadcast("oracle.s", sc.m)
                                    : Vector::Constant(sc.m, 1.0);
  sc.eta = cfg.get_double_or("eta", sc.eta);

  const std::string center = cfg.get_string_or("ball.center", "zero");
  if (center == "zero")
    sc.ball_center = BallCenterPolicy::zero;
  else if (center == "truth")
    sc.ball_center = BallCenterPolicy::truth;
  else
    throw ConfigError("scenario: unknown ball.center '" + center + "'");
  sc.ball_radius = cfg.get_double_or("ball.radius", sc.ball_radius);
  sc.truth_radius = cfg.get_double_or("truth.radius", sc.truth_radius);

  sc.eps = cfg.get_double_or("noise.eps", sc.eps);
  sc.trials = static_cast<int>(cfg.get_int_or("trials", sc.trials));
  sc.base_seed =
      static_cast<std::uint64_t>(cfg.get_int_or("base_seed", 1));

  const std::string sm = cfg.get_string_or("support_mode", "random");
  if (sm == "random")
    sc.support_mode = SupportMode::random_matching;
  else if (sm == "ranked-literal")
    sc.support_mode = SupportMode::ranked_literal;
  else if (sm == "ranked-conservative")
    sc.support_mode = SupportMode::ranked_conservative;
  else if (sm == "true-support")
    sc.support_mode = SupportMode::true_support;
  else
    throw ConfigError("scenario: unknown support_mode '" + sm + "'");

  const std::string idx = cfg.get_string_or("l_eta_indexing", "exact-tail");
  if (idx == "exact-tail")
    sc.indexing = LEtaIndexing::exact_tail;
  else if (idx == "paper")
    sc.indexing = LEtaIndexing::paper;
  else
    throw ConfigError("scenario: unknown l_eta_indexing '" + idx + "'");

  sc.c_file = cfg.get_string_or("model.C", "");
  sc.a_file = cfg.get_string_or("lti.A", "");

  sc.data_samples =
      static_cast<int>(cfg.get_int_or("data.samples", sc.data_samples));
  sc.subspace_scale = cfg.get_double_or("data.subspace_scale", sc.subspace_scale);
  sc.pca_safety = cfg.get_double_or("pca.safety", sc.pca_safety);

  sc.validate();
  return sc;
}

// One trial's metrics. wall_time_ms stays 0 unless timing was requested, so
// default output is byte-identical across runs.
struct TrialResult {
  int trial_index = 0;
  std::uint64_t seed = 0;
  double recon_error = std::numeric_limits<double>::quiet_NaN();
  double bound = std::numeric_limits<double>::quiet_NaN();
  bool bound_satisfied = false;
  int l_eta = -1;
  int safe_set_size = 0;
  int localized_correct_count = 0;
  bool condition_ok = false;
  double wall_time_ms = 0.0;
  std::string error;  // empty on success
};

struct ScenarioSummary {
  int trials = 0;
  int failed = 0;
  double satisfaction_rate = 0.0;
  double mean_error = 0.0;
  double max_error = 0.0;
  double rate_ci_lo = 0.0;  // 3-sigma binomial interval around the rate
  double rate_ci_hi = 0.0;
  double eta = 0.0;
};

struct ScenarioRun {
  Scenario scenario;
  std::vector<TrialResult> trials;
  ScenarioSummary summary;
};

namespace detail {

constexpr std::uint64_t kFixtureSalt = 0x9E3779B97F4A7C15ULL;

inline Vector uniform_in_ball(int dim, double radius, Rng& rng) {
  Vector g(dim);
  double norm = 0.0;
  do {
    for (int i = 0; i < dim; ++i) g(i) = rng.normal();
    norm = g.norm();
  } while (norm == 0.0);
  const double r = radius * std::pow(rng.uniform01(), 1.0 / dim);
  return g * (r / norm);
}

inline Matrix random_matrix(int rows, int cols, Rng& rng) {
  Matrix M(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) M(i, j) = rng.normal();
  return M;
}

// Orthogonal matrix close to the identity (Cayley transform of a small
// skew-symmetric matrix); keeps window trajectories bounded.
inline Matrix gentle_rotation(int n, double scale, Rng& rng) {
  Matrix S(n, n);
  S.setZero();
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double v = scale * rng.normal();
      S(i, j) = v;
      S(j, i) = -v;
    }
  const Matrix I = Matrix::Identity(n, n);
  return (I + S) * (I - S).inverse();
}

inline SupportSet true_safe_rows(const std::vector<char>& attacked_row) {
  std::vector<int> safe;
  for (std::size_t i = 0; i < attacked_row.size(); ++i)
    if (!attacked_row[i]) safe.push_back(static_cast<int>(i));
  return {std::move(safe), static_cast<int>(attacked_row.size())};
}

inline int count_agreements(const IndicatorVector& a, const IndicatorVector& b) {
  int c = 0;
  for (int i = 0; i < a.size(); ++i) c += a[i] == b[i];
  return c;
}

inline SupportSet pick_support(const Scenario& sc, const IndicatorVector& q_hat,
                               const OracleModel& oracle, int l_eta, Rng& rng,
                               const SupportSet& truth_safe) {
  switch (sc.support_mode) {
    case SupportMode::random_matching:
      return robust_support_random(q_hat, l_eta, rng);
    case SupportMode::ranked_literal:
      return robust_support_ranked(q_hat, oracle, l_eta, RankedMode::literal);
    case SupportMode::ranked_conservative:
      return robust_support_ranked(q_hat, oracle, l_eta,
                                   RankedMode::conservative);
    case SupportMode::true_support:
      return truth_safe;
  }
  throw InvalidInput("unknown support mode");
}

}  // namespace detail

namespace detail {

struct StaticFixture {
  std::optional<MeasurementModel> model;
  double delta_n = 1.0;  // >= 1 means "no isometry certificate"
  int l_eta = 0;
  double cor1_bound = 0.0;
  OracleModel oracle = OracleModel::uniform(1, 1.0);
};

inline StaticFixture build_static_fixture(const Scenario& sc) {
  StaticFixture fx;
  Rng rng(sc.base_seed ^ kFixtureSalt);
  Matrix C = sc.c_file.empty() ? random_matrix(sc.m, sc.n, rng)
                               : read_matrix(sc.c_file);
  fx.model.emplace(std::move(C), sc.eps);
  if (fx.model->m() != sc.m || fx.model->n() != sc.n)
    throw ConfigError("scenario: model.C does not match dims.m x dims.n");
  fx.oracle = OracleModel(sc.oracle_p, sc.oracle_s);
  fx.l_eta = compute_l_eta(poisson_binomial_pmf(sc.oracle_p), sc.eta,
                           sc.indexing);
  try {
    fx.delta_n = rip_constant(fx.model->C.transpose(), sc.n);
  } catch (const BudgetExceeded&) {
    fx.delta_n = 1.0;
  }
  const double diameter = 2.0 * sc.ball_radius;
  fx.cor1_bound = fx.delta_n < 1.0
                      ? bound_cor1(diameter, sc.eps, fx.delta_n)
                      : diameter;
  return fx;
}

inline TrialResult run_static_trial(const Scenario& sc,
                                    const StaticFixture& fx, int t) {
  TrialResult res;
  res.trial_index = t;
  res.seed = sc.base_seed + static_cast<std::uint64_t>(t);
  Rng rng(res.seed);

  const MeasurementModel& model = *fx.model;
  const Vector x_true = uniform_in_ball(sc.n, sc.truth_radius, rng);
  const SupportSet attacked(rng.sample_without_replacement(sc.m, sc.q), sc.m);
  const AttackSpec attack(attacked, sc.attack_lo, sc.attack_hi, sc.attack_sign);
  const Measurement meas = generate_measurement(model, x_true, attack, rng);

  const IndicatorVector q_true = IndicatorVector::from_attacked_set(attacked);
  const IndicatorVector q_hat = sample_oracle(q_true, fx.oracle, rng);
  res.localized_correct_count = count_agreements(q_true, q_hat);
  res.l_eta = fx.l_eta;
  res.condition_ok = fx.l_eta - sc.q >= sc.n;

  const int l_eff = std::max(fx.l_eta, 0);
  const SupportSet safe = pick_support(sc, q_hat, fx.oracle, l_eff, rng,
                                       attacked.complement());
  res.safe_set_size = safe.size();

  Vector x_hat;
  if (sc.support_mode == SupportMode::true_support) {
    const ReconResult r = ls_reconstruct(meas.y, model, safe);
    x_hat = r.x_hat;
    res.bound = *r.bound;
  } else {
    const Vector center = sc.ball_center == BallCenterPolicy::truth
                              ? x_true
                              : Vector(Vector::Zero(sc.n));
    const BallConstraint ball(center, sc.ball_radius);
    if (safe.empty()) {
      x_hat = ball.center;
    } else {
      x_hat = constrained_ls(meas.y, model, safe, ball).x_hat;
    }
    res.bound = fx.cor1_bound;
  }
  res.recon_error = (x_hat - x_true).norm();
  res.bound_satisfied = res.recon_error <= res.bound + 1e-9;
  return res;
}

struct LtiFixture {
  std::optional<LtiSystem> sys;
  std::optional<ObservabilityStack> stack;
  std::optional<Featurization> feat;
  OracleModel node_oracle = OracleModel::uniform(1, 1.0);
  double delta_ng = 1.0;
  int l_eta = 0;
  double bound = 0.0;
};

inline LtiFixture build_lti_fixture(const Scenario& sc) {
  LtiFixture fx;
  Rng rng(sc.base_seed ^ kFixtureSalt);
  Matrix A = sc.a_file.empty() ? gentle_rotation(sc.n, 0.05, rng)
                               : read_matrix(sc.a_file);
  Matrix C = sc.c_file.empty() ? random_matrix(sc.m, sc.n, rng)
                               : read_matrix(sc.c_file);
  fx.sys.emplace(std::move(A), std::move(C));
  if (fx.sys->m() != sc.m || fx.sys->n() != sc.n)
    throw ConfigError("scenario: system matrices do not match dims");
  fx.stack = observability_stack(*fx.sys, sc.T);
  fx.feat = featurize(*fx.stack, sc.n_g);
  fx.node_oracle = OracleModel(sc.oracle_p, sc.oracle_s);

  const OracleModel window_oracle = fx.node_oracle.replicate(sc.T);
  fx.l_eta = compute_l_eta(poisson_binomial_pmf(window_oracle.p), sc.eta,
                           sc.indexing);
  try {
    fx.delta_ng = rip_constant(fx.feat->U1.transpose(), sc.n_g);
  } catch (const BudgetExceeded&) {
    fx.delta_ng = 1.0;
  }
  const Vector& sv = fx.feat->all_singular_values;
  const double sigma_ng = fx.feat->sigma1(sc.n_g - 1);
  double factor = 1.0;
  if (fx.delta_ng < 1.0 && sc.n_g < sc.n)
    factor = std::min(1.0, sv(sc.n_g) / (1.0 - fx.delta_ng));
  fx.bound = sc.ball_radius / sigma_ng * factor;
  return fx;
}

inline TrialResult run_lti_trial(const Scenario& sc, const LtiFixture& fx,
                                 int t) {
  TrialResult res;
  res.trial_index = t;
  res.seed = sc.base_seed + static_cast<std::uint64_t>(t);
  Rng rng(res.seed);

  const int m = sc.m, T = sc.T;
  const int rows = m * T;
  const LtiSystem& sys = *fx.sys;
  const Featurization& feat = *fx.feat;

  // T+1 steps: the first window seeds the estimator, the second is scored.
  const Vector x0 = uniform_in_ball(sc.n, sc.truth_radius, rng);
  std::vector<Vector> states(T + 1);
  states[0] = x0;
  for (int k = 1; k <= T; ++k) states[k] = sys.A * states[k - 1];

  std::vector<Vector> outputs(T + 1);
  std::vector<std::vector<char>> attacked(T + 1,
                                          std::vector<char>(m, 0));
  for (int k = 0; k <= T; ++k) {
    outputs[k] = sys.C * states[k];
    for (int j : rng.sample_without_replacement(m, sc.q)) {
      const double mag = rng.uniform(sc.attack_lo, sc.attack_hi);
      const double sgn = (sc.attack_sign == SignMode::random_sign &&
                          rng.chance(0.5))
                             ? -1.0
                             : 1.0;
      outputs[k](j) += sgn * mag;
      attacked[k][j] = 1;
    }
  }

  const auto window = [&](int start) {
    Vector y(rows);
    std::vector<char> bad(rows, 0);
    for (int k = 0; k < T; ++k) {
      y.segment(static_cast<Eigen::Index>(k) * m, m) = outputs[start + k];
      for (int j = 0; j < m; ++j) bad[k * m + j] = attacked[start + k][j];
    }
    return std::make_pair(y, bad);
  };

  const auto [yA, badA] = window(0);
  const auto [yB, badB] = window(1);

  const OracleModel window_oracle = fx.node_oracle.replicate(T);
  const auto indicator = [&](const std::vector<char>& bad) {
    std::vector<int> bits(rows);
    for (int i = 0; i < rows; ++i) bits[i] = bad[i] ? 0 : 1;
    return IndicatorVector(std::move(bits));
  };
  const IndicatorVector q_trueA = indicator(badA);
  const IndicatorVector q_trueB = indicator(badB);
  const IndicatorVector q_hatA = sample_oracle(q_trueA, window_oracle, rng);
  const IndicatorVector q_hatB = sample_oracle(q_trueB, window_oracle, rng);
  res.localized_correct_count = count_agreements(q_trueB, q_hatB);
  res.l_eta = fx.l_eta;
  res.condition_ok = fx.l_eta - sc.q >= sc.n_g;

  const int l_eff = std::max(fx.l_eta, 0);
  const SupportSet safeA = pick_support(sc, q_hatA, window_oracle, l_eff, rng,
                                        true_safe_rows(badA));
  const Vector g0 = initialize_feature_estimate(yA, feat, safeA);

  Vector x_hat;
  if (sc.support_mode == SupportMode::true_support) {
    const SupportSet safeB = true_safe_rows(badB);
    res.safe_set_size = safeB.size();
    Vector g = g0;
    if (!safeB.empty()) {
      g = ball_constrained_ls(row_select(feat.U1, safeB),
                              row_select(yB, safeB), g0, sc.ball_radius)
              .x;
    }
    x_hat = feat.V1 * g.cwiseQuotient(feat.sigma1);
  } else {
    EstimatorState state(g0, sc.ball_radius, sc.eta);
    const EstimatorStep step =
        robust_resilient_step(state, yB, feat, fx.node_oracle, q_hatB, rng,
                              sc.support_mode, sc.indexing);
    res.safe_set_size = step.diag.safe_rows;
    x_hat = step.x0_hat;
  }

  res.recon_error = (x_hat - states[1]).norm();
  res.bound = fx.bound;
  res.bound_satisfied = res.recon_error <= res.bound + 1e-9;
  return res;
}

struct DataDrivenFixture {
  Matrix w_true;
  Vector b_true;
  Matrix phi_true;
  std::optional<RegressorModel> model;
  std::optional<ResidualPca> pca;
  OracleModel oracle = OracleModel::uniform(1, 1.0);
  double delta_n = 1.0;
  int l_eta = 0;
  double bound = 0.0;
};

inline DataDrivenFixture build_datadriven_fixture(const Scenario& sc) {
  DataDrivenFixture fx;
  Rng rng(sc.base_seed ^ kFixtureSalt);
  fx.w_true = random_matrix(sc.m, sc.n_sigma, rng);
  fx.b_true = random_matrix(sc.m, 1, rng).col(0);
  const Matrix raw = random_matrix(sc.m, sc.n, rng);
  Eigen::HouseholderQR<Matrix> qr(raw);
  fx.phi_true = Matrix(qr.householderQ()).leftCols(sc.n);

  Matrix sigma(sc.data_samples, sc.n_sigma);
  Matrix y(sc.data_samples, sc.m);
  for (int i = 0; i < sc.data_samples; ++i) {
    for (int j = 0; j < sc.n_sigma; ++j) sigma(i, j) = rng.normal();
    Vector z(sc.n);
    for (int j = 0; j < sc.n; ++j) z(j) = sc.subspace_scale * rng.normal();
    y.row(i) = (fx.w_true * sigma.row(i).transpose() + fx.b_true +
                fx.phi_true * z)
                   .transpose();
  }
  const Dataset data(std::move(sigma), std::move(y));
  fx.model = fit_regressor(data);
  fx.pca = residual_pca(data, *fx.model, sc.n, sc.pca_safety);
  fx.oracle = OracleModel(sc.oracle_p, sc.oracle_s);
  fx.l_eta = compute_l_eta(poisson_binomial_pmf(sc.oracle_p), sc.eta,
                           sc.indexing);
  try {
    fx.delta_n = rip_constant(fx.pca->Phi.transpose(), sc.n);
  } catch (const BudgetExceeded&) {
    fx.delta_n = 1.0;
  }
  const double diameter = 2.0 * sc.ball_radius;
  fx.bound = fx.delta_n < 1.0
                 ? bound_cor1(diameter, fx.pca->noise_bound, fx.delta_n)
                 : diameter;
  return fx;
}

inline TrialResult run_datadriven_trial(const Scenario& sc,
                                        const DataDrivenFixture& fx, int t) {
  TrialResult res;
  res.trial_index = t;
  res.seed = sc.base_seed + static_cast<std::uint64_t>(t);
  Rng rng(res.seed);

  Vector sigma_in(sc.n_sigma);
  for (int j = 0; j < sc.n_sigma; ++j) sigma_in(j) = rng.normal();
  const Vector z = uniform_in_ball(sc.n, sc.truth_radius, rng);
  const Vector y_star = fx.w_true * sigma_in + fx.b_true + fx.phi_true * z;

  const SupportSet attacked(rng.sample_without_replacement(sc.m, sc.q), sc.m);
  Vector y = y_star;
  for (int i : attacked.indices()) {
    const double mag = rng.uniform(sc.attack_lo, sc.attack_hi);
    const double sgn = (sc.attack_sign == SignMode::random_sign &&
                        rng.chance(0.5))
                           ? -1.0
                           : 1.0;
    y(i) += sgn * mag;
  }
  if (sc.eps > 0.0) {
    Vector g(sc.m);
    double norm = 0.0;
    do {
      for (int i = 0; i < sc.m; ++i) g(i) = rng.normal();
      norm = g.norm();
    } while (norm == 0.0);
    Vector nu = g * (rng.uniform01() * sc.eps / norm);
    for (int i : attacked.indices()) nu(i) = 0.0;
    y += nu;
  }

  const IndicatorVector q_true = IndicatorVector::from_attacked_set(attacked);
  const IndicatorVector q_hat = sample_oracle(q_true, fx.oracle, rng);
  res.localized_correct_count = count_agreements(q_true, q_hat);
  res.l_eta = fx.l_eta;
  res.condition_ok = fx.l_eta - sc.q >= sc.n;

  const int l_eff = std::max(fx.l_eta, 0);
  const SupportSet safe = pick_support(sc, q_hat, fx.oracle, l_eff, rng,
                                       attacked.complement());
  res.safe_set_size = safe.size();

  // Reference coordinates of the clean signal in the fitted basis.
  const Vector x_ref =
      fx.pca->Phi.transpose() * (y_star - fx.model->predict(sigma_in));
  const Vector center = sc.ball_center == BallCenterPolicy::truth
                            ? x_ref
                            : Vector(Vector::Zero(sc.n));
  const BallConstraint ball(center, sc.ball_radius);
  const DataDrivenRecon dd =
      reconstruct_datadriven(y, sigma_in, *fx.model, *fx.pca, safe, ball);

  res.recon_error = (dd.x_hat - x_ref).norm();
  res.bound = fx.bound;
  res.bound_satisfied = res.recon_error <= res.bound + 1e-9;
  return res;
}

}  // namespace detail

// Runs every trial of the scenario. Trial t draws from a generator seeded
// with base_seed + t, so output is identical however the work is divided
// among workers; per-trial failures land in the error field without aborting
// the batch.
inline ScenarioRun run_scenario(const Scenario& sc, int workers = 1,
                                bool timing = false) {
  sc.validate();
  if (workers < 1) throw InvalidInput("run_scenario: workers must be >= 1");

  std::optional<detail::StaticFixture> static_fx;
  std::optional<detail::LtiFixture> lti_fx;
  std::optional<detail::DataDrivenFixture> data_fx;
  switch (sc.mode) {
    case ScenarioMode::static_mode:
      static_fx = detail::build_static_fixture(sc);
      break;
    case ScenarioMode::lti:
      lti_fx = detail::build_lti_fixture(sc);
      break;
    case ScenarioMode::datadriven:
      data_fx = detail::build_datadriven_fixture(sc);
      break;
  }

  ScenarioRun run;
  run.scenario = sc;
  run.trials.resize(sc.trials);

  const auto one_trial = [&](int t) {
    TrialResult res;
    const auto start = std::chrono::steady_clock::now();
    try {
      switch (sc.mode) {
        case ScenarioMode::static_mode:
          res = detail::run_static_trial(sc, *static_fx, t);
          break;
        case ScenarioMode::lti:
          res = detail::run_lti_trial(sc, *lti_fx, t);
          break;
        case ScenarioMode::datadriven:
          res = detail::run_datadriven_trial(sc, *data_fx, t);
          break;
      }
    } catch (const std::exception& e) {
      res = TrialResult{};
      res.trial_index = t;
      res.seed = sc.base_seed + static_cast<std::uint64_t>(t);
      res.error = e.what();
    }
    if (timing) {
      const auto stop = std::chrono::steady_clock::now();
      res.wall_time_ms =
          std::chrono::duration<double, std::milli>(stop - start).count();
    }
    run.trials[t] = res;
  };

  const int nworkers = std::min(workers, sc.trials);
  if (nworkers == 1) {
    for (int t = 0; t < sc.trials; ++t) one_trial(t);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(nworkers);
    for (int w = 0; w < nworkers; ++w)
      pool.emplace_back([&, w] {
        for (int t = w; t < sc.trials; t += nworkers) one_trial(t);
      });
    for (auto& th : pool) th.join();
  }

  ScenarioSummary& sum = run.summary;
  sum.trials = sc.trials;
  sum.eta = sc.eta;
  int satisfied = 0;
  double err_sum = 0.0;
  int err_count = 0;
  for (const TrialResult& tr : run.trials) {
    if (!tr.error.empty()) {
      ++sum.failed;
      continue;
    }
    satisfied += tr.bound_satisfied ? 1 : 0;
    err_sum += tr.recon_error;
    sum.max_error = std::max(sum.max_error, tr.recon_error);
    ++err_count;
  }
  sum.satisfaction_rate = static_cast<double>(satisfied) / sc.trials;
  sum.mean_error = err_count > 0 ? err_sum / err_count : 0.0;
  const double s = std::sqrt(std::max(
      sum.satisfaction_rate * (1.0 - sum.satisfaction_rate) / sc.trials, 0.0));
  sum.rate_ci_lo = sum.satisfaction_rate - 3.0 * s;
  sum.rate_ci_hi = sum.satisfaction_rate + 3.0 * s;
  return run;
}

inline const char* to_string(ScenarioMode mode) {
  switch (mode) {
    case ScenarioMode::static_mode: return "static";
    case ScenarioMode::lti: return "lti";
    case ScenarioMode::datadriven: return "datadriven";
  }
  return "?";
}

inline const char* to_string(SupportMode mode) {
  switch (mode) {
    case SupportMode::random_matching: return "random";
    case SupportMode::ranked_literal: return "ranked-literal";
    case SupportMode::ranked_conservative: return "ranked-conservative";
    case SupportMode::true_support: return "true-support";
  }
  return "?";
}

inline const char* to_string(LEtaIndexing idx) {
  return idx == LEtaIndexing::exact_tail ? "exact-tail" : "paper";
}

// Fixed column schema; booleans as 0/1, doubles to 12 significant digits.
inline std::string to_csv(const ScenarioRun& run) {
  std::ostringstream out;
  out << "trial_index,seed,recon_error,bound,bound_satisfied,l_eta,"
         "safe_set_size,localized_correct_count,condition_ok,wall_time_ms\n";
  for (const TrialResult& t : run.trials) {
    out << t.trial_index << ',' << t.seed << ',' << format_sig(t.recon_error)
        << ',' << format_sig(t.bound) << ',' << (t.bound_satisfied ? 1 : 0)
        << ',' << t.l_eta << ',' << t.safe_set_size << ','
        << t.localized_correct_count << ',' << (t.condition_ok ? 1 : 0) << ','
        << format_sig(t.wall_time_ms) << '\n';
  }
  return out.str();
}

inline nlohmann::ordered_json to_json(const ScenarioRun& run) {
  nlohmann::ordered_json j;
  const Scenario& sc = run.scenario;
  j["scenario"] = {
      {"mode", to_string(sc.mode)},
      {"m", sc.m},
      {"n", sc.n},
      {"n_g", sc.n_g},
      {"T", sc.T},
      {"q", sc.q},
      {"eta", sc.eta},
      {"eps", sc.eps},
      {"ball_radius", sc.ball_radius},
      {"trials", sc.trials},
      {"base_seed", sc.base_seed},
      {"support_mode", to_string(sc.support_mode)},
      {"l_eta_indexing", to_string(sc.indexing)},
  };
  j["summary"] = {
      {"trials", run.summary.trials},
      {"failed", run.summary.failed},
      {"satisfaction_rate", run.summary.satisfaction_rate},
      {"mean_error", run.summary.mean_error},
      {"max_error", run.summary.max_error},
      {"rate_ci_lo", run.summary.rate_ci_lo},
      {"rate_ci_hi", run.summary.rate_ci_hi},
      {"eta", run.summary.eta},
  };
  j["trials"] = nlohmann::ordered_json::array();
  for (const TrialResult& t : run.trials) {
    nlohmann::ordered_json row = {
        {"trial_index", t.trial_index},
        {"seed", t.seed},
        {"recon_error", t.recon_error},
        {"bound", t.bound},
        {"bound_satisfied", t.bound_satisfied},
        {"l_eta", t.l_eta},
        {"safe_set_size", t.safe_set_size},
        {"localized_correct_count", t.localized_correct_count},
        {"condition_ok", t.condition_ok},
        {"wall_time_ms", t.wall_time_ms},
    };
    if (!t.error.empty()) row["error"] = t.error;
    j["trials"].push_back(std::move(row));
  }
  return j;
}

}  // namespace rsr
