#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "rsr/lti.hpp"

using Catch::Approx;
using namespace rsr;

namespace {

Matrix random_matrix(int rows, int cols, Rng& rng) {
  Matrix M(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) M(i, j) = rng.normal();
  return M;
}

Matrix rotation2(double angle) {
  Matrix R(2, 2);
  R << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return R;
}

// A^k by naive repeated multiplication, independent of the stack builder.
Matrix matrix_power(const Matrix& A, int k) {
  Matrix P = Matrix::Identity(A.rows(), A.cols());
  for (int i = 0; i < k; ++i) P = A * P;
  return P;
}

Vector stack_window(const std::vector<Vector>& outputs) {
  const int m = static_cast<int>(outputs.front().size());
  Vector y(static_cast<Eigen::Index>(m) * outputs.size());
  for (std::size_t k = 0; k < outputs.size(); ++k)
    y.segment(static_cast<Eigen::Index>(k) * m, m) = outputs[k];
  return y;
}

// Matrix with a prescribed spectrum, for pinned featurization cases.
Matrix with_singular_values(int rows, const Vector& sv, Rng& rng) {
  const int n = static_cast<int>(sv.size());
  Eigen::HouseholderQR<Matrix> qu(random_matrix(rows, rows, rng));
  Eigen::HouseholderQR<Matrix> qv(random_matrix(n, n, rng));
  const Matrix U = Matrix(qu.householderQ()).leftCols(n);
  const Matrix V = Matrix(qv.householderQ());
  return U * sv.asDiagonal() * V.transpose();
}

}  // namespace

TEST_CASE("observability_stack layout") {
  Rng rng(5);
  const Matrix A = rotation2(0.3);
  const Matrix C = random_matrix(4, 2, rng);
  const LtiSystem sys(A, C);

  const ObservabilityStack one = observability_stack(sys, 1);
  REQUIRE(one.Phi == C);
  REQUIRE(one.row_map.size() == 4);
  REQUIRE(one.row_map[3] == std::make_pair(3, 0));

  const LtiSystem frozen(Matrix::Identity(2, 2), C);
  const ObservabilityStack rep = observability_stack(frozen, 3);
  for (int k = 0; k < 3; ++k)
    REQUIRE((rep.Phi.middleRows(4 * k, 4) - C).norm() == 0.0);

  const ObservabilityStack st = observability_stack(sys, 3);
  for (int k = 0; k < 3; ++k) {
    const Matrix expect = C * matrix_power(A, k);
    REQUIRE((st.Phi.middleRows(4 * k, 4) - expect).norm() <= 1e-12);
    for (int j = 0; j < 4; ++j)
      REQUIRE(st.row_map[k * 4 + j] == std::make_pair(j, k));
  }
  REQUIRE_THROWS_AS(observability_stack(sys, 0), InvalidInput);
}

TEST_CASE("certify_correctable_fixed identity case") {
  // C = I, A = I, T = 1: deleting 2q of the m identity rows keeps full rank
  // exactly when m - 2q >= n = m, i.e. only q = 0.
  const int n = 3;
  const LtiSystem sys(Matrix::Identity(n, n), Matrix::Identity(n, n));
  REQUIRE(certify_correctable_fixed(sys, 1, 0));
  REQUIRE_FALSE(certify_correctable_fixed(sys, 1, 1));
}

TEST_CASE("certifiers at q=0 reduce to observability") {
  Rng rng(21);
  const Matrix A = rotation2(0.4);
  const Matrix C = random_matrix(3, 2, rng);
  const LtiSystem sys(A, C);
  REQUIRE(certify_correctable_fixed(sys, 1, 0));
  REQUIRE(certify_correctable_varying(sys, 1, 0));

  // A system observing only the first coordinate is not observable under
  // identity dynamics.
  Matrix C1(2, 2);
  C1 << 1, 0, 2, 0;
  const LtiSystem blind(Matrix::Identity(2, 2), C1);
  REQUIRE_FALSE(certify_correctable_fixed(blind, 3, 0));
  REQUIRE_FALSE(certify_correctable_varying(blind, 3, 0));
}

TEST_CASE("certify_correctable_fixed equals the quantifier form") {
  Rng rng(33);
  for (int rep = 0; rep < 12; ++rep) {
    const int n = 2 + static_cast<int>(rng.below(2));
    const int m = 4 + static_cast<int>(rng.below(2));
    const int T = 1 + static_cast<int>(rng.below(3));
    const int q = 1;
    Matrix A = random_matrix(n, n, rng);
    A /= std::max(1.0, A.cwiseAbs().rowwise().sum().maxCoeff());
    const Matrix C = random_matrix(m, n, rng);
    const LtiSystem sys(A, C);
    const ObservabilityStack st = observability_stack(sys, T);

    const bool cert = certify_correctable_fixed(sys, T, q);

    // Quantifier form: no z != 0 may hide inside any 2q-node set. A node set
    // hides some z exactly when the complementary stacked rows drop rank,
    // and the nullspace witness must stay supported on the deleted nodes.
    bool hideable = false;
    for_each_combination(m, std::min(2 * q, m), [&](const std::vector<int>& S) {
      std::vector<char> in_s(m, 0);
      for (int j : S) in_s[j] = 1;
      std::vector<int> kept_rows;
      for (int r = 0; r < m * T; ++r)
        if (!in_s[st.row_map[r].first]) kept_rows.push_back(r);
      const Matrix sub = row_select(st.Phi, SupportSet(kept_rows, m * T));
      Eigen::JacobiSVD<Matrix> svd(sub, Eigen::ComputeThinV);
      const Vector& sv = svd.singularValues();
      if (sub.rows() < n || sv(sv.size() - 1) <= 1e-10 * sv(0)) {
        hideable = true;
        // verify the witness: its output support lies within S at all steps
        if (sub.rows() >= n) {
          const Vector z = svd.matrixV().col(n - 1);
          const Vector img = st.Phi * z;
          for (int r = 0; r < m * T; ++r)
            if (std::abs(img(r)) > 1e-8)
              REQUIRE(in_s[st.row_map[r].first] == 1);
        }
        return false;
      }
      return true;
    });
    REQUIRE(cert == !hideable);

    // sampled quantifier evidence on certified systems
    if (cert) {
      for (int s = 0; s < 50; ++s) {
        const Vector z = random_matrix(n, 1, rng).col(0);
        std::vector<char> touched(m, 0);
        const Vector img = st.Phi * z;
        for (int r = 0; r < m * T; ++r)
          if (std::abs(img(r)) > 1e-9) touched[st.row_map[r].first] = 1;
        int count = 0;
        for (char t : touched) count += t;
        REQUIRE(count > 2 * q);
      }
    }
  }
}

TEST_CASE("decoders recover the clean window at q=0") {
  Rng rng(61);
  const Matrix A = rotation2(0.2);
  const Matrix C = random_matrix(4, 2, rng);
  const LtiSystem sys(A, C);
  const int T = 3;
  Vector x0(2);
  x0 << 1.2, -0.4;

  std::vector<Vector> outputs;
  Vector x = x0;
  for (int k = 0; k < T; ++k) {
    outputs.push_back(C * x);
    x = A * x;
  }
  const Vector y_stack = stack_window(outputs);
  const ObservabilityStack st = observability_stack(sys, T);

  const DecodeResult varying = bruteforce_decoder_varying(y_stack, st, 0);
  REQUIRE((varying.x0 - x0).norm() <= 1e-9);
  REQUIRE(varying.corrupted.empty());

  Matrix Y(4, T);
  for (int k = 0; k < T; ++k) Y.col(k) = outputs[k];
  const DecodeResult fixed = bruteforce_decoder_fixed(Y, sys, T, 0);
  REQUIRE((fixed.x0 - x0).norm() <= 1e-9);
  REQUIRE(fixed.corrupted.empty());
}

TEST_CASE("certified systems decode every per-step pattern") {
  Rng rng(62);
  const Matrix A = rotation2(0.5);
  const Matrix C = random_matrix(5, 2, rng);
  const LtiSystem sys(A, C);
  const int T = 2, q = 1;
  REQUIRE(certify_correctable_varying(sys, T, q));

  Vector x0(2);
  x0 << 0.6, 0.9;
  const ObservabilityStack st = observability_stack(sys, T);

  // all single-node-per-step corruption patterns, including "no corruption"
  for (int n0 = -1; n0 < 5; ++n0) {
    for (int n1 = -1; n1 < 5; ++n1) {
      std::vector<Vector> outputs;
      Vector x = x0;
      for (int k = 0; k < T; ++k) {
        outputs.push_back(C * x);
        x = A * x;
      }
      std::vector<int> expected_rows;
      if (n0 >= 0) {
        outputs[0](n0) += 2.5;
        expected_rows.push_back(n0);
      }
      if (n1 >= 0) {
        outputs[1](n1) += -1.75;
        expected_rows.push_back(5 + n1);
      }
      const DecodeResult res =
          bruteforce_decoder_varying(stack_window(outputs), st, q);
      REQUIRE((res.x0 - x0).norm() <= 1e-8);
      REQUIRE(res.corrupted == SupportSet(expected_rows, 10));
    }
  }
}

TEST_CASE("fixed and varying decoders agree on time-invariant attacks") {
  Rng rng(63);
  const Matrix A = rotation2(0.7);
  const Matrix C = random_matrix(5, 2, rng);
  const LtiSystem sys(A, C);
  const int T = 3, q = 1;
  REQUIRE(certify_correctable_fixed(sys, T, q));
  REQUIRE(certify_correctable_varying(sys, T, q));

  Vector x0(2);
  x0 << -0.3, 1.4;
  for (int node = 0; node < 5; ++node) {
    Matrix Y(5, T);
    Vector x = x0;
    for (int k = 0; k < T; ++k) {
      Y.col(k) = C * x;
      Y(node, k) += 3.0 + k;  // same node corrupted at every step
      x = A * x;
    }
    const DecodeResult fixed = bruteforce_decoder_fixed(Y, sys, T, q);
    Vector y_stack(15);
    for (int k = 0; k < T; ++k) y_stack.segment(5 * k, 5) = Y.col(k);
    const DecodeResult varying = bruteforce_decoder_varying(
        y_stack, observability_stack(sys, T), q);
    REQUIRE((fixed.x0 - x0).norm() <= 1e-8);
    REQUIRE((varying.x0 - fixed.x0).norm() <= 1e-8);
    REQUIRE(fixed.corrupted == SupportSet({node}, 5));
  }
}

TEST_CASE("an uncertified instance admits an ambiguous pattern") {
  // m = 3, n = 2, T = 1, q = 1: deleting two rows leaves a single row, so
  // the certificate fails, and a concrete two-row attack split fools the
  // decoder for one of the two labelings.
  Rng rng(64);
  const Matrix C = random_matrix(3, 2, rng);
  const LtiSystem sys(Matrix::Identity(2, 2), C);
  REQUIRE_FALSE(certify_correctable_varying(sys, 1, 1));

  // Hide z inside rows {0, 1}: z orthogonal to row 2.
  Vector z(2);
  z << C(2, 1), -C(2, 0);
  const Vector img = C * z;
  REQUIRE(std::abs(img(2)) <= 1e-12);
  REQUIRE(std::abs(img(0)) > 1e-6);
  REQUIRE(std::abs(img(1)) > 1e-6);

  Vector x0(2);
  x0 << 0.5, -0.2;
  // truth A: state x0, attack -img(0) on row 0
  Vector yA = C * x0;
  yA(0) -= img(0);
  // the same measurements also arise from state x0 - z with +img(1) on row 1
  const Vector alt = C * (x0 - z);
  REQUIRE(std::abs(yA(1) - (alt(1) + img(1))) <= 1e-12);
  REQUIRE(std::abs(yA(2) - alt(2)) <= 1e-12);

  const ObservabilityStack st = observability_stack(sys, 1);
  const DecodeResult res = bruteforce_decoder_varying(yA, st, 1);
  const bool matches_truth = (res.x0 - x0).norm() <= 1e-8;
  const bool matches_alt = (res.x0 - (x0 - z)).norm() <= 1e-8;
  REQUIRE((matches_truth || matches_alt));
  // both labelings are 1-sparse consistent, so the instance is ambiguous:
  // truth corrupts row 0 only, the alternative corrupts row 1 only
  REQUIRE(std::abs(yA(1) - (C * x0)(1)) <= 1e-12);
  REQUIRE(std::abs(yA(0) - alt(0)) <= 1e-12);
  REQUIRE((x0 - (x0 - z)).norm() > 1e-6);
}

TEST_CASE("varying certificate implies the fixed certificate on redundant systems") {
  Rng rng(65);
  for (int rep = 0; rep < 10; ++rep) {
    const int n = 2 + static_cast<int>(rng.below(2));
    const int m = n + 2 + static_cast<int>(rng.below(2));
    const int T = 1 + static_cast<int>(rng.below(3));
    Matrix A = random_matrix(n, n, rng);
    A /= std::max(1.0, A.cwiseAbs().rowwise().sum().maxCoeff());
    const LtiSystem sys(A, random_matrix(m, n, rng));
    if (certify_correctable_varying(sys, T, 1))
      REQUIRE(certify_correctable_fixed(sys, T, 1));
  }
}

TEST_CASE("featurize splits the stack exactly") {
  Rng rng(81);
  const Matrix A = rotation2(0.3);
  const Matrix C = random_matrix(4, 2, rng);
  const LtiSystem sys(A, C);
  const ObservabilityStack st = observability_stack(sys, 3);

  const Featurization full = featurize(st, 2);
  REQUIRE(full.n_g == 2);
  const Matrix rebuilt = full.U1 * full.sigma1.asDiagonal() * full.V1.transpose();
  REQUIRE((st.Phi - rebuilt).norm() <= 1e-10);

  // round trip with n_g = n
  Vector x0(2);
  x0 << 0.7, -1.3;
  const Vector g = full.sigma1.asDiagonal() * full.V1.transpose() * x0;
  const Vector back = full.V1 * g.cwiseQuotient(full.sigma1);
  REQUIRE((back - x0).norm() <= 1e-9);

  REQUIRE_THROWS_AS(featurize(st, 0), InvalidInput);
  REQUIRE_THROWS_AS(featurize(st, 3), InvalidInput);
}

TEST_CASE("featurize with a prescribed spectrum") {
  Rng rng(82);
  Vector sv(3);
  sv << 5.0, 1.0, 0.1;
  ObservabilityStack st;
  st.T = 3;
  st.Phi = with_singular_values(9, sv, rng);
  for (int k = 0; k < 3; ++k)
    for (int j = 0; j < 3; ++j) st.row_map.emplace_back(j, k);

  const Featurization f = featurize(st, 2);
  REQUIRE(f.sigma1(0) == Approx(5.0).margin(1e-9));
  REQUIRE(f.sigma1(1) == Approx(1.0).margin(1e-9));
  REQUIRE(f.all_singular_values(2) == Approx(0.1).margin(1e-9));

  // truncation residual has spectral norm exactly sigma_3
  const Matrix resid = st.Phi - f.U1 * f.sigma1.asDiagonal() * f.V1.transpose();
  Eigen::JacobiSVD<Matrix> rs(resid);
  REQUIRE(rs.singularValues()(0) == Approx(0.1).margin(1e-8));

  // clean feature identity: U1' (Phi x0) = Sigma1 V1' x0
  Vector x0(3);
  x0 << 0.2, -0.5, 1.0;
  const Vector lhs = f.U1.transpose() * (st.Phi * x0);
  const Vector rhs = f.sigma1.asDiagonal() * f.V1.transpose() * x0;
  REQUIRE((lhs - rhs).norm() <= 1e-9);

  REQUIRE(feature_noise_bound(f, 2.0) == Approx(0.2).margin(1e-12));
  REQUIRE(feature_noise_bound_from_ball(f, 1.0) == Approx(0.1).margin(1e-12));

  const Featurization everything = featurize(st, 3);
  REQUIRE(feature_noise_bound(everything, 10.0) == 0.0);
}

TEST_CASE("q_max arithmetic and monotonicity") {
  REQUIRE(q_max(10, 4) == 6);
  REQUIRE(q_max(3, 5) == -1);
  REQUIRE(q_max(4, 4) == 0);
  int prev = q_max(10, 1);
  for (int ng = 2; ng <= 10; ++ng) {
    REQUIRE(q_max(10, ng) <= prev);
    prev = q_max(10, ng);
  }
}

TEST_CASE("robust_resilient_step clean exact case") {
  Rng rng(91);
  const Matrix A = rotation2(0.0);
  const Matrix C = random_matrix(5, 2, rng);
  const LtiSystem sys(A, C);
  const ObservabilityStack st = observability_stack(sys, 2);
  const Featurization f = featurize(st, 2);  // n_g = n: no truncation

  Vector x0(2);
  x0 << 0.4, 0.8;
  const Vector y_window = st.Phi * x0;
  const IndicatorVector all_safe(std::vector<int>(10, 1));
  const OracleModel oracle = OracleModel::uniform(5, 1.0);

  EstimatorState state(Vector::Zero(2), 100.0, 0.9);
  const EstimatorStep step = robust_resilient_step(
      state, y_window, f, oracle, all_safe, rng, SupportMode::random_matching);
  REQUIRE((step.x0_hat - x0).norm() <= 1e-9);
  REQUIRE(step.diag.safe_rows == 10);
  REQUIRE_FALSE(step.diag.degenerate);
  REQUIRE((state.g_prev - step.g).norm() == 0.0);
}

TEST_CASE("robust_resilient_step is deterministic given identical state") {
  Rng rng(92);
  const Matrix C = random_matrix(4, 2, rng);
  const LtiSystem sys(rotation2(0.1), C);
  const ObservabilityStack st = observability_stack(sys, 2);
  const Featurization f = featurize(st, 1);

  Vector x0(2);
  x0 << 1.0, -1.0;
  Vector y = st.Phi * x0;
  y(3) += 2.0;
  std::vector<int> bits(8, 1);
  bits[3] = 0;
  const IndicatorVector q_hat(bits);
  const OracleModel oracle = OracleModel::uniform(4, 0.9);

  EstimatorState s1(Vector::Zero(1), 1.0, 0.8);
  EstimatorState s2(Vector::Zero(1), 1.0, 0.8);
  Rng ra(7), rb(7);
  const EstimatorStep a = robust_resilient_step(s1, y, f, oracle, q_hat, ra);
  const EstimatorStep b = robust_resilient_step(s2, y, f, oracle, q_hat, rb);
  REQUIRE((a.g - b.g).norm() == 0.0);
  REQUIRE((a.x0_hat - b.x0_hat).norm() == 0.0);
}

TEST_CASE("robust_resilient_step degenerates to the prior without safe rows") {
  Rng rng(93);
  const Matrix C = random_matrix(4, 2, rng);
  const LtiSystem sys(Matrix::Identity(2, 2), C);
  const ObservabilityStack st = observability_stack(sys, 2);
  const Featurization f = featurize(st, 2);

  const IndicatorVector none_safe(std::vector<int>(8, 0));
  const OracleModel oracle = OracleModel::uniform(4, 0.5);
  Vector g0(2);
  g0 << 0.3, -0.6;
  EstimatorState state(g0, 1.0, 0.9);
  const EstimatorStep step = robust_resilient_step(
      state, Vector::Zero(8), f, oracle, none_safe, rng,
      SupportMode::ranked_conservative);
  REQUIRE(step.diag.degenerate);
  REQUIRE((step.g - g0).norm() == 0.0);
  REQUIRE((step.x0_hat - f.V1 * g0.cwiseQuotient(f.sigma1)).norm() == 0.0);
}

TEST_CASE("initialize_feature_estimate solves the safe rows") {
  Rng rng(94);
  const Matrix C = random_matrix(5, 2, rng);
  const LtiSystem sys(rotation2(0.2), C);
  const ObservabilityStack st = observability_stack(sys, 2);
  const Featurization f = featurize(st, 2);

  Vector x0(2);
  x0 << -0.7, 0.2;
  const Vector y = st.Phi * x0;
  const Vector g = initialize_feature_estimate(y, f, SupportSet::all(10));
  const Vector expected = f.sigma1.asDiagonal() * f.V1.transpose() * x0;
  REQUIRE((g - expected).norm() <= 1e-9);
  REQUIRE(initialize_feature_estimate(y, f, SupportSet::none(10)).norm() ==
          0.0);
}
