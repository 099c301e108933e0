#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <algorithm>

#include "rsr/model.hpp"

using Catch::Approx;
using namespace rsr;

namespace {

Matrix random_matrix(int rows, int cols, Rng& rng) {
  Matrix M(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) M(i, j) = rng.normal();
  return M;
}

}  // namespace

TEST_CASE("row_select extracts rows in order") {
  Matrix M(3, 2);
  M << 1, 2, 3, 4, 5, 6;

  const Matrix one = row_select(M, SupportSet({1}, 3));
  REQUIRE(one.rows() == 1);
  REQUIRE(one(0, 0) == 3.0);
  REQUIRE(one(0, 1) == 4.0);

  const Matrix two = row_select(M, SupportSet({0, 2}, 3));
  REQUIRE(two(0, 1) == 2.0);
  REQUIRE(two(1, 0) == 5.0);

  REQUIRE(row_select(M, SupportSet::all(3)) == M);

  REQUIRE_THROWS_AS(row_select(M, SupportSet({0}, 5)), InvalidInput);
  REQUIRE_THROWS_AS(SupportSet({3}, 3), InvalidInput);
  REQUIRE_THROWS_AS(SupportSet({1, 1}, 3), InvalidInput);
}

TEST_CASE("row_select split is a row permutation") {
  Rng rng(101);
  const Matrix M = random_matrix(7, 3, rng);
  const SupportSet S({1, 4, 5}, 7);
  const Matrix top = row_select(M, S);
  const Matrix bottom = row_select(M, S.complement());
  Matrix stacked(7, 3);
  stacked << top, bottom;

  // Every row of M appears exactly once in the stack.
  std::vector<bool> used(7, false);
  for (int i = 0; i < 7; ++i) {
    bool matched = false;
    for (int j = 0; j < 7 && !matched; ++j) {
      if (!used[j] && (stacked.row(j) - M.row(i)).norm() == 0.0) {
        used[j] = true;
        matched = true;
      }
    }
    REQUIRE(matched);
  }
}

TEST_CASE("support_of thresholds magnitudes") {
  Vector z = Vector::Zero(3);
  REQUIRE(support_of(z, 0.0).empty());

  Vector v(3);
  v << 1, 0, -2;
  REQUIRE(support_of(v, 0.0) == SupportSet({0, 2}, 3));

  Vector w(2);
  w << 1e-13, 5;
  REQUIRE(support_of(w) == SupportSet({1}, 2));

  REQUIRE_THROWS_AS(support_of(v, -1.0), InvalidInput);
}

TEST_CASE("argsort_desc orders descending with index tie-break") {
  Vector v(3);
  v << 0.2, 0.9, 0.5;
  REQUIRE(argsort_desc(v) == std::vector<int>{1, 2, 0});

  Vector ties = Vector::Ones(3);
  REQUIRE(argsort_desc(ties) == std::vector<int>{0, 1, 2});

  REQUIRE(argsort_desc(Vector(0)).empty());
}

TEST_CASE("argsort_desc is a monotone permutation on random input") {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 1 + static_cast<int>(rng.below(12));
    Vector v(n);
    for (int i = 0; i < n; ++i) v(i) = rng.uniform(-1.0, 1.0);
    const std::vector<int> order = argsort_desc(v);

    std::vector<int> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < n; ++i) REQUIRE(sorted[i] == i);
    for (int i = 0; i + 1 < n; ++i) REQUIRE(v(order[i]) >= v(order[i + 1]));
  }
}

TEST_CASE("min_singular_value on known matrices") {
  REQUIRE(min_singular_value(Matrix::Identity(3, 3)) == Approx(1.0));

  Matrix D = Matrix::Zero(3, 2);
  D(0, 0) = 3.0;
  D(1, 1) = 2.0;
  REQUIRE(min_singular_value(D) == Approx(2.0));

  REQUIRE_THROWS_AS(min_singular_value(Matrix(0, 0)), InvalidInput);
}

TEST_CASE("min_singular_value matches an eigen-solve of the Gram matrix") {
  Rng rng(42);
  const Matrix M = random_matrix(5, 3, rng);
  Eigen::SelfAdjointEigenSolver<Matrix> es(M.transpose() * M);
  const double oracle = std::sqrt(es.eigenvalues().minCoeff());
  REQUIRE(min_singular_value(M) == Approx(oracle).margin(1e-12));
}

TEST_CASE("MeasurementModel rejects bad shapes") {
  REQUIRE_THROWS_AS(MeasurementModel(Matrix::Identity(3, 3), 0.1),
                    InvalidInput);  // m must exceed n
  REQUIRE_THROWS_AS(MeasurementModel(Matrix::Identity(4, 3), -0.1),
                    InvalidInput);
  Matrix zc = Matrix::Identity(4, 3);
  zc.col(1).setZero();
  REQUIRE_THROWS_AS(MeasurementModel(zc, 0.1), InvalidInput);
}

TEST_CASE("generate_measurement clean case is exact") {
  Rng rng(1);
  Matrix C(4, 2);
  C << 1, 0, 0, 1, 1, 1, 1, -1;
  const MeasurementModel model(C, 0.0);
  Vector x(2);
  x << 0.3, -0.7;
  const AttackSpec none(SupportSet::none(4), 1.0, 2.0);
  const Measurement meas = generate_measurement(model, x, none, rng);
  REQUIRE((meas.y - C * x).norm() == 0.0);
  REQUIRE(meas.e.norm() == 0.0);
  REQUIRE(meas.v.norm() == 0.0);
}

TEST_CASE("generate_measurement enforces the attack/noise structure") {
  Rng rng(99);
  Rng setup(3);
  const Matrix C = random_matrix(6, 2, setup);
  const MeasurementModel model(C, 0.05);
  Vector x(2);
  x << 1.0, 2.0;
  const AttackSpec attack(SupportSet({1, 4}, 6), 0.5, 1.5);

  for (int rep = 0; rep < 200; ++rep) {
    const Measurement meas = generate_measurement(model, x, attack, rng);
    REQUIRE(support_of(meas.e, 0.0) == attack.support);
    REQUIRE(meas.v(1) == 0.0);
    REQUIRE(meas.v(4) == 0.0);
    REQUIRE(meas.e.dot(meas.v) == 0.0);
    REQUIRE(meas.v.norm() <= model.noise_bound);
    REQUIRE((meas.y - (C * x + meas.e + meas.v)).norm() == 0.0);
    for (int i : attack.support.indices())
      REQUIRE(std::abs(meas.e(i)) >= attack.magnitude_lo);
  }
}

TEST_CASE("generate_measurement rejects inconsistent input") {
  Rng rng(5);
  Rng setup(8);
  const MeasurementModel model(random_matrix(5, 2, setup), 0.5);
  Vector x(2);
  x << 0, 0;
  REQUIRE_THROWS_AS(
      generate_measurement(model, Vector::Zero(3),
                           AttackSpec(SupportSet::none(5), 1.0, 2.0), rng),
      InvalidInput);
  // magnitudes at or below the noise bound are rejected for nonempty attacks
  REQUIRE_THROWS_AS(
      generate_measurement(model, x, AttackSpec(SupportSet({0}, 5), 0.4, 2.0),
                           rng),
      InvalidInput);
}

TEST_CASE("AttackSpec validates its range") {
  REQUIRE_THROWS_AS(AttackSpec(SupportSet({0}, 3), 0.0, 1.0), InvalidInput);
  REQUIRE_THROWS_AS(AttackSpec(SupportSet({0}, 3), 2.0, 1.0), InvalidInput);
  REQUIRE_THROWS_AS(AttackSpec(SupportSet::all(3), 1.0, 2.0), InvalidInput);
}

TEST_CASE("IndicatorVector maps between sets and bits") {
  const SupportSet attacked({0, 3}, 5);
  const IndicatorVector q = IndicatorVector::from_attacked_set(attacked);
  REQUIRE(q.size() == 5);
  REQUIRE(q[0] == 0);
  REQUIRE(q[1] == 1);
  REQUIRE(q.zeros() == attacked);
  REQUIRE(q.ones() == attacked.complement());
  REQUIRE(q.count_ones() == 3);
  REQUIRE_THROWS_AS(IndicatorVector({0, 2}), InvalidInput);
}
