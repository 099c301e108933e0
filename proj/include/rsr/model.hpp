#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "rsr/errors.hpp"
#include "rsr/rng.hpp"

namespace rsr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Sorted set of indices over a fixed universe {0,...,m-1}. Indices are
// 0-based in memory; external text formats are 1-based and converted at the
// I/O boundary.
class SupportSet {
 public:
  SupportSet() = default;

  SupportSet(std::vector<int> indices, int universe_size)
      : idx_(std::move(indices)), m_(universe_size) {
    if (m_ < 0) throw InvalidInput("SupportSet: negative universe size");
    std::sort(idx_.begin(), idx_.end());
    for (std::size_t i = 0; i < idx_.size(); ++i) {
      if (idx_[i] < 0 || idx_[i] >= m_)
        throw InvalidInput("SupportSet: index " + std::to_string(idx_[i] + 1) +
                           " outside universe of size " + std::to_string(m_));
      if (i > 0 && idx_[i] == idx_[i - 1])
        throw InvalidInput("SupportSet: duplicate index " +
                           std::to_string(idx_[i] + 1));
    }
  }

  static SupportSet all(int universe_size) {
    std::vector<int> v(universe_size);
    std::iota(v.begin(), v.end(), 0);
    return {std::move(v), universe_size};
  }

  static SupportSet none(int universe_size) { return {{}, universe_size}; }

  int universe() const { return m_; }
  int size() const { return static_cast<int>(idx_.size()); }
  bool empty() const { return idx_.empty(); }
  const std::vector<int>& indices() const { return idx_; }

  bool contains(int i) const {
    return std::binary_search(idx_.begin(), idx_.end(), i);
  }

  SupportSet complement() const {
    std::vector<int> out;
    out.reserve(m_ - size());
    std::size_t k = 0;
    for (int i = 0; i < m_; ++i) {
      if (k < idx_.size() && idx_[k] == i) {
        ++k;
      } else {
        out.push_back(i);
      }
    }
    return {std::move(out), m_};
  }

  SupportSet intersect(const SupportSet& other) const {
    if (other.m_ != m_)
      throw InvalidInput("SupportSet::intersect: universe mismatch");
    std::vector<int> out;
    std::set_intersection(idx_.begin(), idx_.end(), other.idx_.begin(),
                          other.idx_.end(), std::back_inserter(out));
    return {std::move(out), m_};
  }

  friend bool operator==(const SupportSet&, const SupportSet&) = default;

 private:
  std::vector<int> idx_;
  int m_ = 0;
};

// Binary marker of safe (1) vs attacked (0) channels: q_i = 0 exactly when
// channel i is in the attacked set.
class IndicatorVector {
 public:
  IndicatorVector() = default;

  explicit IndicatorVector(std::vector<int> bits) {
    bits_.reserve(bits.size());
    for (int b : bits) {
      if (b != 0 && b != 1)
        throw InvalidInput("IndicatorVector: entries must be 0 or 1");
      bits_.push_back(static_cast<unsigned char>(b));
    }
  }

  // q = 1 everywhere except the attacked channels.
  static IndicatorVector from_attacked_set(const SupportSet& attacked) {
    std::vector<int> bits(attacked.universe(), 1);
    for (int i : attacked.indices()) bits[i] = 0;
    return IndicatorVector(std::move(bits));
  }

  int size() const { return static_cast<int>(bits_.size()); }
  int operator[](int i) const { return bits_[i]; }

  int count_ones() const {
    int c = 0;
    for (unsigned char b : bits_) c += b;
    return c;
  }

  // Channels flagged safe (the support of q).
  SupportSet ones() const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i)
      if (bits_[i]) out.push_back(i);
    return {std::move(out), size()};
  }

  // Channels flagged attacked.
  SupportSet zeros() const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i)
      if (!bits_[i]) out.push_back(i);
    return {std::move(out), size()};
  }

  friend bool operator==(const IndicatorVector&,
                         const IndicatorVector&) = default;

 private:
  std::vector<unsigned char> bits_;
};

// Linear measurement map y = C x + e + v with a known noise bound ||v|| <= eps.
struct MeasurementModel {
  Matrix C;
  double noise_bound = 0.0;

  MeasurementModel(Matrix output_matrix, double eps)
      : C(std::move(output_matrix)), noise_bound(eps) {
    if (C.rows() <= C.cols())
      throw InvalidInput(
          "MeasurementModel: measurements must outnumber states (m > n)");
    if (noise_bound < 0.0)
      throw InvalidInput("MeasurementModel: negative noise bound");
    for (int j = 0; j < C.cols(); ++j)
      if (C.col(j).norm() == 0.0)
        throw InvalidInput("MeasurementModel: column " + std::to_string(j + 1) +
                           " of C is all-zero; that state coordinate would be "
                           "unobservable");
  }

  int m() const { return static_cast<int>(C.rows()); }
  int n() const { return static_cast<int>(C.cols()); }
};

enum class SignMode { random_sign, positive };

// Sparse corruption injected on a fixed channel subset, with magnitudes well
// above the noise floor.
struct AttackSpec {
  SupportSet support;
  double magnitude_lo = 0.0;
  double magnitude_hi = 0.0;
  SignMode sign_mode = SignMode::random_sign;

  AttackSpec(SupportSet attacked, double lo, double hi,
             SignMode mode = SignMode::random_sign)
      : support(std::move(attacked)),
        magnitude_lo(lo),
        magnitude_hi(hi),
        sign_mode(mode) {
    if (!(lo > 0.0) || hi < lo)
      throw InvalidInput("AttackSpec: need 0 < lo <= hi for magnitudes");
    if (support.size() >= support.universe())
      throw InvalidInput(
          "AttackSpec: attack must leave at least one clean channel");
  }
};

// Rows of M (in S's order) stacked into a new matrix.
inline Matrix row_select(const Matrix& M, const SupportSet& rows) {
  if (rows.universe() != static_cast<int>(M.rows()))
    throw InvalidInput("row_select: support universe " +
                       std::to_string(rows.universe()) +
                       " does not match row count " + std::to_string(M.rows()));
  Matrix out(rows.size(), M.cols());
  int r = 0;
  for (int i : rows.indices()) out.row(r++) = M.row(i);
  return out;
}

inline Vector row_select(const Vector& v, const SupportSet& rows) {
  if (rows.universe() != static_cast<int>(v.size()))
    throw InvalidInput("row_select: support universe " +
                       std::to_string(rows.universe()) +
                       " does not match vector length " +
                       std::to_string(v.size()));
  Vector out(rows.size());
  int r = 0;
  for (int i : rows.indices()) out(r++) = v(i);
  return out;
}

// Indices whose magnitude exceeds the tolerance.
inline SupportSet support_of(const Vector& v, double tol = 1e-9) {
  if (tol < 0.0) throw InvalidInput("support_of: negative tolerance");
  std::vector<int> idx;
  for (int i = 0; i < v.size(); ++i)
    if (std::abs(v(i)) > tol) idx.push_back(i);
  return {std::move(idx), static_cast<int>(v.size())};
}

// Permutation sorting v in descending order; ties keep ascending index.
inline std::vector<int> argsort_desc(const Vector& v) {
  std::vector<int> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return v(a) > v(b); });
  return idx;
}

inline double min_singular_value(const Matrix& M) {
  if (M.size() == 0) throw InvalidInput("min_singular_value: empty matrix");
  Eigen::JacobiSVD<Matrix> svd(M);
  return svd.singularValues().minCoeff();
}

struct Measurement {
  Vector y;  // observed
  Vector e;  // attack
  Vector v;  // bounded noise, zero on the attack support
};

// Draws y = C x + e + v. Attack magnitudes are uniform in [lo, hi] with the
// requested sign rule. Noise is uniform on a sphere of radius u*eps
// (u ~ U[0,1]) and then zeroed on the attack support without re-scaling, so
// ||v|| <= eps and e'v = 0 both hold by construction.
inline Measurement generate_measurement(const MeasurementModel& model,
                                        const Vector& x_true,
                                        const AttackSpec& attack, Rng& rng) {
  const int m = model.m();
  if (x_true.size() != model.n())
    throw InvalidInput("generate_measurement: state dimension mismatch");
  if (attack.support.universe() != m)
    throw InvalidInput(
        "generate_measurement: attack support universe does not match m");
  if (!attack.support.empty() && attack.magnitude_lo <= model.noise_bound)
    throw InvalidInput(
        "generate_measurement: attack magnitudes must exceed the noise bound");

  Measurement out;
  out.e = Vector::Zero(m);
  for (int i : attack.support.indices()) {
    const double mag = rng.uniform(attack.magnitude_lo, attack.magnitude_hi);
    const double sgn =
        (attack.sign_mode == SignMode::random_sign && rng.chance(0.5)) ? -1.0
                                                                       : 1.0;
    out.e(i) = sgn * mag;
  }

  out.v = Vector::Zero(m);
  if (model.noise_bound > 0.0) {
    Vector g(m);
    double norm = 0.0;
    do {
      for (int i = 0; i < m; ++i) g(i) = rng.normal();
      norm = g.norm();
    } while (norm == 0.0);
    const double scale = rng.uniform01() * model.noise_bound / norm;
    out.v = g * scale;
    for (int i : attack.support.indices()) out.v(i) = 0.0;
  }

  out.y = model.C * x_true + out.e + out.v;
  return out;
}

}  // namespace rsr
