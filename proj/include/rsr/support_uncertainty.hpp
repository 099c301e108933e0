#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "rsr/errors.hpp"
#include "rsr/model.hpp"
#include "rsr/rng.hpp"

namespace rsr {

// Per-node localization quality: p_i is the probability that the oracle's
// flag for node i agrees with the truth, s_i an associated confidence score.
struct OracleModel {
  Vector p;
  Vector s;

  OracleModel(Vector rates, Vector confidences)
      : p(std::move(rates)), s(std::move(confidences)) {
    if (p.size() != s.size())
      throw InvalidInput("OracleModel: p and s must have the same length");
    for (int i = 0; i < p.size(); ++i) {
      if (!(p(i) >= 0.0 && p(i) <= 1.0))
        throw InvalidInput("OracleModel: p[" + std::to_string(i + 1) +
                           "] outside [0, 1]");
      if (!(s(i) >= 0.0 && s(i) <= 1.0))
        throw InvalidInput("OracleModel: s[" + std::to_string(i + 1) +
                           "] outside [0, 1]");
    }
  }

  static OracleModel uniform(int m, double rate, double confidence = 1.0) {
    return {Vector::Constant(m, rate), Vector::Constant(m, confidence)};
  }

  int size() const { return static_cast<int>(p.size()); }

  // Same statistics tiled over `factor` time slots (slot-major layout, node j
  // of slot k at position k*m + j).
  OracleModel replicate(int factor) const {
    if (factor < 1) throw InvalidInput("OracleModel::replicate: factor < 1");
    const int m = size();
    Vector rp(m * factor), rs(m * factor);
    for (int k = 0; k < factor; ++k) {
      rp.segment(k * m, m) = p;
      rs.segment(k * m, m) = s;
    }
    return {std::move(rp), std::move(rs)};
  }
};

enum class LEtaIndexing {
  exact_tail,  // Pr(sum >= k) computed as the exact upper tail
  paper        // literal published indexing, which sums one extra term
};

enum class SupportMode {
  random_matching,
  ranked_literal,
  ranked_conservative,
  true_support
};

enum class RankedMode { literal, conservative };

// Flips each node's true flag independently with probability 1 - p_i.
inline IndicatorVector sample_oracle(const IndicatorVector& q_true,
                                     const OracleModel& oracle, Rng& rng) {
  if (q_true.size() != oracle.size())
    throw InvalidInput("sample_oracle: indicator/oracle length mismatch");
  std::vector<int> bits(q_true.size());
  for (int i = 0; i < q_true.size(); ++i) {
    const bool agree = rng.chance(oracle.p(i));
    bits[i] = agree ? q_true[i] : 1 - q_true[i];
  }
  return IndicatorVector(std::move(bits));
}

// PMF of a sum of independent Bernoulli(p_i), length m+1, computed by the
// stable add-one-trial-at-a-time recurrence. r[k] = Pr(sum == k).
inline Vector poisson_binomial_pmf(const Vector& p) {
  for (int i = 0; i < p.size(); ++i)
    if (!(p(i) >= 0.0 && p(i) <= 1.0))
      throw InvalidInput("poisson_binomial_pmf: p[" + std::to_string(i + 1) +
                         "] outside [0, 1]");
  std::vector<double> r{1.0};
  for (int i = 0; i < p.size(); ++i) {
    const double pi = p(i);
    std::vector<double> next(r.size() + 1, 0.0);
    for (std::size_t k = 0; k < r.size(); ++k) {
      next[k] += (1.0 - pi) * r[k];
      next[k + 1] += pi * r[k];
    }
    r = std::move(next);
  }
  return Eigen::Map<Vector>(r.data(), static_cast<Eigen::Index>(r.size()));
}

// Same PMF through the closed convolution form
//   r = alpha * [(1-p_1)/p_1; 1] * ... * [(1-p_m)/p_m; 1],  alpha = prod p_i.
// Undefined at p_i = 0; kept as a cross-check of the recurrence above.
inline Vector pmf_convolution_form(const Vector& p) {
  double alpha = 1.0;
  for (int i = 0; i < p.size(); ++i) {
    if (!(p(i) >= 0.0 && p(i) <= 1.0))
      throw InvalidInput("pmf_convolution_form: p[" + std::to_string(i + 1) +
                         "] outside [0, 1]");
    if (p(i) == 0.0)
      throw InvalidInput("pmf_convolution_form: p[" + std::to_string(i + 1) +
                         "] = 0 makes the factor form undefined");
    alpha *= p(i);
  }
  std::vector<double> r{1.0};
  for (int i = 0; i < p.size(); ++i) {
    const double c0 = (1.0 - p(i)) / p(i);
    std::vector<double> next(r.size() + 1, 0.0);
    for (std::size_t k = 0; k < r.size(); ++k) {
      next[k] += c0 * r[k];
      next[k + 1] += r[k];
    }
    r = std::move(next);
  }
  Vector out = Eigen::Map<Vector>(r.data(), static_cast<Eigen::Index>(r.size()));
  return alpha * out;
}

// Largest k such that at least k nodes are correctly localized with
// probability >= eta. The exact_tail mode uses Pr(sum >= k) directly; the
// paper mode reproduces the published prefix rule, which runs one term long
// and can report -1 when no k qualifies.
inline int compute_l_eta(const Vector& r, double eta,
                         LEtaIndexing indexing = LEtaIndexing::exact_tail) {
  if (!(eta > 0.0 && eta <= 1.0))
    throw InvalidInput("compute_l_eta: eta must lie in (0, 1]");
  const int m = static_cast<int>(r.size()) - 1;
  if (m < 0) throw InvalidInput("compute_l_eta: empty pmf");
  double total = 0.0;
  for (int k = 0; k <= m; ++k) {
    if (r(k) < -1e-12)
      throw InvalidInput("compute_l_eta: pmf has a negative entry");
    total += r(k);
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw InvalidInput("compute_l_eta: pmf does not sum to 1");

  if (indexing == LEtaIndexing::exact_tail) {
    double tail = 0.0;  // accumulated from the top for accuracy
    for (int k = m; k >= 1; --k) {
      tail += r(k);
      if (tail >= eta) return k;
    }
    return 0;  // Pr(sum >= 0) = 1 always qualifies
  }

  double prefix = 0.0;
  int best = -1;
  for (int k = 0; k <= m; ++k) {
    prefix += r(k);
    if (prefix <= 1.0 - eta)
      best = k;
    else
      break;
  }
  return best;
}

// PMF plus the reliability integer for a given eta.
struct ReliabilityProfile {
  Vector r;
  int l_eta = -1;
  double eta = 0.0;

  static ReliabilityProfile from_rates(
      const Vector& p, double eta,
      LEtaIndexing indexing = LEtaIndexing::exact_tail) {
    ReliabilityProfile out;
    out.r = poisson_binomial_pmf(p);
    out.eta = eta;
    out.l_eta = compute_l_eta(out.r, eta, indexing);
    return out;
  }
};

// Keeps the oracle's output on l_eta uniformly chosen positions, zeroing the
// rest, and returns the surviving safe set.
inline SupportSet robust_support_random(const IndicatorVector& q_hat,
                                        int l_eta, Rng& rng) {
  const int m = q_hat.size();
  if (l_eta < 0 || l_eta > m)
    throw InvalidInput("robust_support_random: l_eta out of range");
  std::vector<int> safe;
  for (int i : rng.sample_without_replacement(m, l_eta))
    if (q_hat[i] == 1) safe.push_back(i);
  return {std::move(safe), m};
}

// Confidence-ranked robust support. W holds the l_eta most trusted nodes by
// p o s. The literal mode applies the set formula (T_hat ∩ W)^c as written;
// the conservative mode keeps only trusted nodes that are also flagged safe.
inline SupportSet robust_support_ranked(
    const IndicatorVector& q_hat, const OracleModel& oracle, int l_eta,
    RankedMode mode = RankedMode::conservative) {
  const int m = q_hat.size();
  if (oracle.size() != m)
    throw InvalidInput("robust_support_ranked: oracle length mismatch");
  if (l_eta < 0 || l_eta > m)
    throw InvalidInput("robust_support_ranked: l_eta out of range");
  const Vector trust = oracle.p.cwiseProduct(oracle.s);
  std::vector<int> order = argsort_desc(trust);
  std::vector<int> top(order.begin(), order.begin() + l_eta);
  const SupportSet trusted(std::move(top), m);
  if (mode == RankedMode::literal)
    return q_hat.zeros().intersect(trusted).complement();
  return trusted.intersect(q_hat.ones());
}

}  // namespace rsr
