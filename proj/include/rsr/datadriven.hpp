#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "rsr/errors.hpp"
#include "rsr/model.hpp"
#include "rsr/reconstruct.hpp"

namespace rsr {

// Synchronous samples of exogenous variables and measurements, one row each.
struct Dataset {
  Matrix sigma;  // N_d x n_sigma
  Matrix y;      // N_d x m

  Dataset(Matrix exogenous, Matrix measurements)
      : sigma(std::move(exogenous)), y(std::move(measurements)) {
    if (sigma.rows() != y.rows())
      throw InvalidInput("Dataset: sigma and y row counts differ");
    if (sigma.rows() <= sigma.cols() + 1)
      throw InvalidInput("Dataset: need more samples than n_sigma + 1");
    if (sigma.cols() < 1 || y.cols() < 1)
      throw InvalidInput("Dataset: empty columns");
  }

  int samples() const { return static_cast<int>(sigma.rows()); }
  int n_sigma() const { return static_cast<int>(sigma.cols()); }
  int m() const { return static_cast<int>(y.cols()); }
};

// Affine per-channel map sigma -> y. theta stacks the slopes over the
// intercept row, one column per output channel.
struct RegressorModel {
  Matrix theta;  // (n_sigma + 1) x m

  int n_sigma() const { return static_cast<int>(theta.rows()) - 1; }
  int m() const { return static_cast<int>(theta.cols()); }

  Vector predict(const Vector& sigma_in) const {
    if (sigma_in.size() != n_sigma())
      throw InvalidInput("RegressorModel::predict: exogenous length mismatch");
    return theta.topRows(n_sigma()).transpose() * sigma_in +
           theta.row(n_sigma()).transpose();
  }
};

// Exact empirical-loss minimizer for the affine model, one QR solve for all
// channels. The intercept absorbs any bias, so residuals have zero mean.
inline RegressorModel fit_regressor(const Dataset& data) {
  const int nd = data.samples();
  const int ns = data.n_sigma();
  Matrix X(nd, ns + 1);
  X.leftCols(ns) = data.sigma;
  X.col(ns).setOnes();

  Eigen::ColPivHouseholderQR<Matrix> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < ns + 1) {
    const auto perm = qr.colsPermutation().indices();
    std::string cols;
    for (int i = qr.rank(); i < ns + 1; ++i) {
      if (!cols.empty()) cols += ", ";
      const int original = perm(i);
      cols += original == ns ? std::string("intercept")
                             : std::to_string(original + 1);
    }
    throw InvalidInput("fit_regressor: collinear regressor columns: " + cols);
  }

  RegressorModel model{qr.solve(data.y)};
  const Matrix resid = data.y - X * model.theta;
  const double worst_mean = resid.colwise().mean().cwiseAbs().maxCoeff();
  if (worst_mean > 1e-8)
    throw NumericError("fit_regressor: residual mean " +
                       std::to_string(worst_mean) + " exceeds 1e-8");
  return model;
}

// Principal subspace of the fit residuals. Phi holds the top-n eigenvectors
// of the residual covariance; the spectrum beyond n sets the model-error
// bound sqrt(s_{n+1}) * safety_factor.
struct ResidualPca {
  Matrix Phi;              // m x n, orthonormal columns
  Vector singular_values;  // all m eigenvalues of the covariance, descending
  int n = 0;
  double noise_bound = 0.0;
  double safety_factor = 1.0;
};

inline ResidualPca residual_pca(const Dataset& data,
                                const RegressorModel& model, int n,
                                double safety_factor = -1.0) {
  const int m = data.m();
  if (model.m() != m || model.n_sigma() != data.n_sigma())
    throw InvalidInput("residual_pca: model does not match the dataset");
  if (n < 1 || n >= m)
    throw InvalidInput("residual_pca: n must lie in {1,...,m-1}");
  if (safety_factor < 0.0) safety_factor = std::sqrt(double(m - n));

  Matrix X(data.samples(), data.n_sigma() + 1);
  X.leftCols(data.n_sigma()) = data.sigma;
  X.col(data.n_sigma()).setOnes();
  const Matrix resid = data.y - X * model.theta;
  const Matrix cov = resid.transpose() * resid / double(data.samples());

  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  if (es.info() != Eigen::Success)
    throw NumericError("residual_pca: eigendecomposition failed");

  ResidualPca out;
  out.n = n;
  out.safety_factor = safety_factor;
  out.singular_values = Vector(m);
  out.Phi = Matrix(m, n);
  for (int i = 0; i < m; ++i)  // ascending -> descending
    out.singular_values(i) = std::max(es.eigenvalues()(m - 1 - i), 0.0);
  for (int j = 0; j < n; ++j) out.Phi.col(j) = es.eigenvectors().col(m - 1 - j);
  out.noise_bound = std::sqrt(out.singular_values(n)) * safety_factor;

  const double ortho =
      (out.Phi.transpose() * out.Phi - Matrix::Identity(n, n)).cwiseAbs().maxCoeff();
  if (ortho > 1e-10)
    throw NumericError("residual_pca: basis lost orthonormality");
  return out;
}

struct DataDrivenRecon {
  Vector x_hat;
  Vector y_hat;
  ReconResult recon;
};

// Resilient reconstruction against the data-driven surrogate: solve the
// ball-constrained fit on the trusted channels of y - f(sigma), pass trusted
// channels through, and rebuild flagged channels from the model.
inline DataDrivenRecon reconstruct_datadriven(const Vector& y,
                                              const Vector& sigma_in,
                                              const RegressorModel& model,
                                              const ResidualPca& pca,
                                              const SupportSet& safe,
                                              const BallConstraint& ball) {
  const int m = model.m();
  if (y.size() != m)
    throw InvalidInput("reconstruct_datadriven: measurement length mismatch");
  if (safe.universe() != m)
    throw InvalidInput("reconstruct_datadriven: support universe mismatch");
  if (static_cast<int>(pca.Phi.rows()) != m)
    throw InvalidInput("reconstruct_datadriven: pca does not match the model");

  const Vector predicted = model.predict(sigma_in);
  const Vector resid = y - predicted;

  DataDrivenRecon out;
  if (safe.empty()) {
    // Pure model prediction: no channel is trusted.
    out.recon.x_hat = ball.center;
    out.recon.residual_norm = 0.0;
    out.recon.active_rows = safe;
    out.recon.on_boundary = false;
  } else {
    const MeasurementModel mm(pca.Phi, pca.noise_bound);
    out.recon = constrained_ls(resid, mm, safe, ball);
  }
  out.x_hat = out.recon.x_hat;

  const Vector rebuilt = predicted + pca.Phi * out.x_hat;
  out.y_hat = Vector(m);
  for (int i = 0; i < m; ++i)
    out.y_hat(i) = safe.contains(i) ? y(i) : rebuilt(i);
  return out;
}

}  // namespace rsr
