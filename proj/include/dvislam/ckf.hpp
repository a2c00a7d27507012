#pragma once

// Kalman filter with correlated motion and observation noise.
//
//   s_t = F s_{t-1} + G u + w,   z_t = H s_t + v,   S = E[w v^T]
//
// With S = 0 every routine here reduces to the textbook Kalman filter.

#include <Eigen/Core>

#include "dvislam/gaussian.hpp"

namespace dvislam {

/// Cross-covariance E[w v^T] between motion noise (rows) and observation
/// noise (columns).
struct NoiseCorrelation {
  Eigen::MatrixXd S;

  static NoiseCorrelation zero(Eigen::Index state_dim, Eigen::Index obs_dim) {
    return {Eigen::MatrixXd::Zero(state_dim, obs_dim)};
  }
  bool is_zero() const { return S.size() == 0 || S.isZero(0.0); }

  /// Throws InvalidArgument unless [[W, S], [S^T, V]] is positive semidefinite.
  void check_consistent(const Eigen::MatrixXd& W, const Eigen::MatrixXd& V) const;
};

/// Gain and covariance of one correlated update, computed without forming an
/// explicit inverse of the innovation covariance.
struct CorrelatedGain {
  Eigen::MatrixXd gain;            // K = (P H^T + S) C^-1
  Eigen::MatrixXd posterior_cov;   // (I - K H) P - K S^T, symmetrized
  Eigen::MatrixXd innovation_cov;  // C = H P H^T + V + H S + S^T H^T
};

/// Throws InnovationNotSpd if C is not SPD.
CorrelatedGain correlated_gain(const Eigen::MatrixXd& prior_cov, const Eigen::MatrixXd& H,
                               const Eigen::MatrixXd& V, const Eigen::MatrixXd& S);

Gaussian ckf_predict(const Gaussian& state, const Eigen::VectorXd& u, const Eigen::MatrixXd& F,
                     const Eigen::MatrixXd& G, const Eigen::MatrixXd& W);

Gaussian ckf_update(const Gaussian& state, const Eigen::VectorXd& z, const Eigen::MatrixXd& H,
                    const Eigen::MatrixXd& V, const NoiseCorrelation& corr);

}  // namespace dvislam
