#include "dvislam/ckf.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "dvislam/errors.hpp"

namespace dvislam {

void NoiseCorrelation::check_consistent(const Eigen::MatrixXd& W, const Eigen::MatrixXd& V) const {
  const Eigen::Index n = W.rows();
  const Eigen::Index m = V.rows();
  if (S.rows() != n || S.cols() != m) {
    throw DimensionMismatch("NoiseCorrelation: S must be motion-dim x observation-dim");
  }
  Eigen::MatrixXd joint(n + m, n + m);
  joint << W, S, S.transpose(), V;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(joint), Eigen::EigenvaluesOnly);
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  if (es.eigenvalues().minCoeff() < -1e-12 * scale) {
    throw InvalidArgument("NoiseCorrelation: joint noise covariance is not PSD");
  }
}

CorrelatedGain correlated_gain(const Eigen::MatrixXd& prior_cov, const Eigen::MatrixXd& H,
                               const Eigen::MatrixXd& V, const Eigen::MatrixXd& S) {
  const Eigen::Index n = prior_cov.rows();
  const Eigen::Index m = H.rows();
  if (H.cols() != n || V.rows() != m || V.cols() != m) {
    throw DimensionMismatch("correlated_gain: H/V dimensions do not match the state");
  }
  const bool has_corr = S.size() != 0;
  if (has_corr && (S.rows() != n || S.cols() != m)) {
    throw DimensionMismatch("correlated_gain: S must be state-dim x observation-dim");
  }

  // cross = cov(z, s) = H P + S^T
  Eigen::MatrixXd cross = H * prior_cov;
  if (has_corr) cross += S.transpose();
  Eigen::MatrixXd innov = cross * H.transpose() + V;
  if (has_corr) innov += H * S;
  innov = symmetrize(innov);

  Eigen::LLT<Eigen::MatrixXd> llt(innov);
  if (llt.info() != Eigen::Success || !innov.allFinite()) {
    throw InnovationNotSpd("correlated update: innovation covariance is not SPD");
  }
  CorrelatedGain out;
  out.gain = llt.solve(cross).transpose();
  out.posterior_cov = symmetrize(prior_cov - out.gain * cross);
  out.innovation_cov = std::move(innov);
  return out;
}

Gaussian ckf_predict(const Gaussian& state, const Eigen::VectorXd& u, const Eigen::MatrixXd& F,
                     const Eigen::MatrixXd& G, const Eigen::MatrixXd& W) {
  const Eigen::Index n = state.dim();
  if (F.rows() != F.cols() || F.cols() != n || W.rows() != F.rows() || W.cols() != F.rows() ||
      G.rows() != F.rows() || G.cols() != u.size()) {
    throw DimensionMismatch("ckf_predict: F/G/W/u dimensions are inconsistent");
  }
  Eigen::VectorXd mean = F * state.mean;
  if (u.size() > 0) mean += G * u;
  return Gaussian(std::move(mean), symmetrize(F * state.cov * F.transpose() + W));
}

Gaussian ckf_update(const Gaussian& state, const Eigen::VectorXd& z, const Eigen::MatrixXd& H,
                    const Eigen::MatrixXd& V, const NoiseCorrelation& corr) {
  if (z.size() != H.rows()) throw DimensionMismatch("ckf_update: z does not match H");
  const auto g = correlated_gain(state.cov, H, V, corr.S);
  Eigen::VectorXd mean = state.mean + g.gain * (z - H * state.mean);
  return Gaussian(std::move(mean), g.posterior_cov);
}

}  // namespace dvislam
