#pragma once

// SE(3) kernel.
//
// Tangent convention used everywhere in this library (including every
// Jacobian): a twist is xi = (rho, phi), translation part first, rotation
// part second. The hat operator is
//
//   xi^ = [ phi^  rho ]
//         [  0     0  ]
//
// and pose uncertainty is a right perturbation, T_true = T * exp(eps^).

#include <Eigen/Core>
#include <cstdint>

namespace dvislam {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;
using Twist = Vector6d;

/// Rigid transform with the rotation stored as an orthonormal 3x3 matrix.
class Pose {
 public:
  Pose() : rotation_(Eigen::Matrix3d::Identity()), translation_(Eigen::Vector3d::Zero()) {}
  Pose(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation);

  static Pose identity() { return Pose(); }
  /// Builds from a 4x4 homogeneous matrix (bottom row ignored).
  static Pose from_matrix(const Eigen::Matrix4d& m);

  const Eigen::Matrix3d& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }
  Eigen::Matrix4d matrix() const;

  Pose inverse() const;
  Pose operator*(const Pose& rhs) const;
  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const { return rotation_ * p + translation_; }

  /// max(|R^T R - I|_inf, |det R - 1|)
  double orthonormality_error() const;
  bool is_valid(double tol = 1e-9) const;

  /// Projects the rotation back onto SO(3) (nearest orthonormal matrix).
  Pose normalized() const;

 private:
  Eigen::Matrix3d rotation_;
  Eigen::Vector3d translation_;
  std::uint32_t compositions_ = 0;
};

Eigen::Matrix3d skew(const Eigen::Vector3d& v);
Eigen::Matrix4d hat(const Twist& xi);
Twist vee(const Eigen::Matrix4d& m);

Eigen::Matrix3d so3_exp(const Eigen::Vector3d& phi);
/// Rotation vector of R. Throws DegenerateRotation within 1e-7 of pi.
Eigen::Vector3d so3_log(const Eigen::Matrix3d& R);
/// Left Jacobian of SO(3), the V matrix of the SE(3) exponential.
Eigen::Matrix3d so3_left_jacobian(const Eigen::Vector3d& phi);
Eigen::Matrix3d so3_left_jacobian_inverse(const Eigen::Vector3d& phi);

Pose se3_exp(const Twist& xi);
Twist se3_log(const Pose& T);
/// Ad(T) with Ad(T) xi = vee(T xi^ T^-1), under the (rho, phi) ordering.
Matrix6d se3_adjoint(const Pose& T);

/// T * exp(eps^).
inline Pose retract(const Pose& T, const Twist& eps) { return T * se3_exp(eps); }

}  // namespace dvislam
