#include "dvislam/liegroup.hpp"

#include <algorithm>

#include <Eigen/Dense>
#include <cmath>

#include "dvislam/errors.hpp"

namespace dvislam {

namespace {

constexpr double kSmallAngle = 1e-6;
constexpr double kPiMargin = 1e-7;
constexpr double kDriftTol = 1e-7;
constexpr std::uint32_t kRenormalizeEvery = 100;

Eigen::Matrix3d project_to_so3(const Eigen::Matrix3d& R) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d U = svd.matrixU();
  const Eigen::Matrix3d V = svd.matrixV();
  if ((U * V.transpose()).determinant() < 0.0) U.col(2) *= -1.0;
  return U * V.transpose();
}

bool all_finite(const Twist& xi) { return xi.allFinite(); }

}  // namespace

Pose::Pose(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
    : rotation_(rotation), translation_(translation) {
  if (!rotation.allFinite() || !translation.allFinite()) {
    throw InvalidArgument("Pose: non-finite rotation or translation");
  }
}

Pose Pose::from_matrix(const Eigen::Matrix4d& m) {
  return Pose(m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>());
}

Eigen::Matrix4d Pose::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

Pose Pose::inverse() const {
  Pose out;
  out.rotation_ = rotation_.transpose();
  out.translation_ = -(out.rotation_ * translation_);
  out.compositions_ = compositions_;
  return out;
}

Pose Pose::operator*(const Pose& rhs) const {
  Pose out;
  out.rotation_ = rotation_ * rhs.rotation_;
  out.translation_ = rotation_ * rhs.translation_ + translation_;
  out.compositions_ = std::max(compositions_, rhs.compositions_) + 1;
  if (out.compositions_ >= kRenormalizeEvery || out.orthonormality_error() > kDriftTol) {
    out.rotation_ = project_to_so3(out.rotation_);
    out.compositions_ = 0;
  }
  return out;
}

double Pose::orthonormality_error() const {
  const double ortho =
      (rotation_.transpose() * rotation_ - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  return std::max(ortho, std::abs(rotation_.determinant() - 1.0));
}

bool Pose::is_valid(double tol) const {
  return rotation_.allFinite() && translation_.allFinite() && orthonormality_error() <= tol;
}

Pose Pose::normalized() const { return Pose(project_to_so3(rotation_), translation_); }

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Eigen::Matrix4d hat(const Twist& xi) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  m.topLeftCorner<3, 3>() = skew(xi.tail<3>());
  m.topRightCorner<3, 1>() = xi.head<3>();
  return m;
}

Twist vee(const Eigen::Matrix4d& m) {
  Twist xi;
  xi.head<3>() = m.topRightCorner<3, 1>();
  xi.tail<3>() << m(2, 1), m(0, 2), m(1, 0);
  return xi;
}

Eigen::Matrix3d so3_exp(const Eigen::Vector3d& phi) {
  const double theta2 = phi.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Eigen::Matrix3d K = skew(phi);
  double a, b;
  if (theta < kSmallAngle) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  return Eigen::Matrix3d::Identity() + a * K + b * K * K;
}

Eigen::Vector3d so3_log(const Eigen::Matrix3d& R) {
  const Eigen::Vector3d w(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  const double two_sin = w.norm();
  const double two_cos = R.trace() - 1.0;
  const double theta = std::atan2(two_sin, two_cos);
  if (M_PI - theta < kPiMargin) {
    throw DegenerateRotation("so3_log: rotation angle within 1e-7 of pi");
  }
  if (theta < kSmallAngle) {
    // theta / (2 sin theta) ~ 1/2 + theta^2 / 12
    return (0.5 + theta * theta / 12.0) * w;
  }
  if (theta < 0.5 * M_PI) {
    return (theta / two_sin) * w;
  }
  // Near pi the skew part vanishes; recover the axis from the symmetric part.
  const double cos_t = 0.5 * two_cos;
  const Eigen::Matrix3d B = (0.5 * (R + R.transpose()) - cos_t * Eigen::Matrix3d::Identity()) /
                            (1.0 - cos_t);
  int k = 0;
  B.diagonal().maxCoeff(&k);
  Eigen::Vector3d axis = B.col(k) / std::sqrt(B(k, k));
  if (axis.dot(w) < 0.0) axis = -axis;
  return theta * axis.normalized();
}

Eigen::Matrix3d so3_left_jacobian(const Eigen::Vector3d& phi) {
  const double theta2 = phi.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Eigen::Matrix3d K = skew(phi);
  double b, c;
  if (theta < kSmallAngle) {
    b = 0.5 - theta2 / 24.0;
    c = 1.0 / 6.0 - theta2 / 120.0;
  } else {
    b = (1.0 - std::cos(theta)) / theta2;
    c = (theta - std::sin(theta)) / (theta2 * theta);
  }
  return Eigen::Matrix3d::Identity() + b * K + c * K * K;
}

Eigen::Matrix3d so3_left_jacobian_inverse(const Eigen::Vector3d& phi) {
  const double theta2 = phi.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Eigen::Matrix3d K = skew(phi);
  double d;
  if (theta < kSmallAngle) {
    d = 1.0 / 12.0 + theta2 / 720.0;
  } else {
    const double half = 0.5 * theta;
    d = (1.0 - half * std::cos(half) / std::sin(half)) / theta2;
  }
  return Eigen::Matrix3d::Identity() - 0.5 * K + d * K * K;
}

Pose se3_exp(const Twist& xi) {
  if (!all_finite(xi)) throw InvalidArgument("se3_exp: non-finite twist");
  const Eigen::Vector3d phi = xi.tail<3>();
  return Pose(so3_exp(phi), so3_left_jacobian(phi) * xi.head<3>());
}

Twist se3_log(const Pose& T) {
  const Eigen::Vector3d phi = so3_log(T.rotation());
  Twist xi;
  xi.head<3>() = so3_left_jacobian_inverse(phi) * T.translation();
  xi.tail<3>() = phi;
  return xi;
}

Matrix6d se3_adjoint(const Pose& T) {
  Matrix6d ad = Matrix6d::Zero();
  ad.topLeftCorner<3, 3>() = T.rotation();
  ad.topRightCorner<3, 3>() = skew(T.translation()) * T.rotation();
  ad.bottomRightCorner<3, 3>() = T.rotation();
  return ad;
}

}  // namespace dvislam
