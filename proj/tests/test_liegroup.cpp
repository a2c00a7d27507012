#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "dvislam/errors.hpp"
#include "dvislam/liegroup.hpp"
#include "test_util.hpp"

using namespace dvislam;
using namespace dvislam::testing;

namespace {

// Matrix exponential by scaling and squaring of a truncated series; independent
// of the closed forms under test.
Eigen::Matrix4d expm_series(const Eigen::Matrix4d& a) {
  int s = 0;
  Eigen::Matrix4d m = a;
  while (m.norm() > 0.05) {
    m /= 2.0;
    ++s;
  }
  Eigen::Matrix4d term = Eigen::Matrix4d::Identity();
  Eigen::Matrix4d sum = Eigen::Matrix4d::Identity();
  for (int k = 1; k < 20; ++k) {
    term = term * m / k;
    sum += term;
  }
  for (int i = 0; i < s; ++i) sum = sum * sum;
  return sum;
}

}  // namespace

TEST_CASE("LieGroup.ExpMatchesSeries") {
  Rng rng(11);
  for (int i = 0; i < 50; ++i) {
    Twist xi = random_vector(rng, 6);
    const Eigen::Matrix4d oracle = expm_series(hat(xi));
    CHECK_LT((se3_exp(xi).matrix() - oracle).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST_CASE("LieGroup.LogInvertsExp") {
  Rng rng(12);
  for (int i = 0; i < 100; ++i) {
    Twist xi = random_vector(rng, 6);
    xi.tail<3>() *= 2.5 * rng.uniform() / xi.tail<3>().norm();
    CHECK_LT((se3_log(se3_exp(xi)) - xi).norm(), 1e-10);
  }
}

TEST_CASE("LieGroup.SmallAnglesUseSeries") {
  for (double a : {1e-3, 1e-6, 1e-8, 1e-10, 0.0}) {
    Twist xi;
    xi << 0.3, -0.2, 0.1, a, -a, 0.5 * a;
    const Pose T = se3_exp(xi);
    CHECK((T.is_valid(1e-12)));
    CHECK_LT((se3_log(T) - xi).norm(), 1e-12);
    CHECK_LT((T.matrix() - expm_series(hat(xi))).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST_CASE("LieGroup.LogNearPiThrows") {
  const Eigen::Vector3d axis = Eigen::Vector3d(1, 2, -1).normalized();
  CHECK_THROWS_AS(so3_log(so3_exp(axis * std::numbers::pi)), DegenerateRotation);
  CHECK_THROWS_AS(so3_log(so3_exp(axis * (std::numbers::pi - 1e-9))), DegenerateRotation);
  const Eigen::Vector3d phi = axis * (std::numbers::pi - 1e-3);
  CHECK_LT((so3_log(so3_exp(phi)) - phi).norm(), 1e-8);
}

TEST_CASE("LieGroup.AdjointConjugation") {
  Rng rng(13);
  for (int i = 0; i < 50; ++i) {
    const Pose T = random_pose(rng);
    const Twist xi = random_vector(rng, 6);
    const Twist lhs = se3_adjoint(T) * xi;
    const Twist rhs = vee(T.matrix() * hat(xi) * T.inverse().matrix());
    CHECK_LT((lhs - rhs).norm(), 1e-12);
  }
}

TEST_CASE("LieGroup.LeftJacobianFiniteDifference") {
  // exp(phi + d) ~ exp(J_l(phi) d) exp(phi)
  Rng rng(14);
  const double h = 1e-6;
  for (int i = 0; i < 50; ++i) {
    const Eigen::Vector3d phi = random_vector(rng, 3);
    const Eigen::Matrix3d R = so3_exp(phi);
    Eigen::Matrix3d fd;
    for (int k = 0; k < 3; ++k) {
      const Eigen::Vector3d d = Eigen::Vector3d::Unit(k) * h;
      fd.col(k) = (so3_log(so3_exp(phi + d) * R.transpose()) - so3_log(so3_exp(phi - d) * R.transpose())) / (2 * h);
    }
    CHECK_LT((fd - so3_left_jacobian(phi)).cwiseAbs().maxCoeff(), 1e-5);
    CHECK_LT((so3_left_jacobian(phi) * so3_left_jacobian_inverse(phi) - Eigen::Matrix3d::Identity()).norm(), 1e-12);
  }
}

TEST_CASE("LieGroup.InverseAndCompose") {
  Rng rng(15);
  const Pose a = random_pose(rng);
  const Pose b = random_pose(rng);
  CHECK_LT(((a * a.inverse()).matrix() - Eigen::Matrix4d::Identity()).norm(), 1e-12);
  CHECK_LT(((a * b).matrix() - a.matrix() * b.matrix()).norm(), 1e-12);
  const Eigen::Vector3d p(1, 2, 3);
  CHECK_LT(((a * b) * p - a * (b * p)).norm(), 1e-12);
}

TEST_CASE("LieGroup.LongCompositionStaysOrthonormal") {
  Rng rng(16);
  Pose T;
  for (int i = 0; i < 100000; ++i) {
    Twist xi = random_vector(rng, 6, 0.1);
    T = T * se3_exp(xi);
  }
  CHECK_LT(T.orthonormality_error(), 1e-9);
}

TEST_CASE("LieGroup.NormalizeRepairsDrift") {
  Eigen::Matrix3d R = so3_exp(Eigen::Vector3d(0.2, -0.4, 1.0));
  R(0, 1) += 1e-4;
  const Pose drifted(R, Eigen::Vector3d::Zero());
  CHECK_FALSE((drifted.is_valid()));
  CHECK_LT(drifted.normalized().orthonormality_error(), 1e-14);
  CHECK_THROWS_AS((Pose(R, Eigen::Vector3d(0, std::nan(""), 0))), InvalidArgument);
}
