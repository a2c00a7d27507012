#include "dvislam/camera.hpp"

#include "dvislam/errors.hpp"

namespace dvislam {

void CameraModel::validate() const {
  if (!(fx > 0.0 && fy > 0.0 && baseline > 0.0)) {
    throw InvalidArgument("CameraModel: fx, fy and baseline must be positive");
  }
  if (width <= 0 || height <= 0) throw InvalidArgument("CameraModel: image size must be positive");
}

StereoPixel project(const CameraModel& cam, const Eigen::Vector3d& p) {
  const double inv_z = 1.0 / p.z();
  return {cam.fx * p.x() * inv_z + cam.cx, cam.fy * p.y() * inv_z + cam.cy,
          cam.fx * (p.x() - cam.baseline) * inv_z + cam.cx};
}

Eigen::Matrix3d projection_jacobian(const CameraModel& cam, const Eigen::Vector3d& p) {
  const double inv_z = 1.0 / p.z();
  const double inv_z2 = inv_z * inv_z;
  Eigen::Matrix3d J;
  J << cam.fx * inv_z, 0.0, -cam.fx * p.x() * inv_z2,
       0.0, cam.fy * inv_z, -cam.fy * p.y() * inv_z2,
       cam.fx * inv_z, 0.0, -cam.fx * (p.x() - cam.baseline) * inv_z2;
  return J;
}

bool in_image(const CameraModel& cam, const StereoPixel& px) {
  const auto inside_u = [&](double u) { return u >= 0.0 && u < cam.width; };
  return inside_u(px.x()) && inside_u(px.z()) && px.y() >= 0.0 && px.y() < cam.height;
}

ObservationLinearization linearize_observation(const CameraModel& cam, const Pose& T,
                                               const Eigen::Vector3d& p_world) {
  const Eigen::Vector3d p_cam = world_to_camera(T, p_world);
  const Eigen::Matrix3d J = projection_jacobian(cam, p_cam);
  ObservationLinearization out;
  out.predicted = project(cam, p_cam);
  // p_cam(T exp(eps)) ~ p_cam - rho + [p_cam]x phi
  out.wrt_pose.leftCols<3>() = -J;
  out.wrt_pose.rightCols<3>() = J * skew(p_cam);
  out.wrt_point = J * T.rotation().transpose();
  return out;
}

}  // namespace dvislam
