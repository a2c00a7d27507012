#pragma once

#include <Eigen/Core>

#include "dvislam/liegroup.hpp"

namespace dvislam {

/// Rectified stereo pinhole pair. The right camera sits `baseline` meters
/// along the left camera's +x axis. Camera frame: x right, y down, z forward.
struct CameraModel {
  double fx = 450.0;
  double fy = 450.0;
  double cx = 320.0;
  double cy = 240.0;
  double baseline = 0.5;
  int width = 640;
  int height = 480;

  void validate() const;
};

/// (u_left, v, u_right) in pixels; v is shared by both rectified images.
using StereoPixel = Eigen::Vector3d;

/// Point expressed in the frame of a camera whose pose (camera to world) is T.
inline Eigen::Vector3d world_to_camera(const Pose& T, const Eigen::Vector3d& p_world) {
  return T.rotation().transpose() * (p_world - T.translation());
}

StereoPixel project(const CameraModel& cam, const Eigen::Vector3d& p_cam);
/// d project / d p_cam
Eigen::Matrix3d projection_jacobian(const CameraModel& cam, const Eigen::Vector3d& p_cam);

bool in_image(const CameraModel& cam, const StereoPixel& px);

struct ObservationLinearization {
  StereoPixel predicted;
  /// d z / d eps for the right perturbation T exp(eps^), eps = (rho, phi).
  Eigen::Matrix<double, 3, 6> wrt_pose;
  /// d z / d p_world
  Eigen::Matrix3d wrt_point;
};

ObservationLinearization linearize_observation(const CameraModel& cam, const Pose& T,
                                               const Eigen::Vector3d& p_world);

}  // namespace dvislam
