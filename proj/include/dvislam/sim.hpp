#pragma once

// Synthetic multi-robot stereo scenarios: robots follow Lissajous curves
// through a field of Gaussian-scattered landmarks. Geometric landmarks are
// private to one robot; objects are global and shared.

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "dvislam/camera.hpp"
#include "dvislam/liegroup.hpp"
#include "dvislam/msckf.hpp"
#include "dvislam/rng.hpp"

namespace dvislam {

/// p(tau) = center + (amp_x sin(freq_x tau + phase), amp_y sin(freq_y tau), height)
struct LissajousCurve {
  double amp_x = 40.0;
  double amp_y = 30.0;
  double freq_x = 1.0;
  double freq_y = 2.0;
  double phase = 0.0;
  double height = 0.0;
  Eigen::Vector2d center = Eigen::Vector2d::Zero();

  Eigen::Vector3d position(double tau) const;
  Eigen::Vector3d velocity(double tau) const;
};

/// Camera pose at `tau`: optical axis along the horizontal velocity, image
/// y axis pointing down, no roll or pitch.
Pose curve_pose(const LissajousCurve& curve, double tau);

/// Equal figures with evenly spread phases, centered on a ring whose
/// neighbouring centers are `spacing` meters apart (0: one shared center).
std::vector<LissajousCurve> default_curves(std::size_t n_robots, double spacing = 0.0);

struct SimConfig {
  std::size_t n_robots = 3;
  std::size_t horizon = 300;
  /// Curve parameter covered over the run, in full periods of 2 pi.
  double cycles = 1.0;
  /// Empty: default_curves(n_robots, curve_spacing).
  std::vector<LissajousCurve> curves;
  double curve_spacing = 40.0;

  std::size_t n_objects = 210;
  double object_spread = 6.0;
  std::size_t geometric_per_step = 4;
  double geometric_spread = 10.0;

  double sigma_pixel = 1.0;
  double sigma_pixel_object = 3.0;
  Matrix6d odometry_cov = default_odometry_cov();

  CameraModel camera;
  double min_depth = 1.0;
  double max_depth = 40.0;
  std::size_t window_size = 10;
  std::uint64_t seed = 1;

  static Matrix6d default_odometry_cov();
  void validate() const;
  std::vector<LissajousCurve> resolved_curves() const;
};

enum class LandmarkKind { geometric, object };

struct Landmark {
  LandmarkId id;
  LandmarkKind kind;
  int owner;  // robot index for geometric landmarks, -1 for objects
  Eigen::Vector3d position;
};

using PixelObservation = std::pair<LandmarkId, StereoPixel>;

struct RobotStep {
  /// Measured relative pose from the previous timestep (identity at t = 0).
  Pose odometry;
  std::vector<PixelObservation> geometric;
  std::vector<ObjectObservation> objects;
};

struct Scenario {
  SimConfig config;
  std::vector<std::vector<Pose>> ground_truth;  // [robot][t]
  std::vector<Landmark> landmarks;               // ascending id
  std::vector<std::vector<RobotStep>> steps;     // [robot][t]

  std::size_t robots() const { return ground_truth.size(); }
  std::size_t horizon() const { return ground_truth.empty() ? 0 : ground_truth.front().size(); }
  /// Ground-truth object positions by id.
  std::vector<std::pair<LandmarkId, Eigen::Vector3d>> objects() const;
};

/// Throws ScenarioInfeasible if some robot never sees a landmark.
Scenario generate_scenario(const SimConfig& cfg);

/// Stereo observations of every landmark in front of the camera (within
/// [min_depth, max_depth]) whose noiseless projection lies in both images.
std::vector<PixelObservation> observe(const Pose& pose, const std::vector<Landmark>& landmarks,
                                      const CameraModel& cam, double sigma, Rng& rng,
                                      double min_depth = 1e-6,
                                      double max_depth = std::numeric_limits<double>::infinity());

/// true_delta * exp(w^), w ~ N(0, W).
Pose perturb_odometry(const Pose& true_delta, const Matrix6d& W, Rng& rng);

}  // namespace dvislam
