#pragma once

// One robot's filter node: a sliding window of camera poses plus persistent
// object landmarks, with consensus averaging over shared landmarks.
//
// State layout: [eps_0 .. eps_{c-1} | p_0 .. p_{m-1}], where eps_k is the
// right-perturbation twist of window pose k (oldest first) and p_j are the
// landmark positions sorted by global id. The pose perturbation mean is zero
// by convention; every update retracts it into the poses.

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "dvislam/camera.hpp"
#include "dvislam/gaussian.hpp"
#include "dvislam/liegroup.hpp"

namespace dvislam {

using LandmarkId = std::int64_t;

struct NodeState {
  std::vector<Pose> poses;
  /// Timestep each window pose belongs to, parallel to `poses`.
  std::vector<std::int64_t> stamps;
  std::vector<LandmarkId> landmark_ids;  // strictly ascending
  std::vector<Eigen::Vector3d> landmarks;
  Eigen::MatrixXd cov;

  Eigen::Index dim() const { return 6 * pose_count() + 3 * landmark_count(); }
  Eigen::Index pose_count() const { return static_cast<Eigen::Index>(poses.size()); }
  Eigen::Index landmark_count() const { return static_cast<Eigen::Index>(landmarks.size()); }
  Eigen::Index pose_offset(std::size_t k) const { return 6 * static_cast<Eigen::Index>(k); }
  Eigen::Index landmark_offset(std::size_t j) const {
    return 6 * pose_count() + 3 * static_cast<Eigen::Index>(j);
  }
  std::optional<std::size_t> find_landmark(LandmarkId id) const;
  std::optional<std::size_t> find_stamp(std::int64_t stamp) const;

  /// Throws InvalidArgument on layout violations.
  void validate() const;

  static NodeState initial(const Pose& pose, std::int64_t stamp, const Matrix6d& pose_cov);
};

struct StereoObservation {
  std::size_t pose_index;
  StereoPixel pixel;
};

struct FeatureTrack {
  LandmarkId id;
  std::vector<StereoObservation> observations;
};

struct ObjectObservation {
  LandmarkId id;
  StereoPixel pixel;
  std::int64_t timestep;
};

/// Information-form marginal over a set of landmarks, as sent to a neighbour.
struct LandmarkMessage {
  double weight;
  std::vector<LandmarkId> ids;  // ascending
  InfoGaussian marginal;        // over the 3 * ids.size() positions, in id order
};

struct FilterConfig {
  std::size_t window_size = 10;
  Eigen::Matrix3d geometric_noise = Eigen::Matrix3d::Identity();  // V_g per stereo observation
  Eigen::Matrix3d object_noise = Eigen::Matrix3d::Identity() * 9.0;  // V_o
  /// E[w v^T] between odometry noise and one geometric observation taken at
  /// the newest pose.
  Eigen::Matrix<double, 6, 3> odometry_observation_correlation = Eigen::Matrix<double, 6, 3>::Zero();
  bool chi2_gating = true;
  double chi2_confidence = 0.95;
  bool jitter_enabled = false;
  double jitter = 1e-9;
  double min_disparity_px = 0.5;
  double min_baseline_m = 0.05;
  int max_gauss_newton_iterations = 10;
  /// Initialization is deferred while the new landmark's largest standard
  /// deviation exceeds this.
  double max_init_sigma_m = 2.0;
  /// Only used while projecting; compress the stacked system when it has
  /// more rows than the state.
  bool compress_rows = true;
};

struct UpdateDiagnostics {
  std::size_t tracks_used = 0;
  std::size_t tracks_gated = 0;
  std::size_t tracks_untriangulable = 0;
  std::size_t object_rows = 0;
  std::size_t objects_gated = 0;
  std::size_t geometric_rows = 0;
  double max_nullspace_residual = 0.0;
  std::size_t jitter_events = 0;
};

/// Landmark-only marginal of `node` in information form, ids in ascending order.
InfoGaussian landmark_marginal(const NodeState& node, std::span<const LandmarkId> ids);

/// Consensus step. Every message must carry ids that are a subset of the
/// node's landmarks; the averaged set is the union of all message ids. A
/// message covering only part of that set is completed with the node's own
/// conditional, so an empty message stands for the node's own marginal.
NodeState consensus_average(const NodeState& node, std::span<const LandmarkMessage> messages,
                            const FilterConfig& config = {}, UpdateDiagnostics* diag = nullptr);

/// Appends pose previous-newest * delta. Drops the oldest pose once the
/// window already holds `window_size` poses.
NodeState propagate(const NodeState& node, const Pose& delta, const Matrix6d& odometry_cov,
                    std::int64_t stamp, std::size_t window_size);

struct Triangulation {
  Eigen::Vector3d point;
  double rms;  // reprojection residual RMS in pixels
};

/// Multi-view triangulation of stereo observations taken from camera poses
/// `poses` (camera to world). Throws LowParallax on insufficient geometry or
/// if the refined point is not in front of every camera.
Triangulation triangulate(std::span<const Pose> poses, std::span<const StereoPixel> pixels,
                          const CameraModel& cam, const FilterConfig& config = {});

/// Orthonormal basis of the left nullspace of a full-column-rank H (rows x 3),
/// as the columns of the returned rows x (rows - 3) matrix.
Eigen::MatrixXd left_nullspace(const Eigen::MatrixXd& H);

/// Structureless updates from `tracks` plus object updates for landmarks
/// already in the state. Object observations of unknown landmarks are ignored
/// here (the caller routes them to initialize_landmark).
NodeState msckf_update(const NodeState& node, std::span<const FeatureTrack> tracks,
                       std::span<const ObjectObservation> objects, const CameraModel& cam,
                       const FilterConfig& config, UpdateDiagnostics* diag = nullptr);

/// Linear update on the perturbation state: delta = K r, poses retracted,
/// landmarks shifted, covariance replaced. `S` may be empty.
NodeState apply_correlated_update(const NodeState& node, const Eigen::VectorXd& residual,
                                  const Eigen::MatrixXd& H, const Eigen::MatrixXd& V,
                                  const Eigen::MatrixXd& S, const FilterConfig& config,
                                  UpdateDiagnostics* diag = nullptr);

/// Adds landmark `id` from accumulated observations. Returns nullopt (node
/// untouched) with fewer than two usable observations, on low parallax, or
/// while the landmark would be too uncertain (max_init_sigma_m).
std::optional<NodeState> initialize_landmark(const NodeState& node, LandmarkId id,
                                             std::span<const ObjectObservation> observations,
                                             const CameraModel& cam, const FilterConfig& config,
                                             UpdateDiagnostics* diag = nullptr);

/// Per-robot driver holding feature tracks and pending object observations
/// between timesteps.
class RobotFilter {
 public:
  RobotFilter(NodeState initial, CameraModel cam, FilterConfig config);

  const NodeState& state() const { return state_; }
  const FilterConfig& config() const { return config_; }
  const CameraModel& camera() const { return cam_; }
  std::size_t jitter_count() const { return jitter_count_; }
  const UpdateDiagnostics& last_diagnostics() const { return diag_; }
  double max_nullspace_residual() const { return max_nullspace_residual_; }

  void consensus(std::span<const LandmarkMessage> messages);
  void propagate(const Pose& delta, const Matrix6d& odometry_cov, std::int64_t stamp);
  /// Records this timestep's observations, flushes finished tracks and
  /// updates with them and with object observations of known landmarks.
  void update(std::int64_t stamp, std::span<const std::pair<LandmarkId, StereoPixel>> geometric,
              std::span<const ObjectObservation> objects);
  /// Tries to initialize every pending object, in ascending id order.
  void initialize();

 private:
  struct TrackPoint {
    std::int64_t stamp;
    StereoPixel pixel;
  };

  void absorb(const UpdateDiagnostics& d);

  NodeState state_;
  CameraModel cam_;
  FilterConfig config_;
  std::map<LandmarkId, std::vector<TrackPoint>> tracks_;
  std::map<LandmarkId, std::vector<ObjectObservation>> pending_;
  UpdateDiagnostics diag_;
  std::size_t jitter_count_ = 0;
  double max_nullspace_residual_ = 0.0;
};

}  // namespace dvislam
