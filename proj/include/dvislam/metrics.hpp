#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dvislam/liegroup.hpp"
#include "dvislam/msckf.hpp"

namespace dvislam {

using ObjectMap = std::map<LandmarkId, Eigen::Vector3d>;

/// sqrt(mean |t_est - t_gt|^2) over translations, no alignment.
double trajectory_rmse(std::span<const Pose> est, std::span<const Pose> gt);

/// RMSE over every pose sample of every robot pooled together.
double pooled_trajectory_rmse(std::span<const std::vector<Pose>> est, std::span<const std::vector<Pose>> gt);

/// Mean distance between estimated and true positions over the estimated
/// objects; nullopt for an empty estimate.
std::optional<double> object_error(const ObjectMap& est, const ObjectMap& gt);

/// For each robot, mean over its objects that some other robot also
/// estimates of the mean distance to the other robots' estimates. Robots
/// without such objects get nullopt.
std::vector<std::optional<double>> disagreement(std::span<const ObjectMap> maps);

ObjectMap object_map(const NodeState& state);

struct RobotMetrics {
  double trajectory_rmse = 0.0;
  std::optional<double> object_error;
  std::optional<double> disagreement;
  std::size_t objects = 0;
};

struct RunReport {
  std::vector<RobotMetrics> robots;
  double pooled_trajectory_rmse = 0.0;
  std::size_t jitter_events = 0;
  double max_nullspace_residual = 0.0;
  std::size_t communication_bytes = 0;
  std::size_t rounds = 0;

  // Wall-clock timing; not part of the deterministic report.
  double consensus_seconds_per_step = 0.0;  // per robot
  double update_seconds_per_step = 0.0;     // per robot, propagate + update + init
  double total_seconds = 0.0;

  /// Mean over robots that report the metric; nullopt if none does.
  std::optional<double> team_average(std::optional<double> RobotMetrics::*field) const;
  std::optional<double> team_max(std::optional<double> RobotMetrics::*field) const;
  double team_average_rmse() const;
  double team_max_rmse() const;
};

/// Rows: one per robot, then "avg", "max" and "pooled"; columns: metric values.
/// Deterministic given the report contents.
void write_report_csv(std::ostream& os, const RunReport& report);
void write_timing_csv(std::ostream& os, const RunReport& report);

/// Fixed-format decimal used in every CSV this library writes.
std::string format_number(double v);

}  // namespace dvislam
