#include "dvislam/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "dvislam/errors.hpp"

namespace dvislam {

double trajectory_rmse(std::span<const Pose> est, std::span<const Pose> gt) {
  if (est.size() != gt.size()) throw DimensionMismatch("trajectory_rmse: sequences differ in length");
  if (est.empty()) throw InvalidArgument("trajectory_rmse: empty sequence");
  double sum = 0.0;
  for (std::size_t k = 0; k < est.size(); ++k) sum += (est[k].translation() - gt[k].translation()).squaredNorm();
  return std::sqrt(sum / static_cast<double>(est.size()));
}

double pooled_trajectory_rmse(std::span<const std::vector<Pose>> est, std::span<const std::vector<Pose>> gt) {
  if (est.size() != gt.size()) throw DimensionMismatch("pooled_trajectory_rmse: robot counts differ");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    if (est[i].size() != gt[i].size()) throw DimensionMismatch("pooled_trajectory_rmse: sequences differ in length");
    for (std::size_t k = 0; k < est[i].size(); ++k) {
      sum += (est[i][k].translation() - gt[i][k].translation()).squaredNorm();
    }
    count += est[i].size();
  }
  if (count == 0) throw InvalidArgument("pooled_trajectory_rmse: no samples");
  return std::sqrt(sum / static_cast<double>(count));
}

std::optional<double> object_error(const ObjectMap& est, const ObjectMap& gt) {
  if (est.empty()) return std::nullopt;
  double sum = 0.0;
  for (const auto& [id, p] : est) {
    const auto it = gt.find(id);
    if (it == gt.end()) throw InvalidArgument("object_error: unknown object id " + std::to_string(id));
    sum += (p - it->second).norm();
  }
  return sum / static_cast<double>(est.size());
}

std::vector<std::optional<double>> disagreement(std::span<const ObjectMap> maps) {
  if (maps.size() < 2) throw InvalidArgument("disagreement: needs at least two robots");
  std::vector<std::optional<double>> out(maps.size());
  for (std::size_t i = 0; i < maps.size(); ++i) {
    double sum = 0.0;
    std::size_t shared = 0;
    for (const auto& [id, p] : maps[i]) {
      double d = 0.0;
      std::size_t others = 0;
      for (std::size_t j = 0; j < maps.size(); ++j) {
        if (j == i) continue;
        const auto it = maps[j].find(id);
        if (it == maps[j].end()) continue;
        d += (p - it->second).norm();
        ++others;
      }
      if (others == 0) continue;
      sum += d / static_cast<double>(others);
      ++shared;
    }
    if (shared > 0) out[i] = sum / static_cast<double>(shared);
  }
  return out;
}

ObjectMap object_map(const NodeState& state) {
  ObjectMap out;
  for (std::size_t j = 0; j < state.landmarks.size(); ++j) out.emplace(state.landmark_ids[j], state.landmarks[j]);
  return out;
}

std::optional<double> RunReport::team_average(std::optional<double> RobotMetrics::*field) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : robots) {
    if (const auto& v = r.*field) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::optional<double> RunReport::team_max(std::optional<double> RobotMetrics::*field) const {
  std::optional<double> best;
  for (const auto& r : robots) {
    if (const auto& v = r.*field) best = best ? std::max(*best, *v) : *v;
  }
  return best;
}

double RunReport::team_average_rmse() const {
  double sum = 0.0;
  for (const auto& r : robots) sum += r.trajectory_rmse;
  return robots.empty() ? 0.0 : sum / static_cast<double>(robots.size());
}

double RunReport::team_max_rmse() const {
  double best = 0.0;
  for (const auto& r : robots) best = std::max(best, r.trajectory_rmse);
  return best;
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9f", v);
  return buf;
}

namespace {

std::string cell(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

}  // namespace

void write_report_csv(std::ostream& os, const RunReport& report) {
  os << "row,trajectory_rmse_m,object_error_m,disagreement_m,objects\n";
  for (std::size_t i = 0; i < report.robots.size(); ++i) {
    const auto& r = report.robots[i];
    os << "robot" << i << ',' << format_number(r.trajectory_rmse) << ',' << cell(r.object_error) << ','
       << cell(r.disagreement) << ',' << r.objects << '\n';
  }
  std::size_t total_objects = 0;
  std::size_t max_objects = 0;
  for (const auto& r : report.robots) {
    total_objects += r.objects;
    max_objects = std::max(max_objects, r.objects);
  }
  const double avg_objects =
      report.robots.empty() ? 0.0 : static_cast<double>(total_objects) / static_cast<double>(report.robots.size());
  os << "avg," << format_number(report.team_average_rmse()) << ','
     << cell(report.team_average(&RobotMetrics::object_error)) << ','
     << cell(report.team_average(&RobotMetrics::disagreement)) << ',' << format_number(avg_objects) << '\n';
  os << "max," << format_number(report.team_max_rmse()) << ',' << cell(report.team_max(&RobotMetrics::object_error))
     << ',' << cell(report.team_max(&RobotMetrics::disagreement)) << ',' << max_objects << '\n';
  os << "pooled," << format_number(report.pooled_trajectory_rmse) << ",,," << total_objects << '\n';
  os << "# jitter_events," << report.jitter_events << '\n';
  os << "# communication_bytes," << report.communication_bytes << '\n';
  os << "# rounds," << report.rounds << '\n';
}

void write_timing_csv(std::ostream& os, const RunReport& report) {
  os << "metric,seconds\n";
  os << "consensus_per_robot_step," << format_number(report.consensus_seconds_per_step) << '\n';
  os << "update_per_robot_step," << format_number(report.update_seconds_per_step) << '\n';
  os << "total," << format_number(report.total_seconds) << '\n';
}

}  // namespace dvislam
