#include "dvislam/sim.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <string>

#include "dvislam/errors.hpp"

namespace dvislam {

namespace {

// Purpose tags for Rng::stream.
constexpr std::uint64_t kOdometry = 1;
constexpr std::uint64_t kGeometricPixels = 2;
constexpr std::uint64_t kObjectPixels = 3;
constexpr std::uint64_t kGeometricPlacement = 4;
constexpr std::uint64_t kObjectPlacement = 5;

double curve_parameter(const SimConfig& cfg, std::size_t t) {
  return 2.0 * M_PI * cfg.cycles * static_cast<double>(t) / static_cast<double>(cfg.horizon);
}

Eigen::Vector3d scatter(Rng& rng, const Eigen::Vector3d& center, double sigma) {
  const double x = rng.gaussian();
  const double y = rng.gaussian();
  const double z = rng.gaussian();
  return center + sigma * Eigen::Vector3d(x, y, z);
}

}  // namespace

Eigen::Vector3d LissajousCurve::position(double tau) const {
  return {center.x() + amp_x * std::sin(freq_x * tau + phase), center.y() + amp_y * std::sin(freq_y * tau),
          height};
}

Eigen::Vector3d LissajousCurve::velocity(double tau) const {
  return {amp_x * freq_x * std::cos(freq_x * tau + phase), amp_y * freq_y * std::cos(freq_y * tau), 0.0};
}

Pose curve_pose(const LissajousCurve& curve, double tau) {
  const Eigen::Vector3d v = curve.velocity(tau);
  const double yaw = std::atan2(v.y(), v.x());
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  Eigen::Matrix3d R;
  // Columns: camera x (right), y (down), z (forward) in world coordinates.
  R << s, 0.0, c,
      -c, 0.0, s,
      0.0, -1.0, 0.0;
  return Pose(R, curve.position(tau));
}

std::vector<LissajousCurve> default_curves(std::size_t n_robots, double spacing) {
  std::vector<LissajousCurve> out(n_robots);
  const double n = static_cast<double>(n_robots);
  // Adjacent centers sit `spacing` apart on a ring.
  const double radius = n_robots > 1 ? spacing / (2.0 * std::sin(M_PI / n)) : 0.0;
  for (std::size_t i = 0; i < n_robots; ++i) {
    const double angle = 2.0 * M_PI * static_cast<double>(i) / n;
    double phase = angle;
    // Phases with cos(2 phase) near zero make the curve stop and turn on the spot.
    if (std::abs(std::cos(2.0 * phase)) < 0.3) phase += 0.25;
    out[i].phase = phase;
    out[i].center = radius * Eigen::Vector2d(std::cos(angle), std::sin(angle));
  }
  return out;
}

Matrix6d SimConfig::default_odometry_cov() {
  Vector6d sd;
  sd << 0.03, 0.03, 0.03, 0.003, 0.003, 0.003;
  return sd.cwiseProduct(sd).asDiagonal();
}

void SimConfig::validate() const {
  if (n_robots == 0) throw InvalidArgument("SimConfig: n_robots must be positive");
  if (horizon < 2) throw InvalidArgument("SimConfig: horizon must be at least 2");
  if (n_objects == 0) throw InvalidArgument("SimConfig: n_objects must be positive");
  if (!curves.empty() && curves.size() != n_robots) {
    throw InvalidArgument("SimConfig: one curve per robot required");
  }
  if (!(sigma_pixel >= 0.0 && sigma_pixel_object >= 0.0 && object_spread > 0.0 && geometric_spread > 0.0)) {
    throw InvalidArgument("SimConfig: noise and spread parameters must be non-negative");
  }
  if (!(curve_spacing >= 0.0)) throw InvalidArgument("SimConfig: curve_spacing must be non-negative");
  if (!(cycles > 0.0)) throw InvalidArgument("SimConfig: cycles must be positive");
  if (!(min_depth > 0.0 && max_depth > min_depth)) throw InvalidArgument("SimConfig: invalid depth range");
  if (window_size == 0) throw InvalidArgument("SimConfig: window size must be positive");
  if (!odometry_cov.isApprox(odometry_cov.transpose()) ||
      Eigen::SelfAdjointEigenSolver<Matrix6d>(odometry_cov).eigenvalues().minCoeff() < 0.0) {
    throw InvalidArgument("SimConfig: odometry covariance must be symmetric PSD");
  }
  camera.validate();
}

std::vector<LissajousCurve> SimConfig::resolved_curves() const {
  return curves.empty() ? default_curves(n_robots, curve_spacing) : curves;
}

std::vector<std::pair<LandmarkId, Eigen::Vector3d>> Scenario::objects() const {
  std::vector<std::pair<LandmarkId, Eigen::Vector3d>> out;
  for (const auto& l : landmarks) {
    if (l.kind == LandmarkKind::object) out.emplace_back(l.id, l.position);
  }
  return out;
}

std::vector<PixelObservation> observe(const Pose& pose, const std::vector<Landmark>& landmarks,
                                      const CameraModel& cam, double sigma, Rng& rng, double min_depth,
                                      double max_depth) {
  std::vector<PixelObservation> out;
  for (const auto& l : landmarks) {
    const Eigen::Vector3d p = world_to_camera(pose, l.position);
    if (!(p.z() > 0.0) || p.z() < min_depth || p.z() > max_depth) continue;
    const StereoPixel px = project(cam, p);
    if (!in_image(cam, px)) continue;
    if (sigma > 0.0) {
      const double a = rng.gaussian();
      const double b = rng.gaussian();
      const double c = rng.gaussian();
      out.emplace_back(l.id, px + sigma * StereoPixel(a, b, c));
    } else {
      out.emplace_back(l.id, px);
    }
  }
  return out;
}

Pose perturb_odometry(const Pose& true_delta, const Matrix6d& W, Rng& rng) {
  if (W.isZero(0.0)) return true_delta;
  const Eigen::VectorXd w = rng.gaussian_vector(W);
  return true_delta * se3_exp(Twist(w));
}

Scenario generate_scenario(const SimConfig& cfg) {
  cfg.validate();
  Scenario sc;
  sc.config = cfg;
  const auto curves = cfg.resolved_curves();
  const std::size_t n = cfg.n_robots;
  const std::size_t T = cfg.horizon;

  sc.ground_truth.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    sc.ground_truth[i].reserve(T);
    for (std::size_t t = 0; t < T; ++t) sc.ground_truth[i].push_back(curve_pose(curves[i], curve_parameter(cfg, t)));
  }

  // Objects first (ids 0..n_objects-1), each around a random point of a random robot's path.
  Rng place_obj = Rng::stream(cfg.seed, kObjectPlacement);
  for (std::size_t k = 0; k < cfg.n_objects; ++k) {
    const auto robot = static_cast<std::size_t>(place_obj.uniform() * static_cast<double>(n));
    const auto t = static_cast<std::size_t>(place_obj.uniform() * static_cast<double>(T));
    const Eigen::Vector3d c = sc.ground_truth[std::min(robot, n - 1)][std::min(t, T - 1)].translation();
    sc.landmarks.push_back({static_cast<LandmarkId>(k), LandmarkKind::object, -1,
                            scatter(place_obj, c, cfg.object_spread)});
  }
  LandmarkId next_id = static_cast<LandmarkId>(cfg.n_objects);
  for (std::size_t i = 0; i < n; ++i) {
    Rng place = Rng::stream(cfg.seed, kGeometricPlacement, i);
    for (std::size_t t = 0; t < T; ++t) {
      const Eigen::Vector3d c = sc.ground_truth[i][t].translation();
      for (std::size_t g = 0; g < cfg.geometric_per_step; ++g) {
        sc.landmarks.push_back({next_id++, LandmarkKind::geometric, static_cast<int>(i),
                                scatter(place, c, cfg.geometric_spread)});
      }
    }
  }

  std::vector<Landmark> objects;
  std::vector<std::vector<Landmark>> private_geo(n);
  for (const auto& l : sc.landmarks) {
    if (l.kind == LandmarkKind::object) {
      objects.push_back(l);
    } else {
      private_geo[static_cast<std::size_t>(l.owner)].push_back(l);
    }
  }

  sc.steps.assign(n, std::vector<RobotStep>(T));
  for (std::size_t i = 0; i < n; ++i) {
    bool saw_anything = false;
    for (std::size_t t = 0; t < T; ++t) {
      RobotStep& step = sc.steps[i][t];
      const Pose& pose = sc.ground_truth[i][t];
      if (t > 0) {
        Rng odo = Rng::stream(cfg.seed, kOdometry, i, t);
        step.odometry = perturb_odometry(sc.ground_truth[i][t - 1].inverse() * pose, cfg.odometry_cov, odo);
      }
      Rng geo = Rng::stream(cfg.seed, kGeometricPixels, i, t);
      step.geometric = observe(pose, private_geo[i], cfg.camera, cfg.sigma_pixel, geo, cfg.min_depth, cfg.max_depth);
      Rng obj = Rng::stream(cfg.seed, kObjectPixels, i, t);
      for (const auto& [id, px] :
           observe(pose, objects, cfg.camera, cfg.sigma_pixel_object, obj, cfg.min_depth, cfg.max_depth)) {
        step.objects.push_back({id, px, static_cast<std::int64_t>(t)});
      }
      saw_anything = saw_anything || !step.geometric.empty() || !step.objects.empty();
    }
    if (!saw_anything) {
      throw ScenarioInfeasible("generate_scenario: robot " + std::to_string(i) + " never observes a landmark");
    }
  }
  return sc;
}

}  // namespace dvislam
