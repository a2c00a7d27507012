#include "dvislam/serialize.hpp"

#include <algorithm>

#include "dvislam/errors.hpp"

namespace dvislam {

ConfigReader::ConfigReader(const Json& node, std::string path, const std::string& source_text,
                           std::string source_name)
    : node_(node), path_(std::move(path)), text_(source_text), source_(std::move(source_name)) {
  if (!node_.is_object()) {
    throw ConfigError(source_ + ":" + std::to_string(line_of_key(text_, path_.substr(path_.rfind('/') + 1))) +
                      ": " + (path_.empty() ? "/" : path_) + ": expected an object");
  }
}

ConfigReader ConfigReader::child(const char* key) const {
  if (!node_.contains(key)) fail(key, "missing required section");
  if (!node_.at(key).is_object()) fail(key, "expected an object");
  return ConfigReader(node_.at(key), path_.empty() ? std::string(key) : path_ + "/" + key, text_, source_);
}

void ConfigReader::reject_unknown(std::initializer_list<const char*> known) const {
  for (const auto& item : node_.items()) {
    const bool ok = std::any_of(known.begin(), known.end(), [&](const char* k) { return item.key() == k; });
    if (!ok) fail(item.key(), "unknown field");
  }
}

void ConfigReader::fail(const std::string& key, const std::string& message) const {
  throw ConfigError(source_ + ":" + std::to_string(std::max(1, line_of_key(text_, key))) + ": " +
                    (path_.empty() ? key : path_ + "/" + key) + ": " +
                    message);
}

int line_of_key(const std::string& text, const std::string& key) {
  const auto pos = text.find("\"" + key + "\"");
  if (pos == std::string::npos) return 0;
  return line_of_offset(text, pos);
}

int line_of_offset(const std::string& text, std::size_t pos) {
  pos = std::min(pos, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

Json pose_to_json(const Pose& T) {
  Json out = Json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out.push_back(T.rotation()(r, c));
    out.push_back(T.translation()(r));
  }
  return out;
}

Pose pose_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 12) throw InvalidArgument("pose_from_json: expected 12 numbers");
  Eigen::Matrix3d R;
  Eigen::Vector3d t;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) R(r, c) = j.at(static_cast<std::size_t>(4 * r + c)).get<double>();
    t(r) = j.at(static_cast<std::size_t>(4 * r + 3)).get<double>();
  }
  return Pose(R, t);
}

Json camera_to_json(const CameraModel& cam) {
  return {{"fx", cam.fx}, {"fy", cam.fy}, {"cx", cam.cx}, {"cy", cam.cy},
          {"baseline", cam.baseline}, {"width", cam.width}, {"height", cam.height}};
}

CameraModel camera_from_reader(const ConfigReader& r) {
  r.reject_unknown({"fx", "fy", "cx", "cy", "baseline", "width", "height"});
  CameraModel cam;
  cam.fx = r.get("fx", cam.fx);
  cam.fy = r.get("fy", cam.fy);
  cam.cx = r.get("cx", cam.cx);
  cam.cy = r.get("cy", cam.cy);
  cam.baseline = r.get("baseline", cam.baseline);
  cam.width = r.get("width", cam.width);
  cam.height = r.get("height", cam.height);
  return cam;
}

namespace {

Json curve_to_json(const LissajousCurve& c) {
  return {{"amp_x", c.amp_x}, {"amp_y", c.amp_y}, {"freq_x", c.freq_x}, {"freq_y", c.freq_y},
          {"phase", c.phase}, {"height", c.height}, {"center", {c.center.x(), c.center.y()}}};
}

LissajousCurve curve_from_json(const Json& j, const ConfigReader& parent) {
  LissajousCurve c;
  if (!j.is_object()) parent.fail("curves", "each curve must be an object");
  for (const auto& item : j.items()) {
    const auto& k = item.key();
    const auto& v = item.value();
    try {
      if (k == "amp_x") c.amp_x = v.get<double>();
      else if (k == "amp_y") c.amp_y = v.get<double>();
      else if (k == "freq_x") c.freq_x = v.get<double>();
      else if (k == "freq_y") c.freq_y = v.get<double>();
      else if (k == "phase") c.phase = v.get<double>();
      else if (k == "height") c.height = v.get<double>();
      else if (k == "center") {
        const auto xy = v.get<std::vector<double>>();
        if (xy.size() != 2) parent.fail(k, "center must have two entries");
        c.center = {xy[0], xy[1]};
      } else {
        parent.fail(k, "unknown curve field");
      }
    } catch (const nlohmann::json::exception& e) {
      parent.fail(k, std::string("wrong type: ") + e.what());
    }
  }
  return c;
}

Matrix6d matrix6_from(const std::vector<std::vector<double>>& rows, const ConfigReader& r, const char* key) {
  if (rows.size() != 6) r.fail(key, "expected a 6x6 matrix");
  Matrix6d m;
  for (int i = 0; i < 6; ++i) {
    if (rows[static_cast<std::size_t>(i)].size() != 6) r.fail(key, "expected a 6x6 matrix");
    for (int k = 0; k < 6; ++k) m(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
  }
  return m;
}

Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(row);
  }
  return rows;
}

Json pixel_row(LandmarkId id, const StereoPixel& px) { return Json::array({id, px.x(), px.y(), px.z()}); }

}  // namespace

Json sim_config_to_json(const SimConfig& cfg) {
  Json curves = Json::array();
  for (const auto& c : cfg.curves) curves.push_back(curve_to_json(c));
  return {{"n_robots", cfg.n_robots},
          {"horizon", cfg.horizon},
          {"cycles", cfg.cycles},
          {"curves", curves},
          {"curve_spacing", cfg.curve_spacing},
          {"n_objects", cfg.n_objects},
          {"object_spread", cfg.object_spread},
          {"geometric_per_step", cfg.geometric_per_step},
          {"geometric_spread", cfg.geometric_spread},
          {"sigma_pixel", cfg.sigma_pixel},
          {"sigma_pixel_object", cfg.sigma_pixel_object},
          {"odometry_cov", matrix_to_json(cfg.odometry_cov)},
          {"camera", camera_to_json(cfg.camera)},
          {"min_depth", cfg.min_depth},
          {"max_depth", cfg.max_depth},
          {"window_size", cfg.window_size},
          {"seed", cfg.seed}};
}

SimConfig sim_config_from_reader(const ConfigReader& r) {
  r.reject_unknown({"n_robots", "horizon", "cycles", "curves", "curve_spacing", "n_objects", "object_spread", "geometric_per_step",
                    "geometric_spread", "sigma_pixel", "sigma_pixel_object", "odometry_cov", "odometry_sigma",
                    "camera", "min_depth", "max_depth", "window_size", "seed"});
  SimConfig cfg;
  cfg.n_robots = r.get("n_robots", cfg.n_robots);
  cfg.horizon = r.get("horizon", cfg.horizon);
  cfg.cycles = r.get("cycles", cfg.cycles);
  if (r.has("curves")) {
    const Json& arr = r.node().at("curves");
    if (!arr.is_array()) r.fail("curves", "expected an array");
    for (const auto& c : arr) cfg.curves.push_back(curve_from_json(c, r));
  }
  cfg.curve_spacing = r.get("curve_spacing", cfg.curve_spacing);
  cfg.n_objects = r.get("n_objects", cfg.n_objects);
  cfg.object_spread = r.get("object_spread", cfg.object_spread);
  cfg.geometric_per_step = r.get("geometric_per_step", cfg.geometric_per_step);
  cfg.geometric_spread = r.get("geometric_spread", cfg.geometric_spread);
  cfg.sigma_pixel = r.get("sigma_pixel", cfg.sigma_pixel);
  cfg.sigma_pixel_object = r.get("sigma_pixel_object", cfg.sigma_pixel_object);
  if (r.has("odometry_cov") && r.has("odometry_sigma")) {
    r.fail("odometry_sigma", "give either odometry_cov or odometry_sigma, not both");
  }
  if (r.has("odometry_cov")) {
    cfg.odometry_cov = matrix6_from(r.require<std::vector<std::vector<double>>>("odometry_cov"), r, "odometry_cov");
  }
  if (r.has("odometry_sigma")) {
    const auto sd = r.require<std::vector<double>>("odometry_sigma");
    if (sd.size() != 6) r.fail("odometry_sigma", "expected 6 standard deviations (rho, phi)");
    Vector6d v;
    for (int i = 0; i < 6; ++i) v(i) = sd[static_cast<std::size_t>(i)] * sd[static_cast<std::size_t>(i)];
    cfg.odometry_cov = v.asDiagonal();
  }
  if (r.has("camera")) cfg.camera = camera_from_reader(r.child("camera"));
  cfg.min_depth = r.get("min_depth", cfg.min_depth);
  cfg.max_depth = r.get("max_depth", cfg.max_depth);
  cfg.window_size = r.get("window_size", cfg.window_size);
  cfg.seed = r.get("seed", cfg.seed);
  try {
    cfg.validate();
  } catch (const InvalidArgument& e) {
    r.fail("", e.what());
  }
  return cfg;
}

Json scenario_to_json(const Scenario& sc) {
  Json gt = Json::array();
  for (const auto& traj : sc.ground_truth) {
    Json poses = Json::array();
    for (const auto& T : traj) poses.push_back(pose_to_json(T));
    gt.push_back(poses);
  }
  Json landmarks = Json::array();
  for (const auto& l : sc.landmarks) {
    landmarks.push_back({{"id", l.id},
                         {"kind", l.kind == LandmarkKind::object ? "object" : "geometric"},
                         {"owner", l.owner},
                         {"position", {l.position.x(), l.position.y(), l.position.z()}}});
  }
  Json steps = Json::array();
  for (const auto& robot : sc.steps) {
    Json rs = Json::array();
    for (const auto& s : robot) {
      Json geo = Json::array();
      for (const auto& [id, px] : s.geometric) geo.push_back(pixel_row(id, px));
      Json obj = Json::array();
      for (const auto& o : s.objects) obj.push_back(pixel_row(o.id, o.pixel));
      rs.push_back({{"odometry", pose_to_json(s.odometry)}, {"geometric", geo}, {"objects", obj}});
    }
    steps.push_back(rs);
  }
  return {{"format", "dvislam-scenario"}, {"schema_version", 1}, {"config", sim_config_to_json(sc.config)},
          {"ground_truth", gt}, {"landmarks", landmarks}, {"steps", steps}};
}

Scenario scenario_from_json(const Json& j) {
  try {
    if (j.value("format", std::string()) != "dvislam-scenario") {
      throw InvalidArgument("scenario_from_json: not a scenario file");
    }
    if (j.at("schema_version").get<int>() != 1) throw InvalidArgument("scenario_from_json: unsupported schema_version");
    Scenario sc;
    const std::string text = j.at("config").dump();
    sc.config = sim_config_from_reader(ConfigReader(j.at("config"), "/config", text, "scenario"));
    for (const auto& traj : j.at("ground_truth")) {
      std::vector<Pose> poses;
      for (const auto& p : traj) poses.push_back(pose_from_json(p));
      sc.ground_truth.push_back(std::move(poses));
    }
    for (const auto& l : j.at("landmarks")) {
      const auto pos = l.at("position").get<std::vector<double>>();
      if (pos.size() != 3) throw InvalidArgument("scenario_from_json: landmark position needs 3 entries");
      const std::string kind = l.at("kind").get<std::string>();
      if (kind != "object" && kind != "geometric") throw InvalidArgument("scenario_from_json: unknown landmark kind");
      sc.landmarks.push_back({l.at("id").get<LandmarkId>(),
                              kind == "object" ? LandmarkKind::object : LandmarkKind::geometric,
                              l.at("owner").get<int>(), Eigen::Vector3d(pos[0], pos[1], pos[2])});
    }
    const auto read_px = [](const Json& row) {
      if (row.size() != 4) throw InvalidArgument("scenario_from_json: observation rows need 4 entries");
      return std::make_pair(row.at(0).get<LandmarkId>(),
                            StereoPixel(row.at(1).get<double>(), row.at(2).get<double>(), row.at(3).get<double>()));
    };
    for (const auto& robot : j.at("steps")) {
      std::vector<RobotStep> rs;
      for (const auto& s : robot) {
        RobotStep step;
        step.odometry = pose_from_json(s.at("odometry"));
        for (const auto& row : s.at("geometric")) step.geometric.push_back(read_px(row));
        const auto t = static_cast<std::int64_t>(rs.size());
        for (const auto& row : s.at("objects")) {
          const auto [id, px] = read_px(row);
          step.objects.push_back({id, px, t});
        }
        rs.push_back(std::move(step));
      }
      sc.steps.push_back(std::move(rs));
    }
    if (sc.ground_truth.size() != sc.config.n_robots || sc.steps.size() != sc.config.n_robots) {
      throw InvalidArgument("scenario_from_json: robot count disagrees with config");
    }
    for (std::size_t i = 0; i < sc.steps.size(); ++i) {
      if (sc.steps[i].size() != sc.ground_truth[i].size() || sc.ground_truth[i].size() != sc.config.horizon) {
        throw InvalidArgument("scenario_from_json: step count disagrees with horizon");
      }
    }
    return sc;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("scenario_from_json: ") + e.what());
  }
}

Json node_snapshot(const NodeState& node) {
  Json poses = Json::array();
  for (std::size_t k = 0; k < node.poses.size(); ++k) {
    poses.push_back({{"stamp", node.stamps[k]}, {"pose", pose_to_json(node.poses[k])}});
  }
  Json landmarks = Json::array();
  for (std::size_t j = 0; j < node.landmarks.size(); ++j) {
    const auto& p = node.landmarks[j];
    landmarks.push_back({{"id", node.landmark_ids[j]}, {"position", {p.x(), p.y(), p.z()}}});
  }
  Json lower = Json::array();
  for (Eigen::Index r = 0; r < node.cov.rows(); ++r) {
    for (Eigen::Index c = 0; c <= r; ++c) lower.push_back(node.cov(r, c));
  }
  return {{"dim", node.dim()}, {"poses", poses}, {"landmarks", landmarks}, {"covariance_lower", lower}};
}

NodeState node_from_snapshot(const Json& j) {
  try {
    NodeState node;
    for (const auto& p : j.at("poses")) {
      node.stamps.push_back(p.at("stamp").get<std::int64_t>());
      node.poses.push_back(pose_from_json(p.at("pose")));
    }
    for (const auto& l : j.at("landmarks")) {
      const auto pos = l.at("position").get<std::vector<double>>();
      if (pos.size() != 3) throw InvalidArgument("node_from_snapshot: landmark position needs 3 entries");
      node.landmark_ids.push_back(l.at("id").get<LandmarkId>());
      node.landmarks.emplace_back(pos[0], pos[1], pos[2]);
    }
    const Eigen::Index n = node.dim();
    const auto& lower = j.at("covariance_lower");
    if (j.at("dim").get<Eigen::Index>() != n || lower.size() != static_cast<std::size_t>(n * (n + 1) / 2)) {
      throw DimensionMismatch("node_from_snapshot: covariance size disagrees with the layout");
    }
    node.cov.resize(n, n);
    std::size_t at = 0;
    for (Eigen::Index r = 0; r < n; ++r) {
      for (Eigen::Index c = 0; c <= r; ++c) node.cov(r, c) = node.cov(c, r) = lower.at(at++).get<double>();
    }
    node.validate();
    return node;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("node_from_snapshot: ") + e.what());
  }
}

}  // namespace dvislam
