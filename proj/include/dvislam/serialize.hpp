#pragma once

// JSON encodings of scenarios, simulator configs and node snapshots. The
// layouts are documented in docs/formats.md.

#include <json.hpp>
#include <string>

#include "dvislam/msckf.hpp"
#include "dvislam/sim.hpp"

namespace dvislam {

using Json = nlohmann::json;

/// Reads typed fields out of a JSON object, rejecting unknown keys and
/// reporting errors as ConfigError("<source>:<line>: <path>: <message>").
/// The line is where the offending key first appears in the source text.
class ConfigReader {
 public:
  ConfigReader(const Json& node, std::string path, const std::string& source_text, std::string source_name);

  const Json& node() const { return node_; }
  const std::string& path() const { return path_; }
  bool has(const char* key) const { return node_.contains(key); }

  template <class T>
  T get(const char* key, const T& fallback) const {
    if (!node_.contains(key)) return fallback;
    return as<T>(key);
  }
  template <class T>
  T require(const char* key) const {
    if (!node_.contains(key)) fail(key, "missing required field");
    return as<T>(key);
  }
  ConfigReader child(const char* key) const;

  /// Throws for every key of the object not in `known`.
  void reject_unknown(std::initializer_list<const char*> known) const;
  [[noreturn]] void fail(const std::string& key, const std::string& message) const;

 private:
  template <class T>
  T as(const char* key) const {
    try {
      return node_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      fail(key, std::string("wrong type: ") + e.what());
    }
  }

  const Json& node_;
  std::string path_;
  const std::string& text_;
  std::string source_;
};

/// 1-based line of the first occurrence of "key" in text, or 0.
int line_of_key(const std::string& text, const std::string& key);
/// 1-based line containing byte offset `pos`.
int line_of_offset(const std::string& text, std::size_t pos);

Json pose_to_json(const Pose& T);  // 12 numbers, 3x4 row-major
Pose pose_from_json(const Json& j);

Json camera_to_json(const CameraModel& cam);
CameraModel camera_from_reader(const ConfigReader& r);

Json sim_config_to_json(const SimConfig& cfg);
SimConfig sim_config_from_reader(const ConfigReader& r);

Json scenario_to_json(const Scenario& sc);
Scenario scenario_from_json(const Json& j);

/// Poses (3x4 row-major with stamps), landmark table and the packed
/// row-major lower triangle of the covariance.
Json node_snapshot(const NodeState& node);
NodeState node_from_snapshot(const Json& j);

}  // namespace dvislam
