#pragma once

// Experiment runner: separate vs consensus filtering over seeds and loss
// rates on simulated scenarios. File layouts are documented in docs/formats.md.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dvislam/metrics.hpp"
#include "dvislam/msckf.hpp"
#include "dvislam/network.hpp"
#include "dvislam/serialize.hpp"
#include "dvislam/sim.hpp"

namespace dvislam {

enum class Variant { separate, consensus };

const char* to_string(Variant v);
std::optional<Variant> parse_variant(const std::string& s);

struct GraphSpec {
  bool complete = true;
  std::vector<Edge> edges;

  CommGraph build(std::size_t n) const;
};

struct ExperimentConfig {
  int schema_version = 1;
  SimConfig sim;
  GraphSpec graph;
  std::vector<double> loss_rates{0.0};
  /// window_size and pixel noise come from `sim`; the rest is used as is.
  FilterConfig filter = default_filter();
  Vector6d initial_pose_sigma = Vector6d::Constant(1e-3);
  /// Geometric observations used per frame; tracked features are kept first.
  std::size_t max_features = 40;
  std::vector<Variant> variants{Variant::separate, Variant::consensus};
  std::vector<std::uint64_t> seeds{1};
  std::string output_dir = "out";
  std::size_t threads = 1;
  /// Optional pre-generated scenario; when set, seeds only drive edge loss.
  std::string scenario_file;

  static FilterConfig default_filter();
  void validate() const;
};

/// Parses the JSON config text. Throws ConfigError with "<source>:<line>:" prefix.
ExperimentConfig parse_experiment_config(const std::string& text, const std::string& source_name);
ExperimentConfig load_experiment_config(const std::string& path);
/// Complete echo; parse_experiment_config(config_to_json(c).dump()) == c.
Json config_to_json(const ExperimentConfig& cfg);

struct RunResult {
  Variant variant = Variant::separate;
  std::uint64_t seed = 0;
  double loss_rate = 0.0;
  bool failed = false;
  std::string error;
  RunReport report;
  std::vector<std::vector<Pose>> estimates;  // newest pose after each timestep
  std::vector<NodeState> final_states;
};

/// Runs the per-timestep loop averaging -> propagation -> update ->
/// initialization for every robot. `threads` only changes scheduling.
RunResult run_scenario(const Scenario& sc, const ExperimentConfig& cfg, Variant variant, double loss_rate,
                       std::uint64_t seed, std::size_t threads);

Scenario scenario_for_seed(const ExperimentConfig& cfg, std::uint64_t seed);

/// "<variant>_seed<seed>_r<rate>"
std::string run_label(Variant v, std::uint64_t seed, double loss_rate);

/// Writes every run's files plus manifest.json under out_dir. Returns 0 if
/// every run succeeded, 2 otherwise.
int run_experiment(const ExperimentConfig& cfg, const std::string& out_dir, std::ostream& log);

/// Deterministic CSV/JSON outputs of one run, keyed by relative path.
std::vector<std::pair<std::string, std::string>> render_run_files(const Scenario& sc, const RunResult& run);

/// git blob hash: SHA-1 of "blob <size>\0" + content, lowercase hex.
std::string git_blob_sha1(const std::string& content);

}  // namespace dvislam
