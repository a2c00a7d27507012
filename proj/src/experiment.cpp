#include "dvislam/experiment.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <thread>

#include "dvislam/errors.hpp"

namespace dvislam {

namespace {

constexpr std::uint64_t kEdgeLossStream = 77;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

/// Calls fn(i) for i in [0, n). Exceptions are collected per index.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn,
                  std::vector<std::exception_ptr>& errors) {
  errors.assign(n, nullptr);
  const auto guarded = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) guarded(i);
    return;
  }
  const std::size_t workers = std::min(threads, n);
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) guarded(i);
    });
  }
}

std::string error_message(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const std::exception& ex) {
    return ex.what();
  } catch (...) {
    return "unknown error";
  }
}

Json matrix_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(row);
  }
  return rows;
}

std::string rate_label(double r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", r);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << content;
}

}  // namespace

const char* to_string(Variant v) { return v == Variant::separate ? "separate" : "consensus"; }

std::optional<Variant> parse_variant(const std::string& s) {
  if (s == "separate") return Variant::separate;
  if (s == "consensus") return Variant::consensus;
  return std::nullopt;
}

CommGraph GraphSpec::build(std::size_t n) const {
  if (complete) return complete_graph(n);
  return metropolis_weights(edges, n);
}

FilterConfig ExperimentConfig::default_filter() {
  FilterConfig f;
  f.jitter_enabled = false;
  return f;
}

void ExperimentConfig::validate() const {
  if (schema_version != 1) throw ConfigError("unsupported schema_version " + std::to_string(schema_version));
  if (variants.empty()) throw ConfigError("at least one variant is required");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (loss_rates.empty()) throw ConfigError("at least one loss rate is required");
  for (double r : loss_rates) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("loss rates must lie in [0, 1]");
  }
  if (!(initial_pose_sigma.array() > 0.0).all()) throw ConfigError("initial_pose_sigma must be positive");
  if (max_features == 0) throw ConfigError("max_features must be positive");
  for (const auto& [a, b] : graph.edges) {
    if (a >= sim.n_robots || b >= sim.n_robots) throw ConfigError("graph edges reference robots out of range");
  }
}

ExperimentConfig parse_experiment_config(const std::string& text, const std::string& source_name) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(source_name + ":" + std::to_string(line_of_offset(text, e.byte == 0 ? 0 : e.byte - 1)) +
                      ": invalid JSON: " + e.what());
  }
  const ConfigReader r(j, "", text, source_name);
  r.reject_unknown({"schema_version", "sim", "graph", "loss_rates", "loss_rate", "filter", "initial_pose_sigma",
                    "max_features", "variants", "seeds", "output_dir", "threads", "scenario_file"});

  ExperimentConfig cfg;
  cfg.schema_version = r.require<int>("schema_version");
  if (cfg.schema_version != 1) r.fail("schema_version", "unsupported version " + std::to_string(cfg.schema_version));
  if (r.has("sim")) cfg.sim = sim_config_from_reader(r.child("sim"));

  if (r.has("graph")) {
    const Json& g = j.at("graph");
    if (g.is_string()) {
      if (g.get<std::string>() != "complete") r.fail("graph", "expected \"complete\" or {\"edges\": [...]}");
    } else {
      const ConfigReader gr = r.child("graph");
      gr.reject_unknown({"edges"});
      cfg.graph.complete = false;
      for (const auto& e : gr.require<std::vector<std::vector<std::size_t>>>("edges")) {
        if (e.size() != 2) gr.fail("edges", "each edge must be a pair");
        cfg.graph.edges.emplace_back(e[0], e[1]);
      }
    }
  }
  if (r.has("loss_rates") && r.has("loss_rate")) r.fail("loss_rate", "give loss_rate or loss_rates, not both");
  if (r.has("loss_rates")) cfg.loss_rates = r.require<std::vector<double>>("loss_rates");
  if (r.has("loss_rate")) cfg.loss_rates = {r.require<double>("loss_rate")};

  if (r.has("filter")) {
    const ConfigReader f = r.child("filter");
    f.reject_unknown({"chi2_gating", "chi2_confidence", "jitter_enabled", "jitter", "min_disparity_px",
                      "min_baseline_m", "max_gauss_newton_iterations", "max_init_sigma_m", "compress_rows",
                      "odometry_observation_correlation"});
    auto& fc = cfg.filter;
    fc.chi2_gating = f.get("chi2_gating", fc.chi2_gating);
    fc.chi2_confidence = f.get("chi2_confidence", fc.chi2_confidence);
    fc.jitter_enabled = f.get("jitter_enabled", fc.jitter_enabled);
    fc.jitter = f.get("jitter", fc.jitter);
    fc.min_disparity_px = f.get("min_disparity_px", fc.min_disparity_px);
    fc.min_baseline_m = f.get("min_baseline_m", fc.min_baseline_m);
    fc.max_gauss_newton_iterations = f.get("max_gauss_newton_iterations", fc.max_gauss_newton_iterations);
    fc.max_init_sigma_m = f.get("max_init_sigma_m", fc.max_init_sigma_m);
    fc.compress_rows = f.get("compress_rows", fc.compress_rows);
    if (f.has("odometry_observation_correlation")) {
      const auto rows = f.require<std::vector<std::vector<double>>>("odometry_observation_correlation");
      if (rows.size() != 6) f.fail("odometry_observation_correlation", "expected a 6x3 matrix");
      for (int a = 0; a < 6; ++a) {
        if (rows[static_cast<std::size_t>(a)].size() != 3) f.fail("odometry_observation_correlation", "expected a 6x3 matrix");
        for (int b = 0; b < 3; ++b) {
          fc.odometry_observation_correlation(a, b) = rows[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
        }
      }
    }
    if (!(fc.chi2_confidence > 0.0 && fc.chi2_confidence < 1.0)) f.fail("chi2_confidence", "must lie in (0, 1)");
    if (!(fc.jitter > 0.0)) f.fail("jitter", "must be positive");
  }
  if (r.has("initial_pose_sigma")) {
    const auto sd = r.require<std::vector<double>>("initial_pose_sigma");
    if (sd.size() != 6) r.fail("initial_pose_sigma", "expected 6 standard deviations (rho, phi)");
    for (int i = 0; i < 6; ++i) cfg.initial_pose_sigma(i) = sd[static_cast<std::size_t>(i)];
  }
  cfg.max_features = r.get("max_features", cfg.max_features);
  if (r.has("variants")) {
    cfg.variants.clear();
    for (const auto& name : r.require<std::vector<std::string>>("variants")) {
      const auto v = parse_variant(name);
      if (!v) r.fail("variants", "unknown variant \"" + name + "\"");
      cfg.variants.push_back(*v);
    }
  }
  cfg.seeds = r.get("seeds", cfg.seeds);
  cfg.output_dir = r.get("output_dir", cfg.output_dir);
  cfg.threads = r.get("threads", cfg.threads);
  cfg.scenario_file = r.get("scenario_file", cfg.scenario_file);
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source_name + ":1: " + e.what());
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError(path + ":0: cannot open config file");
  const std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_experiment_config(text, path);
}

Json config_to_json(const ExperimentConfig& cfg) {
  Json graph;
  if (cfg.graph.complete) {
    graph = "complete";
  } else {
    Json edges = Json::array();
    for (const auto& [a, b] : cfg.graph.edges) edges.push_back({a, b});
    graph = {{"edges", edges}};
  }
  const auto& fc = cfg.filter;
  Json variants = Json::array();
  for (auto v : cfg.variants) variants.push_back(to_string(v));
  Json out = {
      {"schema_version", cfg.schema_version},
      {"sim", sim_config_to_json(cfg.sim)},
      {"graph", graph},
      {"loss_rates", cfg.loss_rates},
      {"filter",
       {{"chi2_gating", fc.chi2_gating},
        {"chi2_confidence", fc.chi2_confidence},
        {"jitter_enabled", fc.jitter_enabled},
        {"jitter", fc.jitter},
        {"min_disparity_px", fc.min_disparity_px},
        {"min_baseline_m", fc.min_baseline_m},
        {"max_gauss_newton_iterations", fc.max_gauss_newton_iterations},
        {"max_init_sigma_m", fc.max_init_sigma_m},
        {"compress_rows", fc.compress_rows},
        {"odometry_observation_correlation", matrix_json(fc.odometry_observation_correlation)}}},
      {"initial_pose_sigma", std::vector<double>(cfg.initial_pose_sigma.data(), cfg.initial_pose_sigma.data() + 6)},
      {"max_features", cfg.max_features},
      {"variants", variants},
      {"seeds", cfg.seeds},
      {"output_dir", cfg.output_dir},
      {"threads", cfg.threads}};
  if (!cfg.scenario_file.empty()) out["scenario_file"] = cfg.scenario_file;
  return out;
}

Scenario scenario_for_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (!cfg.scenario_file.empty()) {
    std::ifstream f(cfg.scenario_file, std::ios::binary);
    if (!f) throw ConfigError(cfg.scenario_file + ":0: cannot open scenario file");
    try {
      return scenario_from_json(Json::parse(f));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(cfg.scenario_file + ":0: " + e.what());
    }
  }
  SimConfig sim = cfg.sim;
  sim.seed = seed;
  return generate_scenario(sim);
}

std::string run_label(Variant v, std::uint64_t seed, double loss_rate) {
  return std::string(to_string(v)) + "_seed" + std::to_string(seed) + "_r" + rate_label(loss_rate);
}

RunResult run_scenario(const Scenario& sc, const ExperimentConfig& cfg, Variant variant, double loss_rate,
                       std::uint64_t seed, std::size_t threads) {
  RunResult out;
  out.variant = variant;
  out.seed = seed;
  out.loss_rate = loss_rate;

  const std::size_t n = sc.robots();
  const std::size_t T = sc.horizon();
  FilterConfig fc = cfg.filter;
  fc.window_size = sc.config.window_size;
  fc.geometric_noise = Eigen::Matrix3d::Identity() * sc.config.sigma_pixel * sc.config.sigma_pixel;
  fc.object_noise = Eigen::Matrix3d::Identity() * sc.config.sigma_pixel_object * sc.config.sigma_pixel_object;
  const Matrix6d W = sc.config.odometry_cov;
  const Matrix6d prior = cfg.initial_pose_sigma.cwiseProduct(cfg.initial_pose_sigma).asDiagonal();

  std::vector<RobotFilter> filters;
  filters.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    filters.emplace_back(NodeState::initial(sc.ground_truth[i][0], 0, prior), sc.config.camera, fc);
  }
  out.estimates.assign(n, {});
  const CommGraph nominal = cfg.graph.build(n);
  Rng loss_rng = Rng::stream(seed, kEdgeLossStream);

  std::vector<double> consensus_time(n, 0.0);
  std::vector<double> update_time(n, 0.0);
  std::vector<std::exception_ptr> errors;
  std::vector<std::set<LandmarkId>> tracked(n);
  const auto total_start = Clock::now();

  const auto fail_on = [&](const char* phase, std::size_t t) {
    for (std::size_t i = 0; i < n; ++i) {
      if (errors[i]) {
        out.failed = true;
        out.error = std::string(phase) + " failed for robot " + std::to_string(i) + " at timestep " +
                    std::to_string(t) + ": " + error_message(errors[i]);
        return true;
      }
    }
    return false;
  };

  for (std::size_t t = 0; t < T && !out.failed; ++t) {
    const auto stamp = static_cast<std::int64_t>(t);

    if (variant == Variant::consensus && n > 1) {
      const CommGraph g = sample_round(nominal, loss_rate, loss_rng);
      // Every message is built from the current states before any node changes.
      std::vector<std::vector<LandmarkMessage>> inbox(n);
      parallel_for(
          n, threads,
          [&](std::size_t i) {
            const auto start = Clock::now();
            const auto& mine = filters[i].state().landmark_ids;
            for (std::size_t j : g.neighbors(i)) {
              LandmarkMessage m{g.weight(i, j), {}, {}};
              if (j != i) {
                const auto& theirs = filters[j].state().landmark_ids;
                std::set_intersection(mine.begin(), mine.end(), theirs.begin(), theirs.end(),
                                      std::back_inserter(m.ids));
                if (!m.ids.empty()) m.marginal = landmark_marginal(filters[j].state(), m.ids);
              }
              if (m.ids.empty()) m.marginal = InfoGaussian(Eigen::VectorXd(0), Eigen::MatrixXd(0, 0));
              inbox[i].push_back(std::move(m));
            }
            consensus_time[i] += seconds_since(start);
          },
          errors);
      if (fail_on("message exchange", t)) break;
      for (std::size_t i = 0; i < n; ++i) {
        for (const auto& m : inbox[i]) {
          if (!m.ids.empty()) out.report.communication_bytes += info_payload_bytes(m.ids.size(), 3 * m.ids.size());
        }
      }
      ++out.report.rounds;
      parallel_for(
          n, threads,
          [&](std::size_t i) {
            const auto start = Clock::now();
            filters[i].consensus(inbox[i]);
            consensus_time[i] += seconds_since(start);
          },
          errors);
      if (fail_on("consensus averaging", t)) break;
    }

    parallel_for(
        n, threads,
        [&](std::size_t i) {
          const auto start = Clock::now();
          const RobotStep& step = sc.steps[i][t];
          if (t > 0) filters[i].propagate(step.odometry, W, stamp);

          // Feature budget: continue existing tracks first, then new ids, both by id.
          std::vector<PixelObservation> geo;
          std::vector<PixelObservation> fresh;
          for (const auto& o : step.geometric) (tracked[i].count(o.first) ? geo : fresh).push_back(o);
          if (geo.size() > cfg.max_features) geo.resize(cfg.max_features);
          for (const auto& o : fresh) {
            if (geo.size() >= cfg.max_features) break;
            geo.push_back(o);
          }
          std::sort(geo.begin(), geo.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
          tracked[i].clear();
          for (const auto& o : geo) tracked[i].insert(o.first);

          filters[i].update(stamp, geo, step.objects);
          filters[i].initialize();
          out.estimates[i].push_back(filters[i].state().poses.back());
          update_time[i] += seconds_since(start);
        },
        errors);
    if (fail_on("filter update", t)) break;
  }

  RunReport& rep = out.report;
  rep.total_seconds = seconds_since(total_start);
  for (std::size_t i = 0; i < n; ++i) {
    rep.jitter_events += filters[i].jitter_count();
    rep.max_nullspace_residual = std::max(rep.max_nullspace_residual, filters[i].max_nullspace_residual());
    out.final_states.push_back(filters[i].state());
  }
  if (out.failed) return out;

  ObjectMap gt_objects;
  for (const auto& [id, p] : sc.objects()) gt_objects.emplace(id, p);
  std::vector<ObjectMap> maps;
  for (std::size_t i = 0; i < n; ++i) maps.push_back(object_map(filters[i].state()));
  rep.robots.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    rep.robots[i].trajectory_rmse = trajectory_rmse(out.estimates[i], sc.ground_truth[i]);
    rep.robots[i].object_error = object_error(maps[i], gt_objects);
    rep.robots[i].objects = maps[i].size();
  }
  if (n >= 2) {
    const auto dis = disagreement(maps);
    for (std::size_t i = 0; i < n; ++i) rep.robots[i].disagreement = dis[i];
  }
  rep.pooled_trajectory_rmse = pooled_trajectory_rmse(out.estimates, sc.ground_truth);
  double ct = 0.0;
  double ut = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ct += consensus_time[i];
    ut += update_time[i];
  }
  rep.consensus_seconds_per_step = ct / static_cast<double>(n * T);
  rep.update_seconds_per_step = ut / static_cast<double>(n * T);
  return out;
}

std::vector<std::pair<std::string, std::string>> render_run_files(const Scenario& sc, const RunResult& run) {
  std::vector<std::pair<std::string, std::string>> files;
  {
    std::ostringstream os;
    write_report_csv(os, run.report);
    files.emplace_back("report.csv", os.str());
  }
  {
    std::ostringstream os;
    os << "robot,t,est_x,est_y,est_z,gt_x,gt_y,gt_z\n";
    for (std::size_t i = 0; i < run.estimates.size(); ++i) {
      for (std::size_t t = 0; t < run.estimates[i].size(); ++t) {
        const auto& e = run.estimates[i][t].translation();
        const auto& g = sc.ground_truth[i][t].translation();
        os << i << ',' << t;
        for (int k = 0; k < 3; ++k) os << ',' << format_number(e(k));
        for (int k = 0; k < 3; ++k) os << ',' << format_number(g(k));
        os << '\n';
      }
    }
    files.emplace_back("trajectories.csv", os.str());
  }
  {
    std::ostringstream os;
    ObjectMap gt;
    for (const auto& [id, p] : sc.objects()) gt.emplace(id, p);
    os << "robot,id,est_x,est_y,est_z,gt_x,gt_y,gt_z,error_m\n";
    for (std::size_t i = 0; i < run.final_states.size(); ++i) {
      const auto& s = run.final_states[i];
      for (std::size_t j = 0; j < s.landmarks.size(); ++j) {
        const auto it = gt.find(s.landmark_ids[j]);
        if (it == gt.end()) continue;
        os << i << ',' << s.landmark_ids[j];
        for (int k = 0; k < 3; ++k) os << ',' << format_number(s.landmarks[j](k));
        for (int k = 0; k < 3; ++k) os << ',' << format_number(it->second(k));
        os << ',' << format_number((s.landmarks[j] - it->second).norm()) << '\n';
      }
    }
    files.emplace_back("objects.csv", os.str());
  }
  for (std::size_t i = 0; i < run.final_states.size(); ++i) {
    files.emplace_back("snapshots/robot" + std::to_string(i) + ".json", node_snapshot(run.final_states[i]).dump(1) + "\n");
  }
  return files;
}

std::string git_blob_sha1(const std::string& content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, header.data(), header.size()) != 1 ||
      EVP_DigestUpdate(ctx, content.data(), content.size()) != 1 || EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("git_blob_sha1: digest failed");
  }
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

int run_experiment(const ExperimentConfig& cfg, const std::string& out_dir, std::ostream& log) {
  namespace fs = std::filesystem;
  cfg.validate();
  const std::string echo = config_to_json(cfg).dump(2) + "\n";
  Json runs = Json::array();
  bool all_ok = true;

  for (std::uint64_t seed : cfg.seeds) {
    Scenario sc;
    try {
      sc = scenario_for_seed(cfg, seed);
    } catch (const ScenarioInfeasible& e) {
      for (auto v : cfg.variants) {
        for (double r : cfg.loss_rates) {
          runs.push_back({{"label", run_label(v, seed, r)}, {"variant", to_string(v)}, {"seed", seed},
                          {"loss_rate", r}, {"status", "failed"}, {"error", e.what()}});
        }
      }
      log << "seed " << seed << ": " << e.what() << '\n';
      all_ok = false;
      continue;
    }
    for (auto v : cfg.variants) {
      for (double r : cfg.loss_rates) {
        const std::string label = run_label(v, seed, r);
        const RunResult run = run_scenario(sc, cfg, v, r, seed, cfg.threads);
        Json entry = {{"label", label}, {"variant", to_string(v)}, {"seed", seed}, {"loss_rate", r}};
        if (run.failed) {
          all_ok = false;
          entry["status"] = "failed";
          entry["error"] = run.error;
          log << label << ": FAILED " << run.error << '\n';
        } else {
          entry["status"] = "ok";
          Json hashes = Json::object();
          for (const auto& [name, content] : render_run_files(sc, run)) {
            write_file(fs::path(out_dir) / label / name, content);
            hashes[name] = git_blob_sha1(content);
          }
          std::ostringstream timing;
          write_timing_csv(timing, run.report);
          write_file(fs::path(out_dir) / label / "timing.csv", timing.str());
          entry["files"] = hashes;
          entry["jitter_events"] = run.report.jitter_events;
          const auto& rep = run.report;
          log << label << ": rmse avg " << format_number(rep.team_average_rmse()) << " m, object error avg "
              << (rep.team_average(&RobotMetrics::object_error) ? format_number(*rep.team_average(&RobotMetrics::object_error)) : "n/a")
              << " m, disagreement avg "
              << (rep.team_average(&RobotMetrics::disagreement) ? format_number(*rep.team_average(&RobotMetrics::disagreement)) : "n/a")
              << " m, " << format_number(rep.total_seconds) << " s\n";
        }
        runs.push_back(entry);
      }
    }
  }

  const Json manifest = {{"format", "dvislam-manifest"},
                         {"schema_version", 1},
                         {"config_sha1", git_blob_sha1(echo)},
                         {"config", Json::parse(echo)},
                         {"runs", runs}};
  write_file(fs::path(out_dir) / "manifest.json", manifest.dump(2) + "\n");
  return all_ok ? 0 : 2;
}

}  // namespace dvislam
