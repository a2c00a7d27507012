#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>

#include "dvislam/errors.hpp"
#include "dvislam/experiment.hpp"

namespace {

using dvislam::ExperimentConfig;
using dvislam::Json;

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw dvislam::ConfigError(path + ":0: cannot open file");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

int replay(const std::string& manifest_path, const std::string& out_dir, std::size_t threads) {
  const std::string text = read_text(manifest_path);
  Json manifest;
  try {
    manifest = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw dvislam::ConfigError(manifest_path + ":" + std::to_string(dvislam::line_of_offset(text, e.byte)) +
                               ": invalid JSON: " + e.what());
  }
  if (manifest.value("format", std::string()) != "dvislam-manifest") {
    throw dvislam::ConfigError(manifest_path + ":1: not a run manifest");
  }
  ExperimentConfig cfg = dvislam::parse_experiment_config(manifest.at("config").dump(2), manifest_path + "#config");
  if (threads > 0) cfg.threads = threads;
  const int status = dvislam::run_experiment(cfg, out_dir, std::cout);

  // Compare the regenerated deterministic files against the recorded hashes.
  const Json fresh = Json::parse(read_text((std::filesystem::path(out_dir) / "manifest.json").string()));
  int mismatches = 0;
  for (const auto& run : manifest.at("runs")) {
    if (run.value("status", std::string()) != "ok") continue;
    const std::string label = run.at("label").get<std::string>();
    const Json* match = nullptr;
    for (const auto& r : fresh.at("runs")) {
      if (r.at("label") == run.at("label")) match = &r;
    }
    if (match == nullptr || !match->contains("files")) {
      std::cout << label << ": missing from replay\n";
      ++mismatches;
      continue;
    }
    for (const auto& [name, hash] : run.at("files").items()) {
      if (!match->at("files").contains(name) || match->at("files").at(name) != hash) {
        std::cout << label << "/" << name << ": hash mismatch\n";
        ++mismatches;
      }
    }
  }
  std::cout << (mismatches == 0 ? "replay identical\n" : "replay differs\n");
  if (mismatches > 0) return 3;
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed stereo MSCKF experiments with consensus averaging over shared objects"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed_override = 0;
  std::string variant;
  double loss_rate = -1.0;
  std::size_t threads = 0;

  auto* run = app.add_subcommand("run", "run an experiment config");
  run->add_option("config", config_path, "experiment config (JSON)")->required();
  auto* seed_opt = run->add_option("--seed-override", seed_override, "run only this seed");
  run->add_option("--out-dir", out_dir, "output directory (overrides the config)");
  run->add_option("--variant", variant, "separate or consensus (overrides the config)");
  auto* loss_opt = run->add_option("--loss-rate", loss_rate, "edge loss rate in [0, 1] (overrides the config)");
  run->add_option("--threads", threads, "worker threads for the robots of one run");

  std::string manifest_path;
  auto* rep = app.add_subcommand("replay", "rerun a manifest and check the outputs are byte-identical");
  rep->add_option("manifest", manifest_path, "manifest.json of an earlier run")->required();
  rep->add_option("--out-dir", out_dir, "output directory for the replay")->required();
  rep->add_option("--threads", threads, "worker threads for the robots of one run");

  std::string scenario_out;
  std::uint64_t gen_seed = 1;
  auto* gen = app.add_subcommand("generate", "export the simulated scenario of a config");
  gen->add_option("config", config_path, "experiment config (JSON)")->required();
  gen->add_option("--seed", gen_seed, "scenario seed");
  gen->add_option("--out", scenario_out, "scenario file to write")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      ExperimentConfig cfg = dvislam::load_experiment_config(config_path);
      if (*seed_opt) cfg.seeds = {seed_override};
      if (!variant.empty()) {
        const auto v = dvislam::parse_variant(variant);
        if (!v) throw dvislam::ConfigError("--variant: expected separate or consensus");
        cfg.variants = {*v};
      }
      if (*loss_opt) cfg.loss_rates = {loss_rate};
      if (threads > 0) cfg.threads = threads;
      if (!out_dir.empty()) cfg.output_dir = out_dir;
      cfg.validate();
      return dvislam::run_experiment(cfg, cfg.output_dir, std::cout);
    }
    if (*rep) return replay(manifest_path, out_dir, threads);
    if (*gen) {
      ExperimentConfig cfg = dvislam::load_experiment_config(config_path);
      cfg.scenario_file.clear();
      const dvislam::Scenario sc = dvislam::scenario_for_seed(cfg, gen_seed);
      std::ofstream f(scenario_out, std::ios::binary);
      if (!f) throw dvislam::ConfigError(scenario_out + ":0: cannot write scenario file");
      f << dvislam::scenario_to_json(sc).dump() << '\n';
      return 0;
    }
  } catch (const dvislam::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
