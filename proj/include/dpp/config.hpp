#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dpp/corrector.hpp"
#include "dpp/env.hpp"
#include "dpp/env_io.hpp"
#include "dpp/error.hpp"
#include "dpp/walk.hpp"
#include "json.hpp"

namespace dpp {

/// Everything that determines a run. Serialized into every output directory.
struct ExperimentConfig {
  ProcessSpec spec = Bernoulli{0.5};
  std::vector<std::uint32_t> dims = {64, 64};
  double alpha = 0.0;
  std::uint64_t horizon = 1000;
  std::uint64_t walkers = 100;
  std::uint64_t seed = 0;
  std::string mode = "annealed";  // annealed | quenched
  bool condition_on_origin = true;
  bool strict = false;
  std::string env_path;  // quenched runs on a stored environment when set
  bool recurrence = false;
  std::string out = "run";

  // corrector
  std::vector<double> schedule = default_schedule();
  double tol = 1e-10;
  double cauchy_factor = 10;
  bool use_corrector = false;
  std::uint64_t corrector_envs = 0;  // > 0 adds the multi-environment averages

  // statistics
  double ks_level = 0.01;
  double variance_tol = 0.05;
  double covariance_tol = 0.10;
  double velocity_k = 3;
  double plateau_factor = 1.05;
  std::uint64_t plateau_from = 20;

  // network
  std::uint64_t edge_samples = 100000;
  std::uint64_t envs = 10;
  double tv_threshold = 0.02;
  bool export_edges = false;

  // squeeze
  std::string set_literal;
  std::uint32_t exhaustive_side = 0;
  std::uint32_t exhaustive_max = 0;

  bool operator==(const ExperimentConfig&) const = default;

  LatticeWindow window() const { return LatticeWindow(dims); }
  TransitionRule rule() const { return TransitionRule{alpha}; }
};

/// "64x64" -> {64, 64}
inline std::vector<std::uint32_t> parse_dims(const std::string& text) {
  std::vector<std::uint32_t> out;
  std::size_t start = 0;
  while (true) {
    auto x = text.find('x', start);
    std::string tok = text.substr(start, x == std::string::npos ? std::string::npos : x - start);
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(tok, &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    require(used == tok.size() && !tok.empty() && v <= 0xffffffffUL, errc::malformed_config,
            "bad window dims '" + text + "'");
    out.push_back(static_cast<std::uint32_t>(v));
    if (x == std::string::npos) break;
    start = x + 1;
  }
  return out;
}

inline std::string format_dims(const std::vector<std::uint32_t>& dims) {
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) s += (i ? "x" : "") + std::to_string(dims[i]);
  return s;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["spec"] = spec_to_json(c.spec);
  j["dims"] = c.dims;
  j["alpha"] = c.alpha;
  j["horizon"] = c.horizon;
  j["walkers"] = c.walkers;
  j["seed"] = c.seed;
  j["mode"] = c.mode;
  j["condition_on_origin"] = c.condition_on_origin;
  j["strict"] = c.strict;
  j["env_path"] = c.env_path;
  j["recurrence"] = c.recurrence;
  j["out"] = c.out;
  j["schedule"] = c.schedule;
  j["tol"] = c.tol;
  j["cauchy_factor"] = c.cauchy_factor;
  j["use_corrector"] = c.use_corrector;
  j["corrector_envs"] = c.corrector_envs;
  j["ks_level"] = c.ks_level;
  j["variance_tol"] = c.variance_tol;
  j["covariance_tol"] = c.covariance_tol;
  j["velocity_k"] = c.velocity_k;
  j["plateau_factor"] = c.plateau_factor;
  j["plateau_from"] = c.plateau_from;
  j["edge_samples"] = c.edge_samples;
  j["envs"] = c.envs;
  j["tv_threshold"] = c.tv_threshold;
  j["export_edges"] = c.export_edges;
  j["set_literal"] = c.set_literal;
  j["exhaustive_side"] = c.exhaustive_side;
  j["exhaustive_max"] = c.exhaustive_max;
  return j;
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig c = {}) {
  require(j.is_object(), errc::malformed_config, "config must be a JSON object");
  static const nlohmann::json known = to_json(ExperimentConfig{});
  for (auto it = j.begin(); it != j.end(); ++it)
    require(known.contains(it.key()), errc::malformed_config, "unknown config key '" + it.key() + "'");
  try {
    if (j.contains("spec")) c.spec = spec_from_json(j["spec"]);
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("dims", c.dims);
    get("alpha", c.alpha);
    get("horizon", c.horizon);
    get("walkers", c.walkers);
    get("seed", c.seed);
    get("mode", c.mode);
    get("condition_on_origin", c.condition_on_origin);
    get("strict", c.strict);
    get("env_path", c.env_path);
    get("recurrence", c.recurrence);
    get("out", c.out);
    get("schedule", c.schedule);
    get("tol", c.tol);
    get("cauchy_factor", c.cauchy_factor);
    get("use_corrector", c.use_corrector);
    get("corrector_envs", c.corrector_envs);
    get("ks_level", c.ks_level);
    get("variance_tol", c.variance_tol);
    get("covariance_tol", c.covariance_tol);
    get("velocity_k", c.velocity_k);
    get("plateau_factor", c.plateau_factor);
    get("plateau_from", c.plateau_from);
    get("edge_samples", c.edge_samples);
    get("envs", c.envs);
    get("tv_threshold", c.tv_threshold);
    get("export_edges", c.export_edges);
    get("set_literal", c.set_literal);
    get("exhaustive_side", c.exhaustive_side);
    get("exhaustive_max", c.exhaustive_max);
  } catch (const nlohmann::json::exception& e) {
    fail(errc::malformed_config, std::string("bad config value: ") + e.what());
  }
  require(c.mode == "annealed" || c.mode == "quenched", errc::malformed_config, "mode must be annealed or quenched");
  return c;
}

inline std::string serialize(const ExperimentConfig& c) { return to_json(c).dump(2) + "\n"; }

inline ExperimentConfig parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(errc::malformed_config, std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  require(static_cast<bool>(f), errc::io_error, "cannot open config '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

}  // namespace dpp
