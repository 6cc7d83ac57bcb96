#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dpp/config.hpp"
#include "dpp/corrector.hpp"
#include "dpp/env.hpp"
#include "dpp/env_io.hpp"
#include "dpp/error.hpp"
#include "dpp/heatkernel.hpp"
#include "dpp/isoperimetry.hpp"
#include "dpp/network2d.hpp"
#include "dpp/parallel.hpp"
#include "dpp/stats.hpp"
#include "dpp/walk.hpp"
#include "json.hpp"

namespace dpp::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

enum exit_code : int {
  ok = 0,
  internal = 1,
  usage = 2,
  config = 3,
  format = 4,
  validation = 5,
  numerical = 6,
  io = 7,
  sampling = 8,
};

inline int exit_code_for(errc code) {
  switch (code) {
    case errc::invalid_argument:
    case errc::unsupported_dimension:
    case errc::window_limit: return usage;
    case errc::malformed_config: return config;
    case errc::bad_magic:
    case errc::dimension_overflow:
    case errc::truncated_payload:
    case errc::checksum_mismatch: return format;
    case errc::validation_failed: return validation;
    case errc::numerical_integrity:
    case errc::identity_violation:
    case errc::solver_not_converged: return numerical;
    case errc::io_error: return io;
    case errc::rejection_budget_exhausted: return sampling;
  }
  return internal;
}

inline const char* kExitCodeHelp =
    "Exit codes: 0 ok, 1 internal error, 2 usage, 3 malformed config, 4 file format,\n"
    "5 validation failed, 6 numerical failure, 7 I/O, 8 sampling budget exhausted.\n"
    "Errors are also written to stderr as a JSON record. DPP_THREADS caps worker threads.";

inline json error_record(const std::string& code, int exit, const std::string& message) {
  return json{{"error", {{"code", code}, {"exit_code", exit}, {"message", message}}}};
}

inline constexpr int kCriteria = 20;

inline const char* criterion_name(int k) {
  static const char* names[kCriteria] = {
      "zero velocity",         "1-d clt variance",      "1-d coupling",         "heat-kernel decay",
      "gauss-green identity",  "entropy bound",         "conductance law",      "subdivision",
      "squeezing",             "corrector solve",       "corrector degeneracy", "eps-norm trend",
      "harmonicity",           "martingale property",   "martingale clt",       "corrector sublinearity",
      "mean-zero increment",   "recurrence diagnostics", "alpha-rule reduction", "reproducibility",
  };
  return names[k - 1];
}

// ---------------------------------------------------------------------------
// Output helpers

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), errc::io_error, "cannot write '" + path.string() + "'");
  f << text;
  require(static_cast<bool>(f), errc::io_error, "write failed for '" + path.string() + "'");
}

inline fs::path prepare_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, errc::io_error, "cannot create directory '" + dir + "': " + ec.message());
  return fs::path(dir);
}

inline json criterion(bool pass, json detail = json::object()) {
  detail["status"] = pass ? "pass" : "fail";
  return detail;
}

inline json matrix_json(const Eigen::MatrixXd& m) {
  json j = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index k = 0; k < m.cols(); ++k) row[static_cast<std::size_t>(k)] = m(i, k);
    j.push_back(row);
  }
  return j;
}

inline json ks_json(const std::vector<KsResult>& ks) {
  json j = json::array();
  for (const auto& r : ks) j.push_back({{"statistic", r.statistic}, {"pvalue", r.pvalue}, {"n", r.n}});
  return j;
}

// The output directory is not part of what a run computes.
inline json run_config(const ExperimentConfig& c) {
  json j = to_json(c);
  j.erase("out");
  return j;
}

inline void emit(const fs::path& dir, const std::string& name, const std::string& command, const ExperimentConfig& c,
                 json results, json criteria, std::ostream& out) {
  json doc;
  doc["command"] = command;
  doc["config"] = run_config(c);
  doc["results"] = std::move(results);
  doc["criteria"] = criteria;
  write_text(dir / name, doc.dump(2) + "\n");
  out << command << ": wrote " << (dir / name).string() << "\n";
  for (auto it = criteria.begin(); it != criteria.end(); ++it)
    out << "  criterion " << it.key() << " (" << criterion_name(std::stoi(it.key())) << "): "
        << it.value()["status"].get<std::string>() << "\n";
}

// ---------------------------------------------------------------------------
// Environments

inline SampleOptions sample_options(const ExperimentConfig& c) {
  SampleOptions o;
  o.validation = c.strict ? ValidationMode::strict : ValidationMode::lenient;
  return o;
}

inline Environment run_environment(const ExperimentConfig& c) {
  if (!c.env_path.empty()) return load_file(c.env_path, c.strict ? ValidationMode::strict : ValidationMode::lenient);
  return sample(c.spec, c.window(), annealed_env_seed(c.seed), c.condition_on_origin, sample_options(c));
}

inline bool quenched(const ExperimentConfig& c) { return !c.env_path.empty() || c.mode == "quenched"; }

// ---------------------------------------------------------------------------
// Subcommands

inline int cmd_gen_env(const ExperimentConfig& c, std::ostream& out) {
  auto env = sample(c.spec, c.window(), c.seed, c.condition_on_origin, sample_options(c));
  fs::path p(c.out);
  if (p.has_parent_path()) prepare_dir(p.parent_path().string());
  save_file(env, c.out);
  out << "gen-env: wrote " << c.out << " (" << env.count() << " of " << env.volume() << " sites occupied)\n";
  return ok;
}

/// Environment and path seed of walk i, shared by the ensemble and the checks.
struct WalkSource {
  const ExperimentConfig& c;
  std::shared_ptr<const Environment> shared;

  Environment env(std::uint64_t i) const {
    if (shared) return *shared;
    return sample(c.spec, c.window(), annealed_env_seed(walk_seed(c.seed, i)), true, sample_options(c));
  }
  std::uint64_t path_seed(std::uint64_t i) const {
    std::uint64_t s = walk_seed(c.seed, i);
    return shared ? s : annealed_path_seed(s);
  }
};

inline int cmd_walk(const ExperimentConfig& c, std::ostream& out) {
  auto dir = prepare_dir(c.out);
  WalkSource src{c, nullptr};
  WalkEnsemble ens;
  if (quenched(c)) {
    src.shared = std::make_shared<const Environment>(run_environment(c));
    ens = run_quenched_ensemble(*src.shared, c.rule(), c.horizon, c.walkers, c.seed);
  } else {
    ens = run_annealed(c.spec, c.window(), c.rule(), c.horizon, c.walkers, c.seed, sample_options(c));
  }
  const int d = ens.dim;
  {
    std::ostringstream os;
    write_summary_csv(os, ens);
    write_text(dir / "walks.csv", os.str());
  }

  json results, criteria;
  auto v = velocity_test(ens, c.velocity_k);
  results["velocity"] = {{"horizon", v.horizon}, {"used", v.used}, {"k", v.k}, {"mean", v.mean}, {"stderr", v.stderr_}};
  std::uint64_t failed = 0;
  for (const auto& w : ens.walks) failed += w.ok() ? 0 : 1;
  results["failed_walks"] = failed;
  criteria["1"] = criterion(v.passed(), {{"mean", v.mean}, {"stderr", v.stderr_}, {"k", v.k}, {"file", "walk.json"}});

  // alpha = 0 reduction: weighted sampler against the uniform one on shared seeds
  const std::uint64_t n_alpha = std::min<std::uint64_t>(c.walkers, 100);
  std::vector<std::uint8_t> same(n_alpha, 0);
  parallel_for(n_alpha, [&](std::size_t i) {
    NeighborTable t(src.env(i));
    auto a = run_quenched(t, TransitionRule{0.0}, c.horizon, src.path_seed(i), Engine::uniform);
    auto b = run_quenched(t, TransitionRule{0.0}, c.horizon, src.path_seed(i), Engine::weighted);
    same[i] = a.sites == b.sites && a.unwrapped == b.unwrapped;
  });
  auto identical = static_cast<std::uint64_t>(std::count(same.begin(), same.end(), 1));
  criteria["19"] = criterion(identical == n_alpha, {{"trajectories", n_alpha}, {"identical", identical}});

  if (d == 1) {
    const std::uint64_t n_couple = std::min<std::uint64_t>(c.walkers, 1000);
    std::vector<std::uint64_t> steps(n_couple), bad(n_couple);
    parallel_for(n_couple, [&](std::size_t i) {
      auto env = src.env(i);
      NeighborTable t(env);
      auto tr = run_quenched(t, c.rule(), c.horizon, src.path_seed(i));
      auto chk = check_coupling(env, tr);
      steps[i] = chk.steps_checked;
      bad[i] = chk.violations;
    });
    std::uint64_t total = 0, violations = 0;
    for (std::size_t i = 0; i < n_couple; ++i) {
      total += steps[i];
      violations += bad[i];
    }
    criteria["3"] = criterion(violations == 0,
                              {{"trajectories", n_couple}, {"steps_checked", total}, {"violations", violations}});
  }
  emit(dir, "walk.json", "walk", c, results, criteria, out);

  if (c.recurrence) {
    auto r = recurrence_report(c.spec, c.window(), c.horizon, c.walkers, c.seed);
    json rr = {{"dim", r.dim},
               {"checkpoints", r.checkpoints},
               {"mean_local_time", r.mean_local_time},
               {"exponent", r.exponent},
               {"green_tail_slope", r.green_tail_slope},
               {"cauchy_C", r.cauchy_C},
               {"cauchy_holds", r.cauchy_holds},
               {"nash_williams_slope", r.nash_williams_slope},
               {"verdict", to_string(r.verdict)},
               {"basis", r.basis}};
    bool pass = r.dim >= 3 ? r.verdict == Verdict::transient : r.verdict == Verdict::recurrent;
    json crit;
    crit["18"] = criterion(pass, {{"dim", r.dim}, {"verdict", to_string(r.verdict)}});
    emit(dir, "recurrence_d" + std::to_string(r.dim) + ".json", "recurrence", c, rr, crit, out);
  }
  return ok;
}

inline int cmd_heatkernel(const ExperimentConfig& c, std::ostream& out) {
  auto dir = prepare_dir(c.out);
  auto env = run_environment(c);
  NeighborTable t(env);
  auto s = diagnostics(t, c.rule(), c.horizon);
  {
    std::ostringstream os;
    write_series_csv(os, s);
    write_text(dir / "heatkernel.csv", os.str());
  }
  auto b = heat_kernel_bound(s, c.plateau_from, c.plateau_factor);
  double gg = max_gauss_green_residual(s);
  auto eb = entropy_bound(s, s.K);
  auto g = green_report(s.green_partial);
  json results = {{"K", s.K},
                  {"K_at", s.K_at},
                  {"first_half_max", b.first_half_max},
                  {"last_half_max", b.last_half_max},
                  {"gauss_green_max", gg},
                  {"entropy_min_margin", eb.min_margin},
                  {"entropy_worst_n", eb.worst_n},
                  {"green_partial", g.value},
                  {"green_tail_slope", g.tail_slope},
                  {"usable_horizon", s.usable_horizon},
                  {"max_mass_error", s.max_mass_error}};
  json criteria;
  criteria["4"] = criterion(b.plateau, {{"first_half_max", b.first_half_max}, {"last_half_max", b.last_half_max},
                                        {"factor", c.plateau_factor}, {"file", "heatkernel.csv"}});
  criteria["5"] = criterion(gg <= 1e-9, {{"max_residual", gg}, {"threshold", 1e-9}});
  criteria["6"] = criterion(eb.violations == 0, {{"K", s.K}, {"violations", eb.violations}, {"min_margin", eb.min_margin}});
  emit(dir, "heatkernel.json", "heatkernel", c, results, criteria, out);
  return ok;
}

inline int cmd_network(const ExperimentConfig& c, std::ostream& out) {
  require(c.dims.size() == 2, errc::unsupported_dimension, "network needs a 2-d window");
  auto dir = prepare_dir(c.out);
  auto env = run_environment(c);
  auto net = network::build_network(env);
  if (c.export_edges) {
    std::ostringstream os;
    network::write_edges_csv(os, net);
    write_text(dir / "network_edges.csv", os.str());
  }
  auto cut = network::cutsets(net, (env.window().min_side() - 2) / 2);
  {
    std::ostringstream os;
    os.precision(17);
    os << "n,edges,conductance,nash_williams\n";
    for (const auto& l : cut.levels) os << l.n << ',' << l.edges.size() << ',' << l.conductance << ',' << l.nash_williams << '\n';
    write_text(dir / "cutsets.csv", os.str());
  }

  std::uint64_t base = 0, consistent = 0;
  for (std::uint64_t k = 0; k < c.envs; ++k) {
    auto e = sample(c.spec, c.window(), derive_key(annealed_env_seed(c.seed), k + 1), true, sample_options(c));
    auto chk = network::check_subdivision(network::build_network(e));
    base += chk.base_edges;
    consistent += chk.consistent;
  }

  auto law = network::conductance_law(c.spec, c.window(), c.edge_samples, c.seed);
  network::Pmf gaps;
  if (auto* b = std::get_if<Bernoulli>(&c.spec)) {
    gaps = network::bernoulli_gap_law(b->p, env.window().min_side());
  } else {
    gaps = network::empirical_gap_law(c.spec, c.window(), 0, std::max<std::uint64_t>(c.envs, 1), c.seed);
  }
  auto tail = network::cauchy_tail_check(gaps);

  json results = {{"vertices", net.vertices.size()},
                  {"edges", net.edges.size()},
                  {"nash_williams_log_slope", cut.log_slope},
                  {"conductance_tv", law.tv},
                  {"conductance_samples", law.samples},
                  {"cauchy_C", tail.C},
                  {"cauchy_holds", tail.holds},
                  {"label", tail.holds ? "consistent-with-recurrent" : "inconclusive"}};
  json criteria;
  criteria["7"] = criterion(law.tv <= c.tv_threshold, {{"tv", law.tv}, {"threshold", c.tv_threshold}});
  criteria["8"] = criterion(base > 0 && consistent == base,
                            {{"environments", c.envs}, {"base_edges", base}, {"consistent", consistent}});
  emit(dir, "network.json", "network", c, results, criteria, out);
  return ok;
}

inline int cmd_squeeze(const ExperimentConfig& c, std::ostream& out) {
  auto dir = prepare_dir(c.out);
  json results, criteria;
  if (!c.set_literal.empty()) {
    auto a = parse_set(c.set_literal);
    json axes = json::array();
    for (int j = 0; j < a.dim(); ++j) {
      auto p = squeeze_properties(a, j);
      axes.push_back({{"axis", j},
                      {"squeezed", format_set(squeeze(a, j))},
                      {"fibers_preserved", p.fibers_preserved},
                      {"size_preserved", p.size_preserved},
                      {"projections_shrink", p.projections_shrink},
                      {"energy_monotone", p.energy_monotone}});
    }
    auto fp = squeeze_fixpoint(a);
    std::uint64_t sum = 0;
    for (int j = 0; j < a.dim(); ++j) sum += project(fp.set, j).size();
    auto iso = isoperimetric_check(a);
    results = {{"set", format_set(a)},
               {"energy", energy(a)},
               {"axes", axes},
               {"fixpoint", format_set(fp.set)},
               {"fixpoint_steps", fp.steps},
               {"fixpoint_energies", fp.energies},
               {"boundary_edges", boundary_edges(fp.set)},
               {"projection_sum", sum},
               {"isoperimetric_ratio", iso.ratio}};
  } else {
    int side = c.exhaustive_side ? static_cast<int>(c.exhaustive_side) : 4;
    int max_size = c.exhaustive_max ? static_cast<int>(c.exhaustive_max) : 6;
    auto r = exhaustive_squeeze_check(side, max_size);
    results = {{"side", side},
               {"max_size", max_size},
               {"sets", r.sets},
               {"pairs", r.pairs},
               {"property_failures", r.property_failures},
               {"fixpoint_failures", r.fixpoint_failures},
               {"boundary_failures", r.boundary_failures},
               {"min_ratio", r.min_ratio}};
    criteria["9"] = criterion(r.ok(), {{"sets", r.sets}, {"side", side}, {"max_size", max_size}});
  }
  emit(dir, "squeeze.json", "squeeze", c, results, criteria, out);
  return ok;
}

inline bool strictly_decreasing(const std::vector<double>& v) {
  for (std::size_t k = 1; k < v.size(); ++k)
    if (!(v[k] < v[k - 1])) return false;
  return true;
}

inline int cmd_corrector(const ExperimentConfig& c, std::ostream& out) {
  auto dir = prepare_dir(c.out);
  auto env = run_environment(c);
  NeighborTable t(env);
  CorrectorOptions opts{c.schedule, c.tol, c.cauchy_factor};
  auto f = assemble_corrector(t, opts);
  {
    std::ostringstream os;
    write_corrector_csv(os, t, f);
    write_text(dir / "corrector.csv", os.str());
  }
  const int d = t.dim();
  const double eps = f.schedule.back();
  double final_h = harmonicity_residual(t, f.chi);
  double bound = 10 * (eps + f.tol) * f.max_gap;
  double max_res = *std::max_element(f.solver_residual.begin(), f.solver_residual.end());

  std::vector<Trajectory> trs;
  for (std::uint64_t i = 0; i < c.walkers; ++i) trs.push_back(run_quenched(t, c.rule(), c.horizon, walk_seed(c.seed, i)));
  auto m = martingale_check(t, f.chi, trs);

  json results = {{"schedule", f.schedule},
                  {"eps_norm", f.eps_norm},
                  {"solver_residual", f.solver_residual},
                  {"harmonicity", f.harmonicity},
                  {"increment_change", f.increment_change},
                  {"iterations", f.iterations},
                  {"stabilized", f.stabilized},
                  {"cocycle_residual", f.cocycle_residual},
                  {"max_gap", f.max_gap},
                  {"martingale",
                   {{"max_conditional_mean", m.max_conditional_mean},
                    {"harmonicity", m.harmonicity},
                    {"visits", m.visits},
                    {"D", matrix_json(m.D)},
                    {"D_site", matrix_json(m.D_site)}}}};
  if (!f.stabilized) results["warning"] = "increments did not stabilize along the schedule";

  json criteria;
  criteria["10"] = criterion(max_res <= 1e-8, {{"max_residual", max_res}, {"threshold", 1e-8}});
  const bool full = env.count() == env.volume();
  if (full) {
    bool zero = std::all_of(f.psi.begin(), f.psi.end(), [](double v) { return v == 0.0; }) &&
                std::all_of(f.chi.begin(), f.chi.end(), [](double v) { return v == 0.0; }) && final_h == 0.0;
    criteria["11"] = criterion(zero, {{"harmonicity", final_h}});
  } else {
    // the trends are vacuous when psi vanishes
    criteria["12"] = criterion(strictly_decreasing(f.eps_norm), {{"eps_norm", f.eps_norm}});
  }
  criteria["13"] = criterion(final_h <= bound && (full || strictly_decreasing(f.harmonicity)),
                             {{"residual", final_h}, {"bound", bound}});
  criteria["14"] = criterion(m.consistent, {{"max_conditional_mean", m.max_conditional_mean},
                                            {"harmonicity", m.harmonicity}, {"visits", m.visits}});

  if (c.corrector_envs > 0) {
    const auto n = static_cast<std::uint32_t>(env.window().min_side() / 4);
    const std::uint64_t k_envs = c.corrector_envs;
    std::vector<double> frac(k_envs);
    std::vector<std::vector<double>> first(k_envs);
    SampleOptions so = sample_options(c);
    so.validation = ValidationMode::strict;
    for (std::uint64_t k = 0; k < k_envs; ++k) {
      auto e = sample(c.spec, c.window(), derive_key(derive_key(c.seed, 0x636f72), k), true, so);
      NeighborTable tk(e);
      auto fk = assemble_corrector(tk, opts);
      auto sl = sublinearity(tk, fk, n, {0.1});
      frac[k] = sl.box.fraction_cube[0];
      for (int i = 0; i < d; ++i) first[k].push_back(chi_first_step(tk, fk, i)[static_cast<std::size_t>(i)]);
    }
    double mean_frac = std::accumulate(frac.begin(), frac.end(), 0.0) / static_cast<double>(k_envs);
    std::vector<double> mean(static_cast<std::size_t>(d), 0.0), se(static_cast<std::size_t>(d), 0.0);
    bool within = k_envs > 1;
    for (std::size_t i = 0; i < static_cast<std::size_t>(d); ++i) {
      for (const auto& v : first) mean[i] += v[i];
      mean[i] /= static_cast<double>(k_envs);
      double ss = 0;
      for (const auto& v : first) ss += (v[i] - mean[i]) * (v[i] - mean[i]);
      se[i] = k_envs > 1 ? std::sqrt(ss / static_cast<double>(k_envs - 1) / static_cast<double>(k_envs)) : 0.0;
      within = within && std::abs(mean[i]) <= 2 * se[i];
    }
    results["ensemble"] = {{"environments", k_envs}, {"n", n}, {"box_fraction", frac}, {"chi_first_step_mean", mean},
                           {"chi_first_step_stderr", se}};
    criteria["16"] = criterion(mean_frac < 0.1, {{"mean_fraction", mean_frac}, {"eps", 0.1}, {"n", n},
                                                 {"environments", k_envs}});
    criteria["17"] = criterion(within, {{"mean", mean}, {"stderr", se}, {"environments", k_envs}});
  }
  emit(dir, "corrector.json", "corrector", c, results, criteria, out);
  return ok;
}

inline int cmd_clt(const ExperimentConfig& c, std::ostream& out) {
  auto dir = prepare_dir(c.out);
  CltOptions opts;
  opts.mode = c.mode == "quenched" ? WalkMode::quenched : WalkMode::annealed;
  opts.ks_level = c.ks_level;
  opts.variance_tol = c.variance_tol;
  opts.covariance_tol = c.covariance_tol;
  opts.corrector = CorrectorOptions{c.schedule, c.tol, c.cauchy_factor};
  opts.sampling = sample_options(c);
  const int d = static_cast<int>(c.dims.size());
  auto r = d == 1 ? clt_1d(c.spec, c.window(), c.horizon, c.walkers, c.seed, opts)
                  : clt_hd(c.spec, c.window(), c.horizon, c.walkers, c.seed, c.use_corrector, opts);
  json results = {{"dim", r.dim},
                  {"horizon", r.horizon},
                  {"walkers", r.walkers},
                  {"used", r.used},
                  {"excluded", r.excluded},
                  {"window_limited", r.window_limited},
                  {"mode", r.mode == WalkMode::annealed ? "annealed" : "quenched"},
                  {"use_corrector", r.use_corrector},
                  {"covariance", matrix_json(r.covariance)},
                  {"target", matrix_json(r.target)},
                  {"target_source", r.target_source},
                  {"gap_mean_analytic", r.gap_mean_analytic},
                  {"gap_mean_birkhoff", r.gap_mean_birkhoff},
                  {"ks", ks_json(r.ks)},
                  {"ks_level", r.ks_level},
                  {"covariance_error", r.covariance_error},
                  {"covariance_ok", r.covariance_ok},
                  {"ks_ok", r.ks_ok},
                  {"warnings", r.warnings}};
  if (d >= 2) results["D_site"] = matrix_json(r.D_site);
  json criteria;
  if (d == 1) {
    criteria["2"] = criterion(r.passed(), {{"variance", r.covariance(0, 0)}, {"target", r.target(0, 0)},
                                           {"ks_pvalue", r.ks.empty() ? 1.0 : r.ks[0].pvalue}});
  } else if (c.use_corrector) {
    criteria["15"] = criterion(r.passed(), {{"covariance_error", r.covariance_error}, {"ks", ks_json(r.ks)}});
  }
  emit(dir, "clt.json", "clt", c, results, criteria, out);
  return ok;
}

// ---------------------------------------------------------------------------
// Report and validation

/// Digest over every JSON artifact in the directory carrying a "criteria" map.
inline json build_digest(const fs::path& dir) {
  std::error_code ec;
  require(fs::is_directory(dir, ec), errc::io_error, "not a directory: '" + dir.string() + "'");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    auto name = e.path().filename().string();
    if (e.is_regular_file() && e.path().extension() == ".json" && name != "digest.json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());

  std::map<int, std::vector<std::pair<std::string, json>>> found;
  json unreadable = json::array();
  for (const auto& p : files) {
    std::ifstream f(p);
    json doc = json::parse(f, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
      unreadable.push_back(p.filename().string());
      continue;
    }
    if (!doc.contains("criteria") || !doc["criteria"].is_object()) continue;
    for (auto it = doc["criteria"].begin(); it != doc["criteria"].end(); ++it) {
      int k = 0;
      try {
        k = std::stoi(it.key());
      } catch (const std::logic_error&) {
        continue;
      }
      if (k >= 1 && k <= kCriteria) found[k].push_back({p.filename().string(), it.value()});
    }
  }

  json digest;
  json crit = json::object();
  json failing = json::array();
  json missing = json::array();
  for (int k = 1; k <= kCriteria; ++k) {
    json e = {{"name", criterion_name(k)}};
    auto f = found.find(k);
    if (f == found.end()) {
      e["status"] = "missing";
      missing.push_back(k);
    } else {
      bool pass = true;
      json sources = json::array();
      for (const auto& [file, v] : f->second) {
        pass = pass && v.value("status", "") == "pass";
        sources.push_back({{"file", file}, {"status", v.value("status", "")}});
      }
      e["status"] = pass ? "pass" : "fail";
      e["sources"] = sources;
      if (!pass) failing.push_back(k);
    }
    crit[std::to_string(k)] = e;
  }
  json expected = json::array();
  for (const char* name : {"walk.json", "heatkernel.json", "network.json", "squeeze.json", "corrector.json", "clt.json",
                           "reproducibility.json"}) {
    if (!fs::exists(dir / name)) expected.push_back(name);
  }
  digest["criteria"] = crit;
  digest["failing"] = failing;
  digest["missing_criteria"] = missing;
  digest["missing_artifacts"] = expected;
  digest["unreadable"] = unreadable;
  return digest;
}

inline std::string digest_text(const json& digest) {
  std::ostringstream os;
  for (int k = 1; k <= kCriteria; ++k) {
    const auto& e = digest["criteria"][std::to_string(k)];
    os << std::setw(2) << k << "  " << std::left << std::setw(8) << e["status"].get<std::string>() << std::right
       << e["name"].get<std::string>();
    if (e.contains("sources")) {
      os << "  [";
      bool first = true;
      for (const auto& s : e["sources"]) {
        os << (first ? "" : ", ") << s["file"].get<std::string>();
        first = false;
      }
      os << "]";
    }
    os << "\n";
  }
  if (!digest["missing_artifacts"].empty()) {
    os << "missing artifacts:";
    for (const auto& m : digest["missing_artifacts"]) os << " " << m.get<std::string>();
    os << "\n";
  }
  return os.str();
}

inline int cmd_report(const std::string& dir, std::ostream& out) {
  auto digest = build_digest(dir);
  auto text = digest_text(digest);
  write_text(fs::path(dir) / "digest.json", digest.dump(2) + "\n");
  write_text(fs::path(dir) / "digest.txt", text);
  out << text;
  return ok;
}

inline std::string read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  require(static_cast<bool>(f), errc::io_error, "cannot read '" + p.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

/// Byte comparison of two run directories, ignoring derived digests.
inline json compare_runs(const fs::path& a, const fs::path& b) {
  auto listing = [](const fs::path& dir) {
    std::error_code ec;
    require(fs::is_directory(dir, ec), errc::io_error, "not a directory: '" + dir.string() + "'");
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir)) {
      auto n = e.path().filename().string();
      if (e.is_regular_file() && n != "digest.json" && n != "digest.txt" && n != "reproducibility.json")
        names.push_back(n);
    }
    std::sort(names.begin(), names.end());
    return names;
  };
  auto na = listing(a), nb = listing(b);
  json differing = json::array();
  std::vector<std::string> all;
  std::set_union(na.begin(), na.end(), nb.begin(), nb.end(), std::back_inserter(all));
  for (const auto& n : all) {
    bool in_a = std::binary_search(na.begin(), na.end(), n), in_b = std::binary_search(nb.begin(), nb.end(), n);
    if (!in_a || !in_b || read_bytes(a / n) != read_bytes(b / n)) differing.push_back(n);
  }
  json criteria;
  criteria["20"] = criterion(differing.empty() && !all.empty(), {{"files", all.size()}, {"differing", differing}});
  return {{"command", "validate"}, {"results", {{"compared", all}, {"differing", differing}}}, {"criteria", criteria}};
}

inline int cmd_validate(const ExperimentConfig& c, const std::string& config_path, const std::vector<std::string>& compare,
                        std::ostream& out) {
  if (compare.size() == 2) {
    auto doc = compare_runs(compare[0], compare[1]);
    auto dir = prepare_dir(c.out);
    write_text(dir / "reproducibility.json", doc.dump(2) + "\n");
    bool same = doc["criteria"]["20"]["status"] == "pass";
    out << "validate: " << (same ? "runs are byte-identical" : "runs differ") << "\n";
    require(same, errc::validation_failed, "runs differ: " + doc["results"]["differing"].dump());
    return ok;
  }
  if (!c.env_path.empty()) {
    auto env = load_file(c.env_path);
    auto r = validate(env);
    json doc = {{"file", c.env_path},
                {"dims", env.window().sides()},
                {"occupied", r.occupied},
                {"empty", r.empty},
                {"degenerate_lines", r.degenerate_lines},
                {"origin_occupied", r.origin_occupied},
                {"strict_ok", r.strict_ok()},
                {"warnings", r.warnings}};
    out << doc.dump(2) << "\n";
    if (c.strict) require(r.strict_ok(), errc::validation_failed, "environment fails strict validation");
    return ok;
  }
  require(!config_path.empty(), errc::invalid_argument, "validate needs --env, --config or --compare A B");
  out << serialize(c);
  return ok;
}

// ---------------------------------------------------------------------------
// Dispatch

/// Flag values are applied over the config file only when given.
class Overrides {
 public:
  template <class T, class Set>
  CLI::Option* option(CLI::App* app, const std::string& name, const std::string& desc, Set set) {
    auto v = std::make_shared<T>();
    auto* o = app->add_option(name, *v, desc);
    items_.push_back({o, [v, set](ExperimentConfig& c) { set(c, *v); }});
    return o;
  }

  template <class Set>
  CLI::Option* flag(CLI::App* app, const std::string& name, const std::string& desc, Set set) {
    auto* o = app->add_flag(name, desc);
    items_.push_back({o, [set](ExperimentConfig& c) { set(c); }});
    return o;
  }

  void apply(ExperimentConfig& c) const {
    for (const auto& [o, f] : items_)
      if (o->count()) f(c);
  }

 private:
  std::vector<std::pair<CLI::Option*, std::function<void(ExperimentConfig&)>>> items_;
};

inline std::vector<std::uint32_t> default_dims(int d) {
  require(d >= 1 && d <= kMaxDim, errc::invalid_argument, "--d must be in 1.." + std::to_string(kMaxDim));
  return std::vector<std::uint32_t>(static_cast<std::size_t>(d), d == 1 ? 8192u : (d == 2 ? 64u : 32u));
}

inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Random walks on discrete point processes", "dpp"};
  app.require_subcommand(1);
  app.footer(kExitCodeHelp);

  std::map<CLI::App*, Overrides> overrides;
  std::string config_path;
  std::string report_dir;
  std::vector<std::string> compare;

  auto sub = [&](const std::string& name, const std::string& desc) {
    auto* s = app.add_subcommand(name, desc);
    s->add_option("--config", config_path, "JSON config file; flags override its values");
    overrides[s];
    return s;
  };
  auto common = [&](CLI::App* s) {
    auto& o = overrides[s];
    o.option<int>(s, "--d", "dimension with a default cube window", [](auto& c, int d) { c.dims = default_dims(d); });
    o.option<std::string>(s, "--spec", "process spec, e.g. bernoulli:p=0.5", [](auto& c, const std::string& v) {
      c.spec = parse_spec(v);
    });
    o.option<std::string>(s, "--dims", "window sides, e.g. 64x64", [](auto& c, const std::string& v) {
      c.dims = parse_dims(v);
    });
    o.option<std::uint64_t>(s, "--seed", "master seed", [](auto& c, std::uint64_t v) { c.seed = v; });
    o.option<std::string>(s, "--out", "output directory", [](auto& c, const std::string& v) { c.out = v; });
    o.flag(s, "--strict", "strict environment validation", [](auto& c) { c.strict = true; });
  };
  auto walking = [&](CLI::App* s) {
    auto& o = overrides[s];
    o.option<std::string>(s, "--env", "stored environment (quenched)", [](auto& c, const std::string& v) {
      c.env_path = v;
    });
    o.option<std::uint64_t>(s, "--steps", "horizon", [](auto& c, std::uint64_t v) { c.horizon = v; });
    o.option<std::uint64_t>(s, "--walkers", "number of walks", [](auto& c, std::uint64_t v) { c.walkers = v; });
    o.option<double>(s, "--alpha", "gap exponent of the transition rule", [](auto& c, double v) { c.alpha = v; });
  };
  auto mode = [&](CLI::App* s) {
    overrides[s]
        .option<std::string>(s, "--mode", "annealed or quenched", [](auto& c, const std::string& v) {
          require(v == "annealed" || v == "quenched", errc::invalid_argument, "mode must be annealed or quenched");
          c.mode = v;
        })
        ->check(CLI::IsMember({"annealed", "quenched"}));
  };

  auto* gen = sub("gen-env", "sample an environment and write it in binary form");
  common(gen);
  overrides[gen].flag(gen, "--no-condition", "do not condition on an occupied origin",
                      [](auto& c) { c.condition_on_origin = false; });

  auto* walk = sub("walk", "run a walk ensemble; velocity, coupling and engine checks");
  common(walk);
  walking(walk);
  mode(walk);
  overrides[walk].flag(walk, "--recurrence", "add recurrence diagnostics", [](auto& c) { c.recurrence = true; });
  overrides[walk].option<double>(walk, "--velocity-k", "velocity band in standard errors",
                                 [](auto& c, double v) { c.velocity_k = v; });

  auto* hk = sub("heatkernel", "exact heat-kernel propagation and diagnostics");
  common(hk);
  walking(hk);
  overrides[hk].option<double>(hk, "--plateau-factor", "plateau tolerance factor",
                               [](auto& c, double v) { c.plateau_factor = v; });
  overrides[hk].option<std::uint64_t>(hk, "--plateau-from", "first step of the plateau test",
                                      [](auto& c, std::uint64_t v) { c.plateau_from = v; });

  auto* net = sub("network", "2-d electrical network, cutsets and conductance law");
  common(net);
  overrides[net].option<std::uint64_t>(net, "--edges", "sampled unit edges",
                                       [](auto& c, std::uint64_t v) { c.edge_samples = v; });
  overrides[net].option<std::uint64_t>(net, "--envs", "environments for the subdivision check",
                                       [](auto& c, std::uint64_t v) { c.envs = v; });
  overrides[net].option<double>(net, "--tv-threshold", "total-variation threshold",
                                [](auto& c, double v) { c.tv_threshold = v; });
  overrides[net].flag(net, "--export-edges", "write the edge list", [](auto& c) { c.export_edges = true; });

  auto* sq = sub("squeeze", "squeezing operators on finite sets");
  overrides[sq].option<std::string>(sq, "--out", "output directory", [](auto& c, const std::string& v) { c.out = v; });
  overrides[sq].option<std::string>(sq, "--set", "set literal, e.g. \"(1,1) (2,2)\"",
                                    [](auto& c, const std::string& v) { c.set_literal = v; });
  overrides[sq].option<std::uint32_t>(sq, "--side", "exhaustive check box side",
                                      [](auto& c, std::uint32_t v) { c.exhaustive_side = v; });
  overrides[sq].option<std::uint32_t>(sq, "--max-size", "exhaustive check maximum set size",
                                      [](auto& c, std::uint32_t v) { c.exhaustive_max = v; });

  auto* corr = sub("corrector", "regularized corrector, harmonicity and martingale checks");
  common(corr);
  walking(corr);
  overrides[corr].option<double>(corr, "--tol", "solver tolerance", [](auto& c, double v) { c.tol = v; });
  overrides[corr]
      .option<std::vector<double>>(corr, "--schedule", "eps schedule, comma separated",
                                   [](auto& c, const std::vector<double>& v) { c.schedule = v; })
      ->delimiter(',');
  overrides[corr].option<std::uint64_t>(corr, "--ensemble", "environments for sublinearity and mean-zero averages",
                                        [](auto& c, std::uint64_t v) { c.corrector_envs = v; });

  auto* clt = sub("clt", "central limit checks");
  common(clt);
  mode(clt);
  overrides[clt].option<std::uint64_t>(clt, "--steps", "horizon", [](auto& c, std::uint64_t v) { c.horizon = v; });
  overrides[clt].option<std::uint64_t>(clt, "--walkers", "number of walks",
                                       [](auto& c, std::uint64_t v) { c.walkers = v; });
  overrides[clt].flag(clt, "--corrector", "test M_n = X_n + chi(X_n) against the martingale D",
                      [](auto& c) { c.use_corrector = true; });
  overrides[clt].option<double>(clt, "--ks-level", "KS level", [](auto& c, double v) { c.ks_level = v; });
  overrides[clt].option<double>(clt, "--variance-tol", "relative variance band (d = 1)",
                                [](auto& c, double v) { c.variance_tol = v; });
  overrides[clt].option<double>(clt, "--covariance-tol", "covariance tolerance (d >= 2)",
                                [](auto& c, double v) { c.covariance_tol = v; });

  auto* rep = app.add_subcommand("report", "digest of all criteria found in a run directory");
  rep->add_option("dir", report_dir, "run directory")->required();

  auto* val = sub("validate", "validate an environment file, a config, or compare two runs");
  overrides[val].option<std::string>(val, "--env", "environment file", [](auto& c, const std::string& v) {
    c.env_path = v;
  });
  overrides[val].flag(val, "--strict", "fail unless strict validation holds", [](auto& c) { c.strict = true; });
  overrides[val].option<std::string>(val, "--out", "output directory", [](auto& c, const std::string& v) { c.out = v; });
  val->add_option("--compare", compare, "two run directories to compare byte for byte")->expected(2);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return ok;
  } catch (const CLI::ParseError& e) {
    err << error_record("usage", usage, e.what()).dump() << "\n";
    return usage;
  }

  auto* chosen = app.get_subcommands().front();
  try {
    if (chosen == rep) return cmd_report(report_dir, out);
    ExperimentConfig c = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
    overrides[chosen].apply(c);
    const auto name = chosen->get_name();
    if (name == "gen-env") return cmd_gen_env(c, out);
    if (name == "walk") return cmd_walk(c, out);
    if (name == "heatkernel") return cmd_heatkernel(c, out);
    if (name == "network") return cmd_network(c, out);
    if (name == "squeeze") return cmd_squeeze(c, out);
    if (name == "corrector") return cmd_corrector(c, out);
    if (name == "clt") return cmd_clt(c, out);
    return cmd_validate(c, config_path, compare, out);
  } catch (const error& e) {
    int code = exit_code_for(e.code());
    err << error_record(std::string(to_string(e.code())), code, e.what()).dump() << "\n";
    return code;
  } catch (const std::exception& e) {
    err << error_record("internal", internal, e.what()).dump() << "\n";
    return internal;
  }
}

}  // namespace dpp::cli
