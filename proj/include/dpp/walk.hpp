#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dpp/env.hpp"
#include "dpp/error.hpp"
#include "dpp/lattice.hpp"
#include "dpp/parallel.hpp"
#include "dpp/rng.hpp"

namespace dpp {

/// Jump to neighbour u with probability gap^alpha / Z(v). alpha = 0 is the
/// uniform rule.
struct TransitionRule {
  double alpha = 0.0;
};

struct StepOption {
  Point point;
  int dir;
  double probability;
};

inline std::vector<StepOption> step_distribution(const Environment& env, const TransitionRule& rule, const Point& v) {
  require(env.occupied(v), errc::invalid_argument, "step_distribution at an unoccupied site");
  auto nb = neighbors(env, v);
  std::vector<StepOption> out;
  std::uint64_t vi = env.window().index(v);
  double z = 0;
  std::vector<double> w;
  for (const auto& n : nb) {
    double g = rule.alpha == 0.0 ? 1.0 : std::pow(static_cast<double>(gap(env, vi, n.dir)), rule.alpha);
    w.push_back(g);
    z += g;
  }
  for (std::size_t k = 0; k < nb.size(); ++k) out.push_back({nb[k].point, nb[k].dir, w[k] / z});
  return out;
}

/// Probability of each direction from a table site (length 2d).
inline void step_weights(const NeighborTable& t, std::size_t id, double alpha, double* out) {
  int m = t.dirs();
  double z = 0;
  for (int e = 0; e < m; ++e) {
    out[e] = alpha == 0.0 ? 1.0 : std::pow(static_cast<double>(t.gap(id, e)), alpha);
    z += out[e];
  }
  for (int e = 0; e < m; ++e) out[e] /= z;
}

namespace detail {

inline int pick_uniform(double u, int m) { return static_cast<int>(u * m); }

inline int pick_weighted(double u, const double* w, int m) {
  double z = 0;
  for (int e = 0; e < m; ++e) z += w[e];
  double target = u * z;
  double cum = 0;
  for (int e = 0; e < m; ++e) {
    cum += w[e];
    if (target < cum) return e;
  }
  return m - 1;
}

}  // namespace detail

/// Which step sampler to use. `automatic` selects the uniform sampler when
/// alpha == 0 and the weighted sampler otherwise.
enum class Engine { automatic, uniform, weighted };

/// Core walker. Calls visit(k, id, unwrapped) for k = 0..n and returns the
/// number of self-neighbour (degenerate) steps.
template <class Visit>
std::uint64_t walk_path(const NeighborTable& t, const TransitionRule& rule, std::uint64_t n, std::uint64_t seed,
                        Visit&& visit, Engine engine = Engine::automatic) {
  std::int64_t origin = t.id(0);
  require(origin >= 0, errc::invalid_argument, "walk requires an occupied origin");
  const int m = t.dirs();
  const bool uniform = engine == Engine::uniform || (engine == Engine::automatic && rule.alpha == 0.0);
  CounterRng rng(seed);
  std::array<std::int64_t, kMaxDim> x{};
  auto id = static_cast<std::size_t>(origin);
  std::array<double, 2 * kMaxDim> w{};
  std::uint64_t degenerate = 0;
  visit(std::uint64_t{0}, id, static_cast<const std::int64_t*>(x.data()));
  for (std::uint64_t k = 1; k <= n; ++k) {
    double u = rng.uniform();
    int e;
    if (uniform) {
      e = detail::pick_uniform(u, m);
    } else {
      for (int j = 0; j < m; ++j) w[j] = std::pow(static_cast<double>(t.gap(id, j)), rule.alpha);
      e = detail::pick_weighted(u, w.data(), m);
    }
    std::uint32_t g = t.gap(id, e);
    std::size_t next = t.neighbor(id, e);
    if (next == id) ++degenerate;
    x[static_cast<std::size_t>(axis_of(e))] += sign_of(e) * static_cast<std::int64_t>(g);
    id = next;
    visit(k, id, static_cast<const std::int64_t*>(x.data()));
  }
  return degenerate;
}

struct Trajectory {
  int dim = 0;
  std::uint64_t seed = 0;
  TransitionRule rule;
  std::vector<std::uint64_t> sites;     // torus site index of X_k
  std::vector<std::int64_t> unwrapped;  // (n+1) x d lifted coordinates
  std::uint64_t degenerate_steps = 0;
  bool window_limited = false;

  std::size_t length() const { return sites.size(); }
  std::uint64_t horizon() const { return sites.empty() ? 0 : sites.size() - 1; }

  Point lifted(std::size_t k) const {
    return Point(unwrapped.begin() + static_cast<std::ptrdiff_t>(k * dim),
                 unwrapped.begin() + static_cast<std::ptrdiff_t>((k + 1) * dim));
  }
};

inline Trajectory run_quenched(const NeighborTable& t, const TransitionRule& rule, std::uint64_t n,
                               std::uint64_t seed, Engine engine = Engine::automatic) {
  Trajectory tr;
  tr.dim = t.dim();
  tr.seed = seed;
  tr.rule = rule;
  tr.sites.reserve(n + 1);
  tr.unwrapped.reserve((n + 1) * static_cast<std::size_t>(tr.dim));
  const auto& w = t.window();
  tr.degenerate_steps = walk_path(
      t, rule, n, seed,
      [&](std::uint64_t, std::size_t id, const std::int64_t* x) {
        tr.sites.push_back(t.site(id));
        for (int i = 0; i < tr.dim; ++i) {
          tr.unwrapped.push_back(x[i]);
          if (2 * std::abs(x[i]) > static_cast<std::int64_t>(w.side(i))) tr.window_limited = true;
        }
      },
      engine);
  return tr;
}

inline Trajectory run_quenched(const Environment& env, const TransitionRule& rule, std::uint64_t n,
                               std::uint64_t seed, Engine engine = Engine::automatic) {
  NeighborTable t(env);
  return run_quenched(t, rule, n, seed, engine);
}

// ---------------------------------------------------------------------------
// Ensembles

enum class WalkMode { quenched, annealed };

struct WalkSummary {
  std::uint64_t index = 0;
  std::uint64_t seed = 0;
  std::vector<std::int64_t> final_position;
  double max_displacement = 0;  // max_k |X_k|_2
  std::uint64_t returns = 0;    // k >= 1 with lifted X_k = 0
  std::uint64_t degenerate_steps = 0;
  bool window_limited = false;
  std::string error;

  bool ok() const { return error.empty(); }
};

struct WalkEnsemble {
  WalkMode mode = WalkMode::quenched;
  std::uint64_t count = 0;
  std::uint64_t horizon = 0;
  std::uint64_t master_seed = 0;
  TransitionRule rule;
  int dim = 0;
  std::vector<WalkSummary> walks;
};

inline std::uint64_t walk_seed(std::uint64_t master, std::uint64_t index) { return derive_key(master, index); }
inline std::uint64_t annealed_env_seed(std::uint64_t walk_seed) { return derive_key(walk_seed, 0x656e76); }
inline std::uint64_t annealed_path_seed(std::uint64_t walk_seed) { return derive_key(walk_seed, 0x77616c6b); }

inline WalkSummary summarize_walk(const NeighborTable& t, const TransitionRule& rule, std::uint64_t n,
                                  std::uint64_t seed, Engine engine = Engine::automatic) {
  WalkSummary s;
  s.seed = seed;
  const int d = t.dim();
  const auto& w = t.window();
  double max2 = 0;
  std::vector<std::int64_t> last(static_cast<std::size_t>(d), 0);
  s.degenerate_steps = walk_path(
      t, rule, n, seed,
      [&](std::uint64_t k, std::size_t, const std::int64_t* x) {
        double r2 = 0;
        bool zero = true;
        for (int i = 0; i < d; ++i) {
          r2 += static_cast<double>(x[i]) * static_cast<double>(x[i]);
          if (x[i] != 0) zero = false;
          if (2 * std::abs(x[i]) > static_cast<std::int64_t>(w.side(i))) s.window_limited = true;
        }
        if (k > 0 && zero) ++s.returns;
        if (r2 > max2) max2 = r2;
        if (k == n) last.assign(x, x + d);
      },
      engine);
  s.final_position = last;
  s.max_displacement = std::sqrt(max2);
  return s;
}

inline WalkEnsemble run_quenched_ensemble(const Environment& env, const TransitionRule& rule, std::uint64_t horizon,
                                          std::uint64_t walkers, std::uint64_t master_seed) {
  require(walkers >= 1, errc::invalid_argument, "walkers must be >= 1");
  NeighborTable t(env);
  WalkEnsemble ens{WalkMode::quenched, walkers, horizon, master_seed, rule, env.dim(), {}};
  ens.walks.resize(walkers);
  parallel_for(walkers, [&](std::size_t i) {
    std::uint64_t s = walk_seed(master_seed, i);
    try {
      ens.walks[i] = summarize_walk(t, rule, horizon, s);
    } catch (const error& e) {
      ens.walks[i].seed = s;
      ens.walks[i].error = e.what();
    }
    ens.walks[i].index = i;
  });
  return ens;
}

/// Fresh origin-conditioned environment per walk; sampling failures are
/// recorded per walk.
inline WalkEnsemble run_annealed(const ProcessSpec& spec, const LatticeWindow& window, const TransitionRule& rule,
                                 std::uint64_t horizon, std::uint64_t walkers, std::uint64_t master_seed,
                                 const SampleOptions& opts = {}) {
  require(walkers >= 1, errc::invalid_argument, "walkers must be >= 1");
  check_spec(spec, window);
  WalkEnsemble ens{WalkMode::annealed, walkers, horizon, master_seed, rule, window.dim(), {}};
  ens.walks.resize(walkers);
  parallel_for(walkers, [&](std::size_t i) {
    std::uint64_t s = walk_seed(master_seed, i);
    try {
      Environment env = sample(spec, window, annealed_env_seed(s), true, opts);
      NeighborTable t(env);
      ens.walks[i] = summarize_walk(t, rule, horizon, annealed_path_seed(s));
    } catch (const error& e) {
      ens.walks[i].error = e.what();
    }
    ens.walks[i].seed = s;
    ens.walks[i].index = i;
  });
  return ens;
}

inline void write_summary_csv(std::ostream& os, const WalkEnsemble& ens) {
  os << "index,seed";
  for (int i = 0; i < ens.dim; ++i) os << ",x" << i;
  os << ",max_displacement,returns,degenerate_steps,window_limited,error\n";
  auto flags = os.flags();
  for (const auto& w : ens.walks) {
    os << w.index << ',' << w.seed;
    for (int i = 0; i < ens.dim; ++i) {
      os << ',';
      if (w.ok()) os << w.final_position[static_cast<std::size_t>(i)];
    }
    os << ',' << std::fixed << std::setprecision(6) << w.max_displacement;
    os.flags(flags);
    os << ',' << w.returns << ',' << w.degenerate_steps << ',' << (w.window_limited ? 1 : 0) << ',';
    std::string e = w.error;
    for (auto& c : e)
      if (c == ',' || c == '\n') c = ' ';
    os << e << '\n';
  }
}

// ---------------------------------------------------------------------------
// One-dimensional coupling with the sign walk

/// Occupied positions of a 1-D environment read from the origin:
/// q_0 = 0 < q_1 < ... < q_{m-1} < L.
inline std::vector<std::int64_t> occupied_positions_1d(const Environment& env) {
  require(env.dim() == 1, errc::unsupported_dimension, "coupling requires d = 1");
  require(env.occupied(std::uint64_t{0}), errc::invalid_argument, "coupling requires an occupied origin");
  std::vector<std::int64_t> q;
  for (std::uint64_t i = 0; i < env.volume(); ++i)
    if (env.occupied(i)) q.push_back(static_cast<std::int64_t>(i));
  return q;
}

/// The n-th occupied point counted from the origin on the unwrapped line.
inline std::int64_t nth_point(const std::vector<std::int64_t>& q, std::int64_t side, std::int64_t n) {
  auto m = static_cast<std::int64_t>(q.size());
  std::int64_t r = LatticeWindow::wrap(n, m);
  std::int64_t wraps = (n - r) / m;
  return q[static_cast<std::size_t>(r)] + wraps * side;
}

struct CouplingCheck {
  std::vector<std::int64_t> signs;  // Y_0..Y_n
  std::uint64_t steps_checked = 0;
  std::uint64_t violations = 0;
};

inline CouplingCheck check_coupling(const Environment& env, const Trajectory& tr) {
  auto q = occupied_positions_1d(env);
  auto side = static_cast<std::int64_t>(env.window().side(0));
  CouplingCheck c;
  std::int64_t y = 0;
  c.signs.push_back(0);
  for (std::size_t k = 0; k < tr.length(); ++k) {
    if (k > 0) {
      std::int64_t dx = tr.unwrapped[k] - tr.unwrapped[k - 1];
      y += dx > 0 ? 1 : (dx < 0 ? -1 : 0);
      c.signs.push_back(y);
    }
    ++c.steps_checked;
    if (nth_point(q, side, y) != tr.unwrapped[k]) ++c.violations;
  }
  return c;
}

/// Sign walk Y_k of a 1-D trajectory. Throws identity_violation if the
/// lifted position ever differs from the Y_k-th occupied point.
inline std::vector<std::int64_t> coupled_sign_walk(const Environment& env, const Trajectory& tr) {
  auto c = check_coupling(env, tr);
  require(c.violations == 0, errc::identity_violation,
          "coupling identity failed at " + std::to_string(c.violations) + " step(s)");
  return c.signs;
}

}  // namespace dpp
