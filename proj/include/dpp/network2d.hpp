#pragma once

#include <Eigen/Dense>
#include <boost/rational.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <queue>
#include <string>
#include <vector>

#include "dpp/env.hpp"
#include "dpp/error.hpp"
#include "dpp/fit.hpp"
#include "dpp/rng.hpp"
#include "dpp/walk.hpp"

namespace dpp::network {

/// Nearest-neighbour edge of the unit-conductance network, oriented so that
/// plus = minus + length * e_axis (mod the side).
struct BaseEdge {
  std::uint64_t minus_site = 0;
  std::uint64_t plus_site = 0;
  int axis = 0;
  std::uint32_t length = 0;
};

/// layer 0 marks an identified occupied point; 1 and 2 are the per-axis copies.
struct Vertex {
  int layer = 0;
  std::uint64_t site = 0;
};

struct Edge {
  std::uint32_t u = 0;
  std::uint32_t v = 0;
  std::uint32_t conductance = 0;
  std::uint32_t origin = 0;  // index into base_edges
};

struct Network {
  LatticeWindow window;
  std::vector<BaseEdge> base_edges;
  std::vector<Vertex> vertices;
  std::vector<Edge> edges;
  std::int64_t origin_vertex = -1;

  std::uint64_t total_base_length() const {
    std::uint64_t s = 0;
    for (const auto& e : base_edges) s += e.length;
    return s;
  }
};

/// Build the subdivided, layer-separated, identified network of a 2-D
/// environment.
inline Network build_network(const Environment& env) {
  require(env.dim() == 2, errc::unsupported_dimension, "network construction needs d = 2");
  const auto& w = env.window();
  Network net;
  net.window = w;
  NeighborTable t(env);
  const std::uint64_t V = w.volume();
  std::vector<std::int64_t> vid(2 * V, -1);
  auto vertex_of = [&](int layer, std::uint64_t site) {
    std::uint64_t key = env.occupied(site) ? site : static_cast<std::uint64_t>(layer) * V + site;
    if (vid[key] < 0) {
      vid[key] = static_cast<std::int64_t>(net.vertices.size());
      net.vertices.push_back({env.occupied(site) ? 0 : layer + 1, site});
    }
    return static_cast<std::uint32_t>(vid[key]);
  };
  for (std::size_t id = 0; id < t.size(); ++id) {
    std::uint64_t x = t.site(id);
    for (int axis = 0; axis < 2; ++axis) {
      std::uint32_t g = t.gap(id, 2 * axis);
      auto origin = static_cast<std::uint32_t>(net.base_edges.size());
      net.base_edges.push_back({x, t.site(t.neighbor(id, 2 * axis)), axis, g});
      std::uint64_t a = x;
      for (std::uint32_t k = 0; k < g; ++k) {
        std::uint64_t b = w.step(a, axis, 1);
        net.edges.push_back({vertex_of(axis, a), vertex_of(axis, b), g, origin});
        a = b;
      }
    }
  }
  if (env.occupied(std::uint64_t{0})) net.origin_vertex = vid[0];
  return net;
}

inline void write_edges_csv(std::ostream& os, const Network& net) {
  os << "u_layer,u_x,u_y,v_layer,v_x,v_y,conductance\n";
  for (const auto& e : net.edges) {
    const auto& a = net.vertices[e.u];
    const auto& b = net.vertices[e.v];
    os << a.layer << ',' << net.window.coord(a.site, 0) << ',' << net.window.coord(a.site, 1) << ',' << b.layer << ','
       << net.window.coord(b.site, 0) << ',' << net.window.coord(b.site, 1) << ',' << e.conductance << '\n';
  }
}

// ---------------------------------------------------------------------------
// Subdivision consistency

struct SubdivisionCheck {
  std::uint64_t base_edges = 0;
  std::uint64_t consistent = 0;
};

/// For every base edge, the series conductance of its unit pieces, in exact
/// rational arithmetic, must be 1 and the pieces must form a path from e- to e+.
inline SubdivisionCheck check_subdivision(const Network& net) {
  using Q = boost::rational<std::int64_t>;
  std::vector<Q> resistance(net.base_edges.size(), Q(0));
  std::vector<std::vector<const Edge*>> pieces(net.base_edges.size());
  for (const auto& e : net.edges) {
    resistance[e.origin] += Q(1, e.conductance);
    pieces[e.origin].push_back(&e);
  }
  SubdivisionCheck c;
  c.base_edges = net.base_edges.size();
  for (std::size_t i = 0; i < net.base_edges.size(); ++i) {
    const auto& be = net.base_edges[i];
    bool ok = resistance[i] == Q(1) && pieces[i].size() == be.length;
    std::uint64_t at = be.minus_site;
    for (const Edge* e : pieces[i]) {
      ok = ok && net.vertices[e->u].site == at && e->conductance == be.length;
      at = net.vertices[e->v].site;
    }
    ok = ok && at == be.plus_site;
    if (ok) ++c.consistent;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Cutsets

struct CutsetLevel {
  std::uint32_t n = 0;
  std::vector<std::uint32_t> edges;  // indices into Network::edges
  double conductance = 0;            // C_{Pi_n}
  double nash_williams = 0;          // sum_{m <= n} 1 / C_{Pi_m}
};

struct CutsetReport {
  std::vector<CutsetLevel> levels;
  double log_slope = 0;  // least-squares slope of the partial sums against log n
};

inline std::int64_t box_radius(const LatticeWindow& w, std::uint64_t site) {
  std::int64_t r = 0;
  for (int i = 0; i < w.dim(); ++i) r = std::max(r, std::abs(LatticeWindow::centered(w.coord(site, i), w.side(i))));
  return r;
}

/// Pi_n = edges with exactly one endpoint in the box [-n, n]^2, for 1 <= n <= n_max.
inline CutsetReport cutsets(const Network& net, std::uint32_t n_max) {
  const auto& w = net.window;
  require(2 * static_cast<std::uint64_t>(n_max) + 2 <= w.min_side(), errc::window_limit,
          "cutset radius " + std::to_string(n_max) + " reaches the torus seam");
  CutsetReport rep;
  rep.levels.resize(n_max);
  for (std::uint32_t n = 1; n <= n_max; ++n) rep.levels[n - 1].n = n;
  for (std::uint32_t i = 0; i < net.edges.size(); ++i) {
    const auto& e = net.edges[i];
    std::int64_t ra = box_radius(w, net.vertices[e.u].site);
    std::int64_t rb = box_radius(w, net.vertices[e.v].site);
    if (ra == rb) continue;
    std::int64_t n = std::min(ra, rb);
    if (n >= 1 && n <= static_cast<std::int64_t>(n_max)) {
      auto& lvl = rep.levels[static_cast<std::size_t>(n - 1)];
      lvl.edges.push_back(i);
      lvl.conductance += e.conductance;
    }
  }
  double s = 0;
  std::vector<double> lx, ly;
  for (auto& lvl : rep.levels) {
    if (lvl.conductance > 0) s += 1.0 / lvl.conductance;
    lvl.nash_williams = s;
    lx.push_back(std::log(static_cast<double>(lvl.n)));
    ly.push_back(s);
  }
  if (lx.size() >= 2) rep.log_slope = ls_slope(lx, ly);
  return rep;
}

/// Every vertex reachable from the origin without crossing Pi_n lies in the box.
inline bool separates(const Network& net, const CutsetLevel& lvl) {
  require(net.origin_vertex >= 0, errc::invalid_argument, "network has no origin vertex");
  std::vector<char> cut(net.edges.size(), 0);
  for (auto i : lvl.edges) cut[i] = 1;
  std::vector<std::vector<std::uint32_t>> adj(net.vertices.size());
  for (std::uint32_t i = 0; i < net.edges.size(); ++i) {
    if (cut[i]) continue;
    adj[net.edges[i].u].push_back(net.edges[i].v);
    adj[net.edges[i].v].push_back(net.edges[i].u);
  }
  std::vector<char> seen(net.vertices.size(), 0);
  std::queue<std::uint32_t> q;
  q.push(static_cast<std::uint32_t>(net.origin_vertex));
  seen[static_cast<std::size_t>(net.origin_vertex)] = 1;
  while (!q.empty()) {
    auto u = q.front();
    q.pop();
    if (box_radius(net.window, net.vertices[u].site) > static_cast<std::int64_t>(lvl.n)) return false;
    for (auto v : adj[u])
      if (!seen[v]) {
        seen[v] = 1;
        q.push(v);
      }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Conductance law

/// Probability mass function on {1, 2, ...}; pmf[k] = P(X = k), pmf[0] = 0.
using Pmf = std::vector<double>;

inline Pmf bernoulli_gap_law(double p, std::size_t k_max) {
  Pmf f(k_max + 1, 0.0);
  for (std::size_t k = 1; k <= k_max; ++k) f[k] = p * std::pow(1 - p, static_cast<double>(k - 1));
  return f;
}

inline double mean(const Pmf& f) {
  double m = 0;
  for (std::size_t k = 1; k < f.size(); ++k) m += static_cast<double>(k) * f[k];
  return m;
}

/// k P(f = k) / E[f].
inline Pmf size_biased(const Pmf& f) {
  double m = mean(f);
  Pmf c(f.size(), 0.0);
  for (std::size_t k = 1; k < f.size(); ++k) c[k] = static_cast<double>(k) * f[k] / m;
  return c;
}

inline double total_variation(const Pmf& a, const Pmf& b) {
  double s = 0;
  for (std::size_t k = 0; k < std::max(a.size(), b.size()); ++k) {
    double x = k < a.size() ? a[k] : 0.0;
    double y = k < b.size() ? b[k] : 0.0;
    s += std::abs(x - y);
  }
  return 0.5 * s;
}

/// Empirical law of f_{e_axis} from every occupied site of `envs` samples.
inline Pmf empirical_gap_law(const ProcessSpec& spec, const LatticeWindow& window, int axis, std::uint64_t envs,
                             std::uint64_t seed) {
  std::vector<double> counts(window.side(axis) + 1, 0.0);
  double total = 0;
  for (std::uint64_t s = 0; s < envs; ++s) {
    auto env = sample(spec, window, derive_key(seed, s), false);
    NeighborTable t(env);
    for (std::size_t id = 0; id < t.size(); ++id) {
      counts[t.gap(id, 2 * axis)] += 1;
      total += 1;
    }
  }
  require(total > 0, errc::validation_failed, "no occupied sites to estimate the gap law");
  for (auto& c : counts) c /= total;
  return counts;
}

struct ConductanceLaw {
  Pmf empirical;
  Pmf theoretical;
  double tv = 0;
  std::uint64_t samples = 0;
};

/// Conductances of uniformly chosen unit edges of the network built on one
/// unconditioned environment, against k P(f = k) / E[f]. The gap law is
/// analytic for Bernoulli and estimated from `law_envs` draws otherwise.
inline ConductanceLaw conductance_law(const ProcessSpec& spec, const LatticeWindow& window, std::uint64_t samples,
                                      std::uint64_t seed, std::uint64_t law_envs = 8) {
  require(window.dim() == 2, errc::unsupported_dimension, "conductance law needs d = 2");
  auto env = sample(spec, window, derive_key(seed, 0), false);
  NeighborTable t(env);
  // Conductance of the unit edge {x, x + e_axis} is the length of the base edge
  // covering it: distance from the previous occupied site to the next one.
  std::uint32_t k_cap = std::max(window.side(0), window.side(1));
  ConductanceLaw out;
  out.samples = samples;
  out.empirical.assign(k_cap + 1, 0.0);
  CounterRng rng(derive_key(seed, 1));
  for (std::uint64_t s = 0; s < samples; ++s) {
    int axis = static_cast<int>(rng.below(2));
    std::uint64_t x = rng.below(window.volume());
    std::uint32_t back = 0;
    while (back < window.side(axis) && !env.occupied(window.step(x, axis, -static_cast<std::int64_t>(back)))) ++back;
    require(back < window.side(axis), errc::validation_failed, "empty line in conductance sampling");
    std::uint64_t left = window.step(x, axis, -static_cast<std::int64_t>(back));
    std::uint32_t len = t.gap(static_cast<std::size_t>(t.id(left)), 2 * axis);
    out.empirical[len] += 1.0;
  }
  for (auto& v : out.empirical) v /= static_cast<double>(samples);
  Pmf laws[2];
  if (auto* b = std::get_if<Bernoulli>(&spec)) {
    laws[0] = laws[1] = bernoulli_gap_law(b->p, k_cap);
  } else {
    for (int axis = 0; axis < 2; ++axis) laws[axis] = empirical_gap_law(spec, window, axis, law_envs, derive_key(seed, 2));
  }
  out.theoretical.assign(k_cap + 1, 0.0);
  for (int axis = 0; axis < 2; ++axis) {
    auto c = size_biased(laws[axis]);
    for (std::size_t k = 1; k < c.size() && k <= k_cap; ++k) out.theoretical[k] += 0.5 * c[k];
  }
  out.tv = total_variation(out.empirical, out.theoretical);
  return out;
}

// ---------------------------------------------------------------------------
// Tail condition

struct CauchyTail {
  double C = 0;      // sup_N N * sum_{k >= N} k P(f = k) over the observed range
  double slope = 0;  // log-log slope of N * T(N) over the lower half
  double lower_max = 0;
  double upper_max = 0;
  bool holds = false;
};

/// Checks sum_{k >= N} k P(f = k) <= C / N by comparing the maximum of
/// N * T(N) over the upper and lower halves (log scale) of the support.
inline CauchyTail cauchy_tail_check(const Pmf& f, double factor = 1.05) {
  std::size_t n_max = 0;
  for (std::size_t k = 1; k < f.size(); ++k)
    if (f[k] > 0) n_max = k;
  CauchyTail r;
  if (n_max <= 1) {
    r.holds = true;
    return r;
  }
  std::vector<double> tail(n_max + 2, 0.0);
  for (std::size_t k = n_max; k >= 1; --k) tail[k] = tail[k + 1] + static_cast<double>(k) * f[k];
  double split = std::sqrt(static_cast<double>(n_max));
  std::vector<double> lx, ly;
  for (std::size_t n = 1; n <= n_max; ++n) {
    double c = static_cast<double>(n) * tail[n];
    r.C = std::max(r.C, c);
    if (static_cast<double>(n) < split) r.lower_max = std::max(r.lower_max, c);
    else r.upper_max = std::max(r.upper_max, c);
    if (c > 0 && static_cast<double>(n) < split) {
      lx.push_back(std::log(static_cast<double>(n)));
      ly.push_back(std::log(c));
    }
  }
  if (lx.size() >= 2) r.slope = ls_slope(lx, ly);
  r.holds = r.upper_max <= factor * r.lower_max;
  return r;
}

// ---------------------------------------------------------------------------
// Hitting probabilities (small instances)

/// Harmonic function h with h(a) = 1, h(b) = 0 for conductances given as
/// (u, v, c) triples over n vertices.
inline Eigen::VectorXd harmonic_between(std::size_t n, const std::vector<std::tuple<std::size_t, std::size_t, double>>& edges,
                                        std::size_t a, std::size_t b) {
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (auto [u, v, c] : edges) {
    if (u == v) continue;
    L(u, u) += c;
    L(v, v) += c;
    L(u, v) -= c;
    L(v, u) -= c;
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t fixed : {a, b}) {
    L.row(static_cast<Eigen::Index>(fixed)).setZero();
    L(fixed, fixed) = 1;
  }
  rhs(static_cast<Eigen::Index>(a)) = 1;
  return L.fullPivLu().solve(rhs);
}

/// P_x(hit a before b) for the unit-conductance network on occupied sites,
/// indexed by NeighborTable id.
inline Eigen::VectorXd hitting_base(const Environment& env, std::uint64_t a_site, std::uint64_t b_site) {
  NeighborTable t(env);
  std::vector<std::tuple<std::size_t, std::size_t, double>> edges;
  for (std::size_t id = 0; id < t.size(); ++id)
    for (int axis = 0; axis < env.dim(); ++axis) edges.emplace_back(id, t.neighbor(id, 2 * axis), 1.0);
  return harmonic_between(t.size(), edges, static_cast<std::size_t>(t.id(a_site)),
                          static_cast<std::size_t>(t.id(b_site)));
}

/// Same quantity on the subdivided network, restricted to occupied sites.
inline Eigen::VectorXd hitting_subdivided(const Environment& env, const Network& net, std::uint64_t a_site,
                                          std::uint64_t b_site) {
  NeighborTable t(env);
  std::vector<std::tuple<std::size_t, std::size_t, double>> edges;
  std::vector<std::int64_t> vertex_of_site(env.volume(), -1);
  for (std::size_t i = 0; i < net.vertices.size(); ++i)
    if (net.vertices[i].layer == 0) vertex_of_site[net.vertices[i].site] = static_cast<std::int64_t>(i);
  for (const auto& e : net.edges) edges.emplace_back(e.u, e.v, static_cast<double>(e.conductance));
  auto h = harmonic_between(net.vertices.size(), edges, static_cast<std::size_t>(vertex_of_site[a_site]),
                            static_cast<std::size_t>(vertex_of_site[b_site]));
  Eigen::VectorXd out(static_cast<Eigen::Index>(t.size()));
  for (std::size_t id = 0; id < t.size(); ++id)
    out(static_cast<Eigen::Index>(id)) = h(vertex_of_site[t.site(id)]);
  return out;
}

/// Same quantity for the walk's transition matrix.
inline Eigen::VectorXd hitting_walk(const Environment& env, std::uint64_t a_site, std::uint64_t b_site) {
  NeighborTable t(env);
  const auto n = static_cast<Eigen::Index>(t.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  auto a = t.id(a_site), b = t.id(b_site);
  std::vector<double> p(static_cast<std::size_t>(t.dirs()));
  for (std::size_t id = 0; id < t.size(); ++id) {
    auto i = static_cast<Eigen::Index>(id);
    if (i == a) {
      rhs(i) = 1;
      continue;
    }
    if (i == b) continue;
    step_weights(t, id, 0.0, p.data());
    for (int e = 0; e < t.dirs(); ++e) A(i, t.neighbor(id, e)) -= p[static_cast<std::size_t>(e)];
  }
  return A.fullPivLu().solve(rhs);
}

}  // namespace dpp::network
