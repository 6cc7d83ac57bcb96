#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "dpp/error.hpp"
#include "dpp/lattice.hpp"
#include "dpp/rng.hpp"

namespace dpp {

struct Bernoulli {
  double p = 0.5;
  bool operator==(const Bernoulli&) const = default;
};

struct DeletedBalls {
  std::vector<double> radii;
  std::vector<double> probs;
  bool operator==(const DeletedBalls&) const = default;
};

struct PercolationCluster {
  double p = 0.6;
  bool operator==(const PercolationCluster&) const = default;
};

struct Explicit {
  std::vector<Point> sites;
  bool operator==(const Explicit&) const = default;
};

using ProcessSpec = std::variant<Bernoulli, DeletedBalls, PercolationCluster, Explicit>;

inline std::string spec_kind(const ProcessSpec& spec) {
  switch (spec.index()) {
    case 0: return "bernoulli";
    case 1: return "deleted_balls";
    case 2: return "percolation_cluster";
    default: return "explicit";
  }
}

/// Short human-readable token identifying a spec, e.g. "bernoulli:p=0.5".
inline std::string spec_token(const ProcessSpec& spec) {
  std::ostringstream os;
  os.precision(17);
  os << spec_kind(spec);
  if (auto* b = std::get_if<Bernoulli>(&spec)) os << ":p=" << b->p;
  if (auto* c = std::get_if<PercolationCluster>(&spec)) os << ":p=" << c->p;
  if (auto* db = std::get_if<DeletedBalls>(&spec)) os << ":m=" << db->radii.size();
  if (auto* e = std::get_if<Explicit>(&spec)) os << ":n=" << e->sites.size();
  return os.str();
}

/// Number of lattice points x with |x|_2 <= r.
inline std::uint64_t ball_volume(int d, double r) {
  if (r < 0) return 0;
  auto R = static_cast<std::int64_t>(std::floor(r));
  std::vector<std::int64_t> x(static_cast<std::size_t>(d), -R);
  std::uint64_t count = 0;
  for (;;) {
    double n2 = 0;
    for (auto c : x) n2 += static_cast<double>(c * c);
    if (n2 <= r * r) ++count;
    int i = 0;
    while (i < d && ++x[i] > R) x[i++] = -R;
    if (i == d) break;
  }
  return count;
}

struct SpecCheck {
  std::vector<std::string> warnings;
};

/// Check a spec against a window. Throws on invalid parameters; returns
/// non-fatal warnings (e.g. expected deleted volume exceeding the window).
inline SpecCheck check_spec(const ProcessSpec& spec, const LatticeWindow& window) {
  SpecCheck out;
  if (auto* b = std::get_if<Bernoulli>(&spec)) {
    require(b->p > 0.0 && b->p <= 1.0, errc::invalid_argument, "bernoulli p must lie in (0, 1]");
  } else if (auto* db = std::get_if<DeletedBalls>(&spec)) {
    require(db->radii.size() == db->probs.size(), errc::invalid_argument,
            "deleted_balls radii and probs must have equal length");
    double expected = 0;
    for (std::size_t n = 0; n < db->radii.size(); ++n) {
      require(db->radii[n] >= 0, errc::invalid_argument, "deleted_balls radius must be >= 0");
      require(db->probs[n] >= 0 && db->probs[n] < 1, errc::invalid_argument,
              "deleted_balls probs must lie in [0, 1)");
      expected += db->probs[n] * static_cast<double>(ball_volume(window.dim(), db->radii[n]));
    }
    if (expected >= 1.0) {
      out.warnings.push_back("expected deleted volume per site is " + std::to_string(expected) +
                             " >= 1; the window will be nearly empty");
    }
  } else if (auto* c = std::get_if<PercolationCluster>(&spec)) {
    require(c->p > 0.0 && c->p <= 1.0, errc::invalid_argument, "percolation p must lie in (0, 1]");
  } else if (auto* e = std::get_if<Explicit>(&spec)) {
    for (const auto& s : e->sites) {
      require(static_cast<int>(s.size()) == window.dim(), errc::invalid_argument,
              "explicit site dimension mismatch");
    }
  }
  return out;
}

class Environment {
 public:
  Environment() = default;

  Environment(LatticeWindow window, std::vector<std::uint8_t> occupancy, bool origin_conditioned = false,
              std::uint64_t seed = 0, std::string spec_id = "explicit")
      : window_(std::move(window)),
        occ_(std::move(occupancy)),
        origin_conditioned_(origin_conditioned),
        seed_(seed),
        spec_id_(std::move(spec_id)) {
    require(occ_.size() == window_.volume(), errc::invalid_argument, "occupancy size mismatch");
    for (auto& b : occ_) b = b ? 1 : 0;
  }

  static Environment full(const LatticeWindow& window) {
    return Environment(window, std::vector<std::uint8_t>(window.volume(), 1), true, 0, "bernoulli:p=1");
  }

  static Environment from_sites(const LatticeWindow& window, const std::vector<Point>& sites) {
    std::vector<std::uint8_t> occ(window.volume(), 0);
    for (const auto& s : sites) occ[window.index(s)] = 1;
    return Environment(window, std::move(occ), false, 0, "explicit:n=" + std::to_string(sites.size()));
  }

  const LatticeWindow& window() const { return window_; }
  int dim() const { return window_.dim(); }
  std::uint64_t volume() const { return window_.volume(); }
  const std::vector<std::uint8_t>& occupancy() const { return occ_; }

  bool occupied(std::uint64_t idx) const { return occ_[idx] != 0; }
  bool occupied(const Point& p) const { return occ_[window_.index(p)] != 0; }

  std::uint64_t count() const { return static_cast<std::uint64_t>(std::count(occ_.begin(), occ_.end(), 1)); }

  bool origin_conditioned() const { return origin_conditioned_; }
  bool strict_validated() const { return strict_; }
  std::uint64_t seed() const { return seed_; }
  const std::string& spec_id() const { return spec_id_; }

  void set_strict_validated(bool v) { strict_ = v; }
  void set_origin_conditioned(bool v) { origin_conditioned_ = v; }
  void set_seed(std::uint64_t s) { seed_ = s; }
  void set_spec_id(std::string s) { spec_id_ = std::move(s); }

  std::vector<std::uint64_t> occupied_indices() const {
    std::vector<std::uint64_t> out;
    for (std::uint64_t i = 0; i < occ_.size(); ++i)
      if (occ_[i]) out.push_back(i);
    return out;
  }

  bool operator==(const Environment& o) const {
    return window_ == o.window_ && occ_ == o.occ_ && origin_conditioned_ == o.origin_conditioned_ &&
           strict_ == o.strict_ && seed_ == o.seed_;
  }

 private:
  LatticeWindow window_;
  std::vector<std::uint8_t> occ_;
  bool origin_conditioned_ = false;
  bool strict_ = false;
  std::uint64_t seed_ = 0;
  std::string spec_id_;
};

// ---------------------------------------------------------------------------
// Gaps and neighbours

/// Least k > 0 with v + k*e occupied (torus arithmetic). A line whose only
/// occupant is v yields the side length (self-neighbour).
inline std::uint32_t gap(const Environment& env, std::uint64_t v, int dir) {
  require(env.occupied(v), errc::invalid_argument, "gap requested at an unoccupied site");
  const auto& w = env.window();
  int axis = axis_of(dir);
  std::int64_t s = sign_of(dir);
  std::uint32_t l = w.side(axis);
  for (std::uint32_t k = 1; k < l; ++k) {
    if (env.occupied(w.step(v, axis, s * static_cast<std::int64_t>(k)))) return k;
  }
  return l;
}

inline std::uint32_t gap(const Environment& env, const Point& v, int dir) {
  return gap(env, env.window().index(v), dir);
}

struct Neighbor {
  Point point;
  int dir;
};

/// The 2d coordinate nearest neighbours of v, one per direction.
inline std::vector<Neighbor> neighbors(const Environment& env, const Point& v) {
  const auto& w = env.window();
  std::uint64_t vi = w.index(v);
  std::vector<Neighbor> out;
  for (int dir = 0; dir < 2 * w.dim(); ++dir) {
    std::uint32_t k = gap(env, vi, dir);
    out.push_back({w.point(w.step(vi, axis_of(dir), sign_of(dir) * static_cast<std::int64_t>(k))), dir});
  }
  return out;
}

/// theta_x: the returned environment has occupancy y -> omega(x + y).
inline Environment shift(const Environment& env, const Point& x) {
  const auto& w = env.window();
  std::vector<std::uint8_t> occ(w.volume());
  std::uint64_t xi = w.index(x);
  Point xs = w.point(xi);
  for (std::uint64_t y = 0; y < w.volume(); ++y) {
    std::uint64_t t = y;
    for (int i = 0; i < w.dim(); ++i) t = w.step(t, i, xs[i]);
    occ[y] = env.occupancy()[t];
  }
  Environment out(w, std::move(occ), env.origin_conditioned() && env.occupied(xi), env.seed(), env.spec_id());
  out.set_strict_validated(env.strict_validated());
  return out;
}

/// Precomputed neighbour structure over occupied sites (dense ids).
class NeighborTable {
 public:
  explicit NeighborTable(const Environment& env) : window_(env.window()) {
    const auto& w = window_;
    int d = w.dim();
    dirs_ = 2 * d;
    id_of_site_.assign(w.volume(), -1);
    for (std::uint64_t i = 0; i < w.volume(); ++i) {
      if (env.occupied(i)) {
        id_of_site_[i] = static_cast<std::int64_t>(site_of_id_.size());
        site_of_id_.push_back(i);
      }
    }
    std::size_t n = site_of_id_.size();
    nbr_.assign(n * dirs_, 0);
    gap_.assign(n * dirs_, 0);
    std::vector<std::uint64_t> line;
    for (int axis = 0; axis < d; ++axis) {
      std::uint32_t l = w.side(axis);
      std::uint64_t st = w.stride(axis);
      for (std::uint64_t base = 0; base < w.volume(); ++base) {
        if (w.coord(base, axis) != 0) continue;
        line.clear();
        for (std::uint32_t c = 0; c < l; ++c) {
          std::uint64_t idx = base + c * st;
          if (env.occupied(idx)) line.push_back(c);
        }
        if (line.empty()) continue;
        if (line.size() == 1) ++degenerate_lines_;
        for (std::size_t j = 0; j < line.size(); ++j) {
          std::size_t jn = (j + 1) % line.size();
          std::uint64_t a = base + line[j] * st;
          std::uint64_t b = base + line[jn] * st;
          std::uint32_t g = static_cast<std::uint32_t>(
              line.size() == 1 ? l : (line[jn] + l - line[j]) % l);
          auto ia = static_cast<std::size_t>(id_of_site_[a]);
          auto ib = static_cast<std::size_t>(id_of_site_[b]);
          nbr_[ia * dirs_ + 2 * axis] = static_cast<std::uint32_t>(ib);
          gap_[ia * dirs_ + 2 * axis] = g;
          nbr_[ib * dirs_ + 2 * axis + 1] = static_cast<std::uint32_t>(ia);
          gap_[ib * dirs_ + 2 * axis + 1] = g;
        }
      }
    }
  }

  const LatticeWindow& window() const { return window_; }
  int dim() const { return window_.dim(); }
  int dirs() const { return dirs_; }
  std::size_t size() const { return site_of_id_.size(); }

  std::int64_t id(std::uint64_t site) const { return id_of_site_[site]; }
  std::uint64_t site(std::size_t id) const { return site_of_id_[id]; }
  std::uint32_t neighbor(std::size_t id, int dir) const { return nbr_[id * dirs_ + dir]; }
  std::uint32_t gap(std::size_t id, int dir) const { return gap_[id * dirs_ + dir]; }

  std::uint64_t degenerate_lines() const { return degenerate_lines_; }

 private:
  LatticeWindow window_;
  int dirs_ = 0;
  std::vector<std::int64_t> id_of_site_;
  std::vector<std::uint64_t> site_of_id_;
  std::vector<std::uint32_t> nbr_;
  std::vector<std::uint32_t> gap_;
  std::uint64_t degenerate_lines_ = 0;
};

// ---------------------------------------------------------------------------
// Validation

struct ValidationReport {
  bool empty = false;
  std::uint64_t occupied = 0;
  std::uint64_t degenerate_lines = 0;  // lines with exactly one occupant
  bool origin_occupied = false;
  std::vector<std::string> warnings;

  bool strict_ok() const { return !empty && degenerate_lines == 0; }
};

inline ValidationReport validate(const Environment& env) {
  ValidationReport r;
  r.occupied = env.count();
  r.empty = r.occupied == 0;
  r.origin_occupied = env.occupied(std::uint64_t{0});
  if (!r.empty) {
    NeighborTable table(env);
    r.degenerate_lines = table.degenerate_lines();
  }
  if (r.empty) r.warnings.push_back("environment has no occupied sites");
  if (r.degenerate_lines) {
    r.warnings.push_back(std::to_string(r.degenerate_lines) +
                         " axis line(s) with a single occupant (self-neighbour gaps)");
  }
  if (env.origin_conditioned() && !r.origin_occupied) r.warnings.push_back("origin flagged conditioned but empty");
  return r;
}

inline void require_strict(const Environment& env) {
  auto r = validate(env);
  require(!r.empty, errc::validation_failed, "environment is empty");
  require(r.degenerate_lines == 0, errc::validation_failed,
          std::to_string(r.degenerate_lines) + " axis line(s) have a single occupant");
}

// ---------------------------------------------------------------------------
// Sampling

namespace detail {

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n), size_(n, 1) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
  }

  std::size_t size_of(std::size_t x) { return size_[find(x)]; }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
};

inline std::vector<std::uint8_t> sample_bernoulli(const Bernoulli& b, const LatticeWindow& w, std::uint64_t key) {
  std::vector<std::uint8_t> occ(w.volume());
  for (std::uint64_t i = 0; i < w.volume(); ++i) occ[i] = uniform_at(key, i) < b.p ? 1 : 0;
  return occ;
}

inline std::vector<std::uint8_t> sample_deleted_balls(const DeletedBalls& db, const LatticeWindow& w,
                                                      std::uint64_t key) {
  std::vector<std::uint8_t> occ(w.volume(), 1);
  int d = w.dim();
  std::size_t m = db.radii.size();
  std::vector<std::vector<Point>> balls(m);
  for (std::size_t n = 0; n < m; ++n) {
    double r = db.radii[n];
    auto R = static_cast<std::int64_t>(std::floor(r));
    Point x(static_cast<std::size_t>(d), -R);
    for (;;) {
      double n2 = 0;
      for (auto c : x) n2 += static_cast<double>(c * c);
      if (n2 <= r * r) balls[n].push_back(x);
      int i = 0;
      while (i < d && ++x[i] > R) x[i++] = -R;
      if (i == d) break;
    }
  }
  for (std::uint64_t v = 0; v < w.volume(); ++v) {
    for (std::size_t n = 0; n < m; ++n) {
      if (uniform_at(key, v * m + n) >= db.probs[n]) continue;
      for (const auto& off : balls[n]) {
        std::uint64_t t = v;
        for (int i = 0; i < d; ++i) t = w.step(t, i, off[i]);
        occ[t] = 0;
      }
    }
  }
  return occ;
}

inline std::vector<std::uint8_t> sample_percolation(const PercolationCluster& c, const LatticeWindow& w,
                                                    std::uint64_t key) {
  int d = w.dim();
  UnionFind uf(w.volume());
  for (std::uint64_t v = 0; v < w.volume(); ++v) {
    for (int axis = 0; axis < d; ++axis) {
      if (uniform_at(key, v * static_cast<std::uint64_t>(d) + axis) < c.p) uf.unite(v, w.step(v, axis, 1));
    }
  }
  std::size_t best_root = uf.find(0);
  std::size_t best_size = uf.size_of(0);
  for (std::uint64_t v = 1; v < w.volume(); ++v) {
    std::size_t s = uf.size_of(v);
    if (s > best_size) {
      best_size = s;
      best_root = uf.find(v);
    }
  }
  std::vector<std::uint8_t> occ(w.volume());
  for (std::uint64_t v = 0; v < w.volume(); ++v) occ[v] = uf.find(v) == best_root ? 1 : 0;
  return occ;
}

}  // namespace detail

enum class ValidationMode { lenient, strict };

struct SampleOptions {
  ValidationMode validation = ValidationMode::lenient;
  std::uint64_t rejection_budget = 1000000;
  std::uint64_t strict_retries = 100;
};

/// Draw one environment. Deterministic in (spec, window, seed, condition).
inline Environment sample(const ProcessSpec& spec, const LatticeWindow& window, std::uint64_t seed,
                          bool condition_on_origin, const SampleOptions& opts = {}) {
  check_spec(spec, window);
  const bool product = std::holds_alternative<Bernoulli>(spec);
  const bool strict = opts.validation == ValidationMode::strict;
  std::uint64_t rejections = 0;
  std::uint64_t strict_failures = 0;
  for (std::uint64_t attempt = 0;; ++attempt) {
    std::uint64_t key = derive_key(seed, attempt);
    std::vector<std::uint8_t> occ;
    if (auto* b = std::get_if<Bernoulli>(&spec)) {
      occ = detail::sample_bernoulli(*b, window, key);
    } else if (auto* db = std::get_if<DeletedBalls>(&spec)) {
      occ = detail::sample_deleted_balls(*db, window, key);
    } else if (auto* c = std::get_if<PercolationCluster>(&spec)) {
      occ = detail::sample_percolation(*c, window, key);
    } else {
      occ.assign(window.volume(), 0);
      for (const auto& s : std::get<Explicit>(spec).sites) occ[window.index(s)] = 1;
    }
    const bool is_explicit = std::holds_alternative<Explicit>(spec);
    if (condition_on_origin) {
      if (product) {
        occ[0] = 1;
      } else if (!occ[0]) {
        require(!is_explicit, errc::rejection_budget_exhausted, "explicit environment does not contain the origin");
        if (++rejections >= opts.rejection_budget) {
          fail(errc::rejection_budget_exhausted,
               "origin never occupied after " + std::to_string(rejections) + " draws");
        }
        continue;
      }
    }
    Environment env(window, std::move(occ), condition_on_origin, seed, spec_token(spec));
    if (strict) {
      auto r = validate(env);
      if (!r.strict_ok()) {
        if (is_explicit || ++strict_failures > opts.strict_retries) {
          fail(errc::validation_failed, "strict validation failed after " + std::to_string(strict_failures) +
                                            " draw(s): " + (r.empty ? "empty environment" :
                                            std::to_string(r.degenerate_lines) + " degenerate line(s)"));
        }
        continue;
      }
      env.set_strict_validated(true);
    }
    return env;
  }
}

}  // namespace dpp
