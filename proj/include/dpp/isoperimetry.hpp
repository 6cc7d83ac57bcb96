#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dpp/error.hpp"
#include "dpp/lattice.hpp"
#include "dpp/rng.hpp"

namespace dpp {

/// Finite set of points with positive integer coordinates, kept sorted.
class FiniteSet {
 public:
  FiniteSet() = default;
  FiniteSet(int dim, std::vector<Point> points) : dim_(dim), pts_(std::move(points)) {
    require(dim >= 0 && dim <= kMaxDim, errc::unsupported_dimension, "set dimension out of range");
    for (const auto& p : pts_) {
      require(static_cast<int>(p.size()) == dim, errc::invalid_argument, "point has wrong dimension");
      for (auto c : p) require(c >= 1, errc::invalid_argument, "set coordinates must be >= 1");
    }
    std::sort(pts_.begin(), pts_.end());
    pts_.erase(std::unique(pts_.begin(), pts_.end()), pts_.end());
  }

  int dim() const { return dim_; }
  std::size_t size() const { return pts_.size(); }
  bool empty() const { return pts_.empty(); }
  const std::vector<Point>& points() const { return pts_; }
  bool contains(const Point& p) const { return std::binary_search(pts_.begin(), pts_.end(), p); }

  bool operator==(const FiniteSet& o) const { return dim_ == o.dim_ && pts_ == o.pts_; }

 private:
  int dim_ = 0;
  std::vector<Point> pts_;
};

namespace detail {

inline Point drop_axis(const Point& x, int axis) {
  Point y;
  y.reserve(x.size() - 1);
  for (std::size_t i = 0; i < x.size(); ++i)
    if (static_cast<int>(i) != axis) y.push_back(x[i]);
  return y;
}

inline Point insert_axis(const Point& y, int axis, std::int64_t v) {
  Point x(y);
  x.insert(x.begin() + axis, v);
  return x;
}

inline void check_axis(const FiniteSet& a, int axis) {
  require(axis >= 0 && axis < a.dim(), errc::invalid_argument, "axis out of range");
}

}  // namespace detail

/// All but coordinate `axis` (0-based).
inline FiniteSet project(const FiniteSet& a, int axis) {
  detail::check_axis(a, axis);
  std::vector<Point> out;
  out.reserve(a.size());
  for (const auto& x : a.points()) out.push_back(detail::drop_axis(x, axis));
  return FiniteSet(a.dim() - 1, std::move(out));
}

inline std::int64_t energy(const FiniteSet& a) {
  std::int64_t e = 0;
  for (const auto& x : a.points())
    for (auto c : x) e += c;
  return e;
}

/// Fiber sizes along `axis`, keyed by the projected point, sorted by key.
inline std::vector<std::pair<Point, std::size_t>> fibers(const FiniteSet& a, int axis) {
  detail::check_axis(a, axis);
  std::vector<Point> ys;
  ys.reserve(a.size());
  for (const auto& x : a.points()) ys.push_back(detail::drop_axis(x, axis));
  std::sort(ys.begin(), ys.end());
  std::vector<std::pair<Point, std::size_t>> out;
  for (const auto& y : ys) {
    if (!out.empty() && out.back().first == y)
      ++out.back().second;
    else
      out.emplace_back(y, 1);
  }
  return out;
}

inline FiniteSet squeeze(const FiniteSet& a, int axis) {
  std::vector<Point> out;
  out.reserve(a.size());
  for (const auto& [y, k] : fibers(a, axis))
    for (std::size_t m = 1; m <= k; ++m) out.push_back(detail::insert_axis(y, axis, static_cast<std::int64_t>(m)));
  return FiniteSet(a.dim(), std::move(out));
}

struct Fixpoint {
  FiniteSet set;
  std::uint64_t steps = 0;
  std::vector<std::int64_t> energies;  // energy after each changing step, starting with E(A)
};

/// Cyclic squeezing until a full round of dim() operators leaves the set fixed.
inline Fixpoint squeeze_fixpoint(const FiniteSet& a, std::vector<int> order = {}) {
  require(!a.empty(), errc::invalid_argument, "squeeze_fixpoint needs a nonempty set");
  const int d = a.dim();
  if (order.empty())
    for (int j = 0; j < d; ++j) order.push_back(j);
  require(static_cast<int>(order.size()) == d, errc::invalid_argument, "schedule must list every axis once");
  {
    auto sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (int j = 0; j < d; ++j) require(sorted[j] == j, errc::invalid_argument, "schedule must list every axis once");
  }
  Fixpoint fp{a, 0, {energy(a)}};
  if (d == 0) return fp;
  const auto cap = static_cast<std::uint64_t>(a.size()) * static_cast<std::uint64_t>(energy(a));
  int stable = 0;
  for (std::size_t m = 0; stable < d; ++m) {
    require(fp.steps <= cap, errc::identity_violation, "squeezing iteration cap exceeded");
    auto next = squeeze(fp.set, order[m % order.size()]);
    ++fp.steps;
    if (next == fp.set) {
      ++stable;
      continue;
    }
    stable = 0;
    auto e = energy(next);
    require(e < fp.energies.back(), errc::identity_violation, "energy did not decrease under squeezing");
    fp.energies.push_back(e);
    fp.set = std::move(next);
  }
  return fp;
}

/// Nearest-neighbour edges of Z^d with exactly one end in A.
inline std::uint64_t boundary_edges(const FiniteSet& a) {
  std::uint64_t count = 0;
  Point y;
  for (const auto& x : a.points()) {
    for (int i = 0; i < a.dim(); ++i) {
      for (int s : {1, -1}) {
        y = x;
        y[static_cast<std::size_t>(i)] += s;
        bool inside = y[static_cast<std::size_t>(i)] >= 1 && a.contains(y);
        if (!inside) ++count;
      }
    }
  }
  return count;
}

struct IsoperimetricCheck {
  std::size_t max_projection = 0;
  double ratio = 0;
};

inline IsoperimetricCheck isoperimetric_check(const FiniteSet& a) {
  require(!a.empty(), errc::invalid_argument, "isoperimetric_check needs a nonempty set");
  IsoperimetricCheck c;
  for (int j = 0; j < a.dim(); ++j) c.max_projection = std::max(c.max_projection, project(a, j).size());
  const double d = a.dim();
  c.ratio = static_cast<double>(c.max_projection) / std::pow(static_cast<double>(a.size()), (d - 1) / d);
  return c;
}

/// Brute-force recomputation of the four squeezing properties for one (A, axis).
struct SqueezeProperties {
  bool fibers_preserved = false;
  bool size_preserved = false;
  bool projections_shrink = false;
  bool energy_monotone = false;
  bool all() const { return fibers_preserved && size_preserved && projections_shrink && energy_monotone; }
};

inline SqueezeProperties squeeze_properties(const FiniteSet& a, int axis) {
  auto s = squeeze(a, axis);
  SqueezeProperties p;
  p.size_preserved = s.size() == a.size();
  p.fibers_preserved = fibers(s, axis) == fibers(a, axis);
  // the squeezed fibers must be exactly {1..k}
  for (const auto& x : s.points()) {
    auto k = x[static_cast<std::size_t>(axis)];
    if (k > 1) {
      auto below = x;
      --below[static_cast<std::size_t>(axis)];
      p.fibers_preserved = p.fibers_preserved && s.contains(below);
    }
  }
  p.projections_shrink = true;
  for (int i = 0; i < a.dim(); ++i) p.projections_shrink = p.projections_shrink && project(s, i).size() <= project(a, i).size();
  auto es = energy(s), ea = energy(a);
  p.energy_monotone = es <= ea && ((es == ea) == (s == a));
  return p;
}

struct ExhaustiveSqueezeReport {
  std::uint64_t sets = 0;
  std::uint64_t pairs = 0;
  std::uint64_t property_failures = 0;
  std::uint64_t fixpoint_failures = 0;
  std::uint64_t boundary_failures = 0;
  double min_ratio = std::numeric_limits<double>::infinity();
  bool ok() const { return property_failures == 0 && fixpoint_failures == 0 && boundary_failures == 0; }
};

/// Every nonempty A in [1, side]^2 with |A| <= max_size.
inline ExhaustiveSqueezeReport exhaustive_squeeze_check(int side, int max_size) {
  require(side >= 1 && side * side <= 30, errc::invalid_argument, "box too large to enumerate");
  const int cells = side * side;
  ExhaustiveSqueezeReport r;
  std::vector<Point> pts;
  for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << cells); ++mask) {
    if (std::popcount(mask) > max_size) continue;
    pts.clear();
    for (int c = 0; c < cells; ++c)
      if (mask >> c & 1U) pts.push_back({c / side + 1, c % side + 1});
    FiniteSet a(2, pts);
    ++r.sets;
    for (int j = 0; j < 2; ++j) {
      ++r.pairs;
      if (!squeeze_properties(a, j).all()) ++r.property_failures;
    }
    auto fp = squeeze_fixpoint(a);
    const auto& t = fp.set;
    bool fixed = t.size() == a.size();
    std::uint64_t proj_sum = 0;
    for (int j = 0; j < 2; ++j) {
      fixed = fixed && squeeze(t, j) == t && project(t, j).size() <= project(a, j).size();
      proj_sum += project(t, j).size();
    }
    if (!fixed) ++r.fixpoint_failures;
    if (boundary_edges(t) != 2 * proj_sum) ++r.boundary_failures;
    r.min_ratio = std::min(r.min_ratio, isoperimetric_check(a).ratio);
  }
  return r;
}

/// "(1,2) (3,4)" style literals; parentheses optional, tuples separated by whitespace.
inline FiniteSet parse_set(const std::string& text) {
  std::istringstream is(text);
  std::string tok;
  std::vector<Point> pts;
  int dim = -1;
  while (is >> tok) {
    std::string body;
    for (char ch : tok)
      if (ch != '(' && ch != ')') body += ch;
    Point p;
    std::istringstream cs(body);
    std::string part;
    while (std::getline(cs, part, ',')) {
      try {
        std::size_t used = 0;
        p.push_back(std::stoll(part, &used));
        require(used == part.size(), errc::malformed_config, "bad coordinate '" + part + "'");
      } catch (const std::logic_error&) {
        fail(errc::malformed_config, "bad coordinate '" + part + "'");
      }
    }
    require(!p.empty(), errc::malformed_config, "empty tuple in set literal");
    if (dim < 0) dim = static_cast<int>(p.size());
    require(static_cast<int>(p.size()) == dim, errc::malformed_config, "tuples of mixed dimension");
    pts.push_back(std::move(p));
  }
  require(dim > 0, errc::malformed_config, "empty set literal");
  return FiniteSet(dim, std::move(pts));
}

inline std::string format_set(const FiniteSet& a) {
  std::string s;
  for (const auto& x : a.points()) {
    if (!s.empty()) s += ' ';
    s += '(';
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (i) s += ',';
      s += std::to_string(x[i]);
    }
    s += ')';
  }
  return s;
}

/// Phi(u) for u = 1..u_max; phi[0] unused. Exact by subset enumeration up to
/// kMaxExactVertices, otherwise a randomized upper bound.
struct ConductanceProfile {
  std::vector<double> phi;
  bool exact = true;
  std::size_t vertices = 0;
};

inline constexpr std::size_t kMaxExactVertices = 20;

inline void check_kernel(const Eigen::MatrixXd& p) {
  require(p.rows() == p.cols() && p.rows() >= 2, errc::invalid_argument, "kernel must be square with >= 2 states");
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    require(std::abs(p.row(i).sum() - 1.0) <= 1e-12, errc::invalid_argument, "kernel rows must sum to 1");
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      require(p(i, j) >= 0, errc::invalid_argument, "kernel entries must be nonnegative");
      require(std::abs(p(i, j) - p(j, i)) <= 1e-12, errc::invalid_argument, "kernel must be symmetric");
    }
  }
}

inline ConductanceProfile conductance_profile(const Eigen::MatrixXd& p, std::size_t u_max, std::uint64_t trials = 20000,
                                              std::uint64_t seed = 0) {
  check_kernel(p);
  const auto n = static_cast<std::size_t>(p.rows());
  u_max = std::min(u_max, n - 1);
  ConductanceProfile prof;
  prof.vertices = n;
  prof.phi.assign(u_max + 1, std::numeric_limits<double>::infinity());
  auto by_size = prof.phi;  // best Phi_S at exactly |S| = k
  if (n <= kMaxExactVertices) {
    const std::uint64_t full = (std::uint64_t{1} << n) - 1;
    std::vector<double> bd(full + 1, 0.0);
    for (std::uint64_t mask = 1; mask < full; ++mask) {
      int v = std::countr_zero(mask);
      std::uint64_t rest = mask & (mask - 1);
      double inner = 0;
      for (std::uint64_t r = rest; r; r &= r - 1) inner += p(v, std::countr_zero(r));
      bd[mask] = bd[rest] + (1.0 - p(v, v) - inner) - inner;
      auto k = static_cast<std::size_t>(std::popcount(mask));
      if (k <= u_max) by_size[k] = std::min(by_size[k], bd[mask] / static_cast<double>(k));
    }
  } else {
    // random connected growth from a random start
    prof.exact = false;
    CounterRng rng(seed);
    std::vector<char> in(n);
    std::vector<std::size_t> members;
    for (std::uint64_t t = 0; t < trials; ++t) {
      std::fill(in.begin(), in.end(), 0);
      members.clear();
      double bd = 0;
      auto add = [&](std::size_t v) {
        double inner = 0;
        for (auto s : members) inner += p(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(s));
        bd += (1.0 - p(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(v)) - inner) - inner;
        in[v] = 1;
        members.push_back(v);
        by_size[members.size()] = std::min(by_size[members.size()], bd / static_cast<double>(members.size()));
      };
      add(static_cast<std::size_t>(rng.below(n)));
      while (members.size() < u_max) {
        std::vector<std::size_t> frontier;
        for (auto s : members)
          for (std::size_t v = 0; v < n; ++v)
            if (!in[v] && p(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(v)) > 0) frontier.push_back(v);
        if (frontier.empty()) break;
        add(frontier[rng.below(frontier.size())]);
      }
    }
  }
  for (std::size_t u = 1; u <= u_max; ++u) prof.phi[u] = std::min(prof.phi[u - 1], by_size[u]);
  return prof;
}

inline void write_profile_csv(std::ostream& os, const ConductanceProfile& prof) {
  os << "u,phi\n";
  os.precision(17);
  for (std::size_t u = 1; u < prof.phi.size(); ++u) os << u << ',' << prof.phi[u] << '\n';
}

struct MorrisPeresCheck {
  double integral = 0;
  std::uint64_t required_n = 0;
  double observed_error = 0;  // max over (x, y) of |p^n(x,y)/pi(y) - 1| at required_n
  bool holds = false;
};

/// Finite-chain form with uniform stationary law pi = 1/|V|: the profile is read
/// on the probability scale r = |S|/|V|, frozen at r = 1/2, and the bound is on
/// the relative error |p^n(x,y)/pi(y) - 1|.
inline MorrisPeresCheck morris_peres_check(const Eigen::MatrixXd& p, const ConductanceProfile& prof, double gamma,
                                           double eps) {
  check_kernel(p);
  require(gamma > 0 && gamma <= 0.5, errc::invalid_argument, "gamma must be in (0, 1/2]");
  require(eps > 0, errc::invalid_argument, "epsilon must be positive");
  const auto n = static_cast<std::size_t>(p.rows());
  require(prof.vertices == n, errc::invalid_argument, "profile does not match kernel");
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    require(p(i, i) >= gamma - 1e-15, errc::invalid_argument, "laziness below gamma");
  const std::size_t half = n / 2;
  require(prof.phi.size() > half, errc::invalid_argument, "profile must reach |V|/2");
  const double nn = static_cast<double>(n);
  auto phi_at = [&](std::size_t k) { return prof.phi[std::min(k, half)]; };
  const double lo = 4.0 / nn, hi = 4.0 / eps;
  MorrisPeresCheck c;
  // Phi is constant on [k/n, (k+1)/n)
  for (std::size_t k = 1; lo < hi; ++k) {
    double a = std::max(lo, static_cast<double>(k) / nn);
    double b = k >= half ? hi : std::min(hi, static_cast<double>(k + 1) / nn);
    if (b > a) c.integral += 4.0 / (phi_at(k) * phi_at(k)) * std::log(b / a);
    if (b >= hi) break;
  }
  double need = 1.0 + (1.0 - gamma) * (1.0 - gamma) / (gamma * gamma) * c.integral;
  c.required_n = static_cast<std::uint64_t>(std::ceil(need));
  Eigen::MatrixXd pn = Eigen::MatrixXd::Identity(p.rows(), p.cols()), base = p;
  for (auto e = c.required_n; e; e >>= 1) {
    if (e & 1U) pn = pn * base;
    base = base * base;
  }
  c.observed_error = (pn.array() * nn - 1.0).abs().maxCoeff();
  c.holds = c.observed_error <= eps;
  return c;
}

}  // namespace dpp
