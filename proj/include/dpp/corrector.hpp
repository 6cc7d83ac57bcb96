#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dpp/env.hpp"
#include "dpp/error.hpp"
#include "dpp/walk.hpp"

namespace dpp {

// Vector fields over occupied sites are stored id-major: f[id * d + i].
using Field = std::vector<double>;

/// (Lambda f)(x) = (1/2d) sum over the 2d coordinate nearest neighbours.
inline void apply_lambda(const NeighborTable& t, const std::vector<double>& f, std::vector<double>& out) {
  const int m = t.dirs();
  const double w = 1.0 / m;
  out.assign(t.size(), 0.0);
  for (std::size_t id = 0; id < t.size(); ++id) {
    double s = 0;
    for (int e = 0; e < m; ++e) s += f[t.neighbor(id, e)];
    out[id] = w * s;
  }
}

/// Mean gap-signed displacement of one step.
inline Field drift(const NeighborTable& t) {
  const int d = t.dim(), m = t.dirs();
  Field v(t.size() * static_cast<std::size_t>(d), 0.0);
  for (std::size_t id = 0; id < t.size(); ++id)
    for (int e = 0; e < m; ++e)
      v[id * d + axis_of(e)] += sign_of(e) * static_cast<double>(t.gap(id, e)) / m;
  return v;
}

inline std::vector<double> component(const Field& f, int d, int i) {
  std::vector<double> c(f.size() / static_cast<std::size_t>(d));
  for (std::size_t id = 0; id < c.size(); ++id) c[id] = f[id * d + i];
  return c;
}

struct ScalarSolve {
  std::vector<double> x;
  double residual = 0;  // sup norm of b - A x
  std::uint64_t iterations = 0;
};

/// Conjugate gradients for ((1 + eps) I - Lambda) x = b. The operator is
/// symmetric with spectrum in [eps, 2 + eps].
inline ScalarSolve solve_scalar(const NeighborTable& t, const std::vector<double>& b, double eps, double tol,
                                const std::vector<double>* warm = nullptr, std::uint64_t max_iter = 200000) {
  require(eps > 0, errc::invalid_argument, "epsilon must be positive");
  require(tol > 0, errc::invalid_argument, "tolerance must be positive");
  const std::size_t n = t.size();
  ScalarSolve s;
  s.x = warm ? *warm : std::vector<double>(n, 0.0);
  std::vector<double> r(n), p(n), ap(n);
  auto apply = [&](const std::vector<double>& in, std::vector<double>& out) {
    apply_lambda(t, in, out);
    for (std::size_t i = 0; i < n; ++i) out[i] = (1.0 + eps) * in[i] - out[i];
  };
  auto true_residual = [&] {
    apply(s.x, ap);
    double sup = 0;
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = b[i] - ap[i];
      sup = std::max(sup, std::abs(r[i]));
    }
    return sup;
  };
  auto dot = [&](const std::vector<double>& a, const std::vector<double>& c) {
    double z = 0;
    for (std::size_t i = 0; i < n; ++i) z += a[i] * c[i];
    return z;
  };
  std::deque<double> history;
  s.residual = true_residual();
  p = r;
  double rs = dot(r, r);
  while (s.residual > tol) {
    if (s.iterations >= max_iter) {
      std::string h;
      for (double v : history) h += " " + std::to_string(v);
      fail(errc::solver_not_converged, "CG did not reach tol " + std::to_string(tol) + " in " +
                                           std::to_string(max_iter) + " iterations; recent residuals:" + h);
    }
    apply(p, ap);
    double alpha = rs / dot(p, ap);
    double sup = 0;
    for (std::size_t i = 0; i < n; ++i) {
      s.x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
      sup = std::max(sup, std::abs(r[i]));
    }
    ++s.iterations;
    if (sup <= 0.5 * tol) {
      s.residual = true_residual();
      rs = dot(r, r);
      p = r;
    } else {
      double rs_new = dot(r, r);
      double beta = rs_new / rs;
      rs = rs_new;
      for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
      s.residual = sup;
    }
    history.push_back(s.residual);
    if (history.size() > 8) history.pop_front();
  }
  return s;
}

struct PsiSolve {
  Field psi;
  std::vector<double> residual;  // per coordinate
  std::uint64_t iterations = 0;
};

/// Solves (1 + eps - Lambda) psi = V coordinate by coordinate.
inline PsiSolve solve_psi(const NeighborTable& t, const Field& v, double eps, double tol, const Field* warm = nullptr) {
  const int d = t.dim();
  require(v.size() == t.size() * static_cast<std::size_t>(d), errc::invalid_argument, "drift field size mismatch");
  PsiSolve out;
  out.psi.assign(v.size(), 0.0);
  for (int i = 0; i < d; ++i) {
    auto b = component(v, d, i);
    std::vector<double> w;
    if (warm) w = component(*warm, d, i);
    auto s = solve_scalar(t, b, eps, tol, warm ? &w : nullptr);
    for (std::size_t id = 0; id < t.size(); ++id) out.psi[id * d + i] = s.x[id];
    out.residual.push_back(s.residual);
    out.iterations += s.iterations;
  }
  return out;
}

inline std::vector<double> default_schedule() {
  std::vector<double> s;
  for (int k = 3; k <= 14; ++k) s.push_back(std::ldexp(1.0, -k));
  return s;
}

struct CorrectorOptions {
  std::vector<double> schedule = default_schedule();
  double tol = 1e-10;
  double cauchy_factor = 10;
};

/// Per site, (1/2d) sum_e [disp_e + h(y_e) - h(x)] for a field h; its sup over
/// sites of the Euclidean norm.
inline std::vector<double> conditional_increment_mean(const NeighborTable& t, const Field& h) {
  const int d = t.dim(), m = t.dirs();
  std::vector<double> out(t.size() * static_cast<std::size_t>(d), 0.0);
  for (std::size_t id = 0; id < t.size(); ++id) {
    for (int e = 0; e < m; ++e) {
      std::size_t y = t.neighbor(id, e);
      for (int i = 0; i < d; ++i) {
        double disp = axis_of(e) == i ? sign_of(e) * static_cast<double>(t.gap(id, e)) : 0.0;
        out[id * d + i] += (disp + h[y * d + i] - h[id * d + i]) / m;
      }
    }
  }
  return out;
}

inline double sup_norm_rows(const std::vector<double>& f, int d) {
  double best = 0;
  for (std::size_t id = 0; id * d < f.size(); ++id) {
    double s = 0;
    for (int i = 0; i < d; ++i) s += f[id * d + i] * f[id * d + i];
    best = std::max(best, std::sqrt(s));
  }
  return best;
}

inline double harmonicity_residual(const NeighborTable& t, const Field& chi) {
  return sup_norm_rows(conditional_increment_mean(t, chi), t.dim());
}

struct CorrectorField {
  int dim = 0;
  std::vector<double> schedule;
  double tol = 0;
  std::vector<double> eps_norm;         // eps * site-average |psi_eps|^2
  std::vector<double> solver_residual;  // max over coordinates
  std::vector<double> harmonicity;      // residual of x + psi_eps
  std::vector<double> increment_change; // sup |G^(eps_k) - G^(eps_{k-1})|, first entry NaN
  std::uint64_t iterations = 0;
  bool stabilized = false;
  Field psi;  // at the final eps
  Field chi;  // path sums of final-eps increments, chi(0) = 0
  double cocycle_residual = 0;
  std::uint32_t max_gap = 0;
};

/// chi by breadth-first path sums from the origin over coordinate nearest
/// neighbour steps; the residual is the worst edge mismatch against G.
inline void assemble_chi(const NeighborTable& t, CorrectorField& f) {
  const int d = t.dim(), m = t.dirs();
  auto origin = t.id(0);
  require(origin >= 0, errc::invalid_argument, "corrector needs an occupied origin");
  const auto o = static_cast<std::size_t>(origin);
  f.chi.assign(f.psi.size(), 0.0);
  std::vector<char> seen(t.size(), 0);
  std::vector<std::size_t> queue{o};
  seen[o] = 1;
  for (std::size_t q = 0; q < queue.size(); ++q) {
    std::size_t x = queue[q];
    for (int e = 0; e < m; ++e) {
      std::size_t y = t.neighbor(x, e);
      if (seen[y]) continue;
      seen[y] = 1;
      for (int i = 0; i < d; ++i) f.chi[y * d + i] = f.chi[x * d + i] + (f.psi[y * d + i] - f.psi[x * d + i]);
      queue.push_back(y);
    }
  }
  require(queue.size() == t.size(), errc::validation_failed, "neighbour graph is not connected");
  f.cocycle_residual = 0;
  for (std::size_t x = 0; x < t.size(); ++x)
    for (int e = 0; e < m; ++e) {
      std::size_t y = t.neighbor(x, e);
      for (int i = 0; i < d; ++i) {
        double g = f.psi[y * d + i] - f.psi[x * d + i];
        f.cocycle_residual = std::max(f.cocycle_residual, std::abs(f.chi[y * d + i] - f.chi[x * d + i] - g));
      }
    }
}

inline CorrectorField assemble_corrector(const NeighborTable& t, const CorrectorOptions& opts = {}) {
  require(!opts.schedule.empty(), errc::invalid_argument, "empty epsilon schedule");
  for (std::size_t k = 0; k < opts.schedule.size(); ++k) {
    require(opts.schedule[k] > 0, errc::invalid_argument, "epsilon must be positive");
    if (k) require(opts.schedule[k] < opts.schedule[k - 1], errc::invalid_argument, "schedule must strictly decrease");
  }
  const int d = t.dim(), m = t.dirs();
  CorrectorField f;
  f.dim = d;
  f.schedule = opts.schedule;
  f.tol = opts.tol;
  for (std::size_t id = 0; id < t.size(); ++id)
    for (int e = 0; e < m; ++e) f.max_gap = std::max(f.max_gap, t.gap(id, e));
  auto v = drift(t);
  Field prev;
  for (double eps : opts.schedule) {
    auto s = solve_psi(t, v, eps, opts.tol, prev.empty() ? nullptr : &prev);
    f.iterations += s.iterations;
    f.solver_residual.push_back(*std::max_element(s.residual.begin(), s.residual.end()));
    double sq = 0;
    for (double z : s.psi) sq += z * z;
    f.eps_norm.push_back(eps * sq / static_cast<double>(t.size()));
    f.harmonicity.push_back(harmonicity_residual(t, s.psi));
    double change = std::numeric_limits<double>::quiet_NaN();
    if (!prev.empty()) {
      change = 0;
      for (std::size_t x = 0; x < t.size(); ++x)
        for (int e = 0; e < m; ++e) {
          std::size_t y = t.neighbor(x, e);
          for (int i = 0; i < d; ++i) {
            double a = s.psi[y * d + i] - s.psi[x * d + i];
            double b = prev[y * d + i] - prev[x * d + i];
            change = std::max(change, std::abs(a - b));
          }
        }
    }
    f.increment_change.push_back(change);
    prev = std::move(s.psi);
  }
  f.psi = std::move(prev);
  f.stabilized = opts.schedule.size() > 1 && f.increment_change.back() <= opts.cauchy_factor * opts.tol;
  assemble_chi(t, f);
  return f;
}

/// chi at the end of an explicit path of dense ids starting at the origin.
inline std::vector<double> chi_along_path(const NeighborTable& t, const Field& psi, const std::vector<std::size_t>& path) {
  const int d = t.dim();
  require(!path.empty() && static_cast<std::int64_t>(path.front()) == t.id(0), errc::invalid_argument,
          "path must start at the origin");
  std::vector<double> c(static_cast<std::size_t>(d), 0.0);
  for (std::size_t k = 1; k < path.size(); ++k) {
    bool adjacent = false;
    for (int e = 0; e < t.dirs(); ++e) adjacent |= t.neighbor(path[k - 1], e) == path[k];
    require(adjacent, errc::invalid_argument, "path steps must be coordinate nearest neighbours");
    for (int i = 0; i < d; ++i) c[static_cast<std::size_t>(i)] += psi[path[k] * d + i] - psi[path[k - 1] * d + i];
  }
  return c;
}

inline double chi_norm(const Field& chi, int d, std::size_t id) {
  double s = 0;
  for (int i = 0; i < d; ++i) s += chi[id * d + i] * chi[id * d + i];
  return std::sqrt(s);
}

struct AxisSublinearity {
  int axis = 0;
  std::vector<double> ratio;  // |chi(n_k e)| / k for k = 1 .. one period of the line
};

struct BoxSublinearity {
  std::uint32_t n = 0;
  std::vector<double> eps;
  std::vector<double> fraction_cube;      // count / (2n+1)^d
  std::vector<double> fraction_occupied;  // count / occupied sites in the box
};

struct SublinearityReport {
  std::vector<AxisSublinearity> axes;
  BoxSublinearity box;
};

inline SublinearityReport sublinearity(const NeighborTable& t, const CorrectorField& f, std::uint32_t n,
                                       std::vector<double> eps_grid = {0.05, 0.1, 0.2, 0.5}) {
  const int d = t.dim();
  const auto& w = t.window();
  require(2 * n + 1 <= w.min_side(), errc::window_limit, "box [-n,n]^d does not fit in the window");
  SublinearityReport r;
  const auto o = static_cast<std::size_t>(t.id(0));
  for (int axis = 0; axis < d; ++axis) {
    AxisSublinearity a;
    a.axis = axis;
    std::size_t x = o;
    for (std::size_t k = 1;; ++k) {
      x = t.neighbor(x, 2 * axis);
      a.ratio.push_back(chi_norm(f.chi, d, x) / static_cast<double>(k));
      if (x == o) break;
    }
    r.axes.push_back(std::move(a));
  }
  r.box.n = n;
  r.box.eps = eps_grid;
  std::vector<std::uint64_t> count(eps_grid.size(), 0);
  std::uint64_t occupied = 0;
  for (std::size_t id = 0; id < t.size(); ++id) {
    auto p = w.centered_point(t.site(id));
    bool inside = true;
    for (auto c : p) inside = inside && std::abs(c) <= static_cast<std::int64_t>(n);
    if (!inside) continue;
    ++occupied;
    double c = chi_norm(f.chi, d, id);
    for (std::size_t j = 0; j < eps_grid.size(); ++j)
      if (c >= eps_grid[j] * n) ++count[j];
  }
  double cube = std::pow(2.0 * n + 1.0, d);
  for (auto c : count) {
    r.box.fraction_cube.push_back(static_cast<double>(c) / cube);
    r.box.fraction_occupied.push_back(occupied ? static_cast<double>(c) / static_cast<double>(occupied) : 0.0);
  }
  return r;
}

/// chi at the first occupied site along +e_axis from the origin.
inline std::vector<double> chi_first_step(const NeighborTable& t, const CorrectorField& f, int axis) {
  const int d = t.dim();
  std::size_t y = t.neighbor(static_cast<std::size_t>(t.id(0)), 2 * axis);
  return std::vector<double>(f.chi.begin() + static_cast<std::ptrdiff_t>(y * d),
                             f.chi.begin() + static_cast<std::ptrdiff_t>((y + 1) * d));
}

/// Covariance of the one-step increment of x + chi at site id.
inline Eigen::MatrixXd increment_covariance(const NeighborTable& t, const Field& chi, std::size_t id) {
  const int d = t.dim(), m = t.dirs();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d), inc(d);
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(d, d);
  for (int e = 0; e < m; ++e) {
    std::size_t y = t.neighbor(id, e);
    for (int i = 0; i < d; ++i) {
      double disp = axis_of(e) == i ? sign_of(e) * static_cast<double>(t.gap(id, e)) : 0.0;
      inc(i) = disp + chi[y * d + i] - chi[id * d + i];
    }
    mean += inc / m;
    second += inc * inc.transpose() / m;
  }
  return second - mean * mean.transpose();
}

/// Average of the per-site increment covariance over all occupied sites.
inline Eigen::MatrixXd site_average_D(const NeighborTable& t, const Field& chi) {
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(t.dim(), t.dim());
  for (std::size_t id = 0; id < t.size(); ++id) D += increment_covariance(t, chi, id);
  return D / static_cast<double>(t.size());
}

struct MartingaleSeries {
  double max_conditional_mean = 0;  // over visited sites
  double harmonicity = 0;           // sup over all sites
  bool consistent = false;
  std::uint64_t visits = 0;
  Eigen::MatrixXd D;       // time average over the trajectories
  Eigen::MatrixXd D_site;  // average over all sites
  std::vector<std::vector<double>> final_M;  // X_n + chi(X_n) per trajectory
};

inline MartingaleSeries martingale_check(const NeighborTable& t, const Field& chi,
                                         const std::vector<Trajectory>& trajectories) {
  const int d = t.dim();
  MartingaleSeries s;
  auto cm = conditional_increment_mean(t, chi);
  s.harmonicity = sup_norm_rows(cm, d);
  std::vector<Eigen::MatrixXd> cov(t.size());
  std::vector<char> have(t.size(), 0);
  s.D = Eigen::MatrixXd::Zero(d, d);
  for (const auto& tr : trajectories) {
    require(tr.dim == d, errc::invalid_argument, "trajectory dimension mismatch");
    for (std::size_t k = 0; k + 1 < tr.length(); ++k) {
      auto id = static_cast<std::size_t>(t.id(tr.sites[k]));
      if (!have[id]) {
        cov[id] = increment_covariance(t, chi, id);
        have[id] = 1;
        double z = 0;
        for (int i = 0; i < d; ++i) z += cm[id * d + i] * cm[id * d + i];
        s.max_conditional_mean = std::max(s.max_conditional_mean, std::sqrt(z));
      }
      s.D += cov[id];
      ++s.visits;
    }
    auto last = static_cast<std::size_t>(t.id(tr.sites.back()));
    std::vector<double> M(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i)
      M[static_cast<std::size_t>(i)] = static_cast<double>(tr.unwrapped[(tr.length() - 1) * d + i]) + chi[last * d + i];
    s.final_M.push_back(std::move(M));
  }
  if (s.visits) s.D /= static_cast<double>(s.visits);
  s.D_site = site_average_D(t, chi);
  s.consistent = s.max_conditional_mean <= s.harmonicity + 1e-12;
  return s;
}

inline void write_corrector_csv(std::ostream& os, const NeighborTable& t, const CorrectorField& f) {
  const int d = t.dim();
  for (int i = 0; i < d; ++i) os << 'x' << i << ',';
  for (int i = 0; i < d; ++i) os << "chi" << i << ',';
  for (int i = 0; i < d; ++i) os << "psi" << i << (i + 1 < d ? "," : "\n");
  os << std::setprecision(17);
  for (std::size_t id = 0; id < t.size(); ++id) {
    auto p = t.window().centered_point(t.site(id));
    for (auto c : p) os << c << ',';
    for (int i = 0; i < d; ++i) os << f.chi[id * d + i] << ',';
    for (int i = 0; i < d; ++i) os << f.psi[id * d + i] << (i + 1 < d ? "," : "\n");
  }
}

}  // namespace dpp
