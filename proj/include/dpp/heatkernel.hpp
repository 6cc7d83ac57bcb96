#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <vector>

#include "dpp/env.hpp"
#include "dpp/error.hpp"
#include "dpp/fit.hpp"
#include "dpp/walk.hpp"

namespace dpp {

inline constexpr double kMassTolerance = 1e-10;

/// p^n(source, .) over the dense ids of a NeighborTable.
struct HeatKernelState {
  std::uint64_t n = 0;
  std::vector<double> mass;
};

/// Exact push propagation of the quenched law.
class Propagator {
 public:
  Propagator(const NeighborTable& table, const TransitionRule& rule) : t_(table) {
    m_ = t_.dirs();
    prob_.resize(t_.size() * static_cast<std::size_t>(m_));
    for (std::size_t id = 0; id < t_.size(); ++id) step_weights(t_, id, rule.alpha, &prob_[id * m_]);
  }

  const NeighborTable& table() const { return t_; }

  HeatKernelState start(std::uint64_t source_site = 0) const {
    std::int64_t id = t_.id(source_site);
    require(id >= 0, errc::invalid_argument, "heat kernel source must be occupied");
    HeatKernelState s;
    s.mass.assign(t_.size(), 0.0);
    s.mass[static_cast<std::size_t>(id)] = 1.0;
    return s;
  }

  void step(const HeatKernelState& in, HeatKernelState& out) const {
    out.n = in.n + 1;
    out.mass.assign(t_.size(), 0.0);
    for (std::size_t id = 0; id < t_.size(); ++id) {
      double a = in.mass[id];
      if (a == 0.0) continue;
      const double* p = &prob_[id * m_];
      for (int e = 0; e < m_; ++e) out.mass[t_.neighbor(id, e)] += a * p[e];
    }
    double total = std::accumulate(out.mass.begin(), out.mass.end(), 0.0);
    require(std::abs(total - 1.0) <= kMassTolerance, errc::numerical_integrity,
            "heat kernel mass drifted to " + std::to_string(total) + " at n=" + std::to_string(out.n));
  }

 private:
  const NeighborTable& t_;
  int m_ = 0;
  std::vector<double> prob_;
};

/// All states p^0 .. p^N. Memory is O(N |P|); use diagnostics() for long runs.
inline std::vector<HeatKernelState> propagate(const NeighborTable& table, const TransitionRule& rule,
                                              std::uint64_t horizon, std::uint64_t source_site = 0) {
  Propagator prop(table, rule);
  std::vector<HeatKernelState> out;
  out.push_back(prop.start(source_site));
  for (std::uint64_t n = 1; n <= horizon; ++n) {
    HeatKernelState next;
    prop.step(out.back(), next);
    out.push_back(std::move(next));
  }
  return out;
}

/// Euclidean norm of the torus-minimal representative of every occupied site.
inline std::vector<double> site_norms(const NeighborTable& t) {
  std::vector<double> r(t.size());
  const auto& w = t.window();
  for (std::size_t id = 0; id < t.size(); ++id) {
    Point p = w.centered_point(t.site(id));
    double s = 0;
    for (auto c : p) s += static_cast<double>(c * c);
    r[id] = std::sqrt(s);
  }
  return r;
}

inline double entropy(const std::vector<double>& g) {
  double q = 0;
  for (double v : g)
    if (v > 0) q -= v * std::log(v);
  return q;
}

inline double first_moment(const std::vector<double>& g, const std::vector<double>& norms) {
  double m = 0;
  for (std::size_t i = 0; i < g.size(); ++i) m += norms[i] * g[i];
  return m;
}

/// |M(n+1) - M(n) + (1/4d) sum_{x, e} (|y|-|x|)(g_n(y)-g_n(x))| with y the
/// e-neighbour of x.
inline double gauss_green_residual(const NeighborTable& t, const std::vector<double>& norms,
                                   const std::vector<double>& g_n, double m_n, double m_next) {
  double s = 0;
  for (std::size_t x = 0; x < t.size(); ++x) {
    for (int e = 0; e < t.dirs(); ++e) {
      std::size_t y = t.neighbor(x, e);
      s += (norms[y] - norms[x]) * (g_n[y] - g_n[x]);
    }
  }
  return std::abs(m_next - m_n + s / (4.0 * t.dim()));
}

struct DiagnosticSeries {
  int dim = 0;
  std::vector<double> p00;            // p^n(0,0)
  std::vector<double> pmax;           // max_y p^n(0,y)
  std::vector<double> M, Q, R;        // averaged distance, entropy, normalized entropy gap
  std::vector<double> gauss_green;    // residual at n (n = 0 reported as 0)
  std::vector<double> green_partial;  // sum_{m <= n} p^m(0,0)
  std::vector<double> q99;            // 99% quantile of |X_n|
  double K = 0;                       // sup_{n >= 1} n^{d/2} max_y p^n(0,y)
  std::uint64_t K_at = 0;
  std::uint64_t usable_horizon = 0;   // largest n with q99 < L_min / 4 throughout
  double max_mass_error = 0;

  std::uint64_t horizon() const { return p00.empty() ? 0 : p00.size() - 1; }
};

/// Streaming computation of all heat-kernel diagnostics up to the horizon.
inline DiagnosticSeries diagnostics(const NeighborTable& t, const TransitionRule& rule, std::uint64_t horizon) {
  require(horizon >= 1, errc::invalid_argument, "heat kernel horizon must be >= 1");
  Propagator prop(t, rule);
  auto norms = site_norms(t);
  std::vector<std::size_t> by_norm(t.size());
  std::iota(by_norm.begin(), by_norm.end(), 0);
  std::stable_sort(by_norm.begin(), by_norm.end(), [&](auto a, auto b) { return norms[a] < norms[b]; });
  const std::size_t origin = static_cast<std::size_t>(t.id(0));
  const int d = t.dim();
  const double quarter = t.window().min_side() / 4.0;

  DiagnosticSeries s;
  s.dim = d;
  const std::size_t N = horizon;
  s.p00.assign(N + 1, 0);
  s.pmax.assign(N + 1, 0);
  s.M.assign(N + 1, 0);
  s.Q.assign(N + 1, 0);
  s.R.assign(N + 1, 0);
  s.gauss_green.assign(N + 1, 0);
  s.green_partial.assign(N + 1, 0);
  s.q99.assign(N + 1, 0);

  auto quantile99 = [&](const std::vector<double>& mass) {
    double cum = 0;
    for (auto id : by_norm) {
      cum += mass[id];
      if (cum >= 0.99) return norms[id];
    }
    return norms[by_norm.back()];
  };

  HeatKernelState prev = prop.start(0), cur, next;
  s.p00[0] = 1;
  s.pmax[0] = 1;
  s.green_partial[0] = 1;
  bool usable = true;
  prop.step(prev, cur);
  std::vector<double> g(t.size()), g_next(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) g[i] = 0.5 * (cur.mass[i] + prev.mass[i]);
  for (std::size_t n = 1; n <= N; ++n) {
    double total = std::accumulate(cur.mass.begin(), cur.mass.end(), 0.0);
    s.max_mass_error = std::max(s.max_mass_error, std::abs(total - 1.0));
    s.p00[n] = cur.mass[origin];
    s.pmax[n] = *std::max_element(cur.mass.begin(), cur.mass.end());
    s.green_partial[n] = s.green_partial[n - 1] + s.p00[n];
    s.q99[n] = quantile99(cur.mass);
    if (usable && s.q99[n] < quarter) s.usable_horizon = n; else usable = false;
    s.M[n] = first_moment(g, norms);
    s.Q[n] = entropy(g);
    double scaled = std::pow(static_cast<double>(n), d / 2.0) * s.pmax[n];
    if (scaled > s.K) {
      s.K = scaled;
      s.K_at = n;
    }
    prop.step(cur, next);
    for (std::size_t i = 0; i < t.size(); ++i) g_next[i] = 0.5 * (next.mass[i] + cur.mass[i]);
    double m_next = first_moment(g_next, norms);
    s.gauss_green[n] = gauss_green_residual(t, norms, g, s.M[n], m_next);
    prev = std::move(cur);
    cur = std::move(next);
    std::swap(g, g_next);
  }
  for (std::size_t n = 2; n <= N; ++n) {
    s.R[n] = (s.Q[n] - (d / 2.0) * std::log(static_cast<double>(n - 1)) + std::log(s.K)) / d;
  }
  return s;
}

inline DiagnosticSeries diagnostics(const Environment& env, const TransitionRule& rule, std::uint64_t horizon) {
  NeighborTable t(env);
  return diagnostics(t, rule, horizon);
}

inline double max_gauss_green_residual(const DiagnosticSeries& s) {
  return s.gauss_green.empty() ? 0.0 : *std::max_element(s.gauss_green.begin(), s.gauss_green.end());
}

struct HeatKernelBound {
  double K = 0;
  std::uint64_t K_at = 0;
  double first_half_max = 0;
  double last_half_max = 0;
  bool plateau = false;
};

/// Plateau test for n^{d/2} max_y p^n(0,y): over n in [from, N], the maximum
/// over the later half must not exceed `factor` times the earlier half.
inline HeatKernelBound heat_kernel_bound(const DiagnosticSeries& s, std::uint64_t from = 20, double factor = 1.05) {
  std::uint64_t N = s.horizon();
  require(N >= 10, errc::invalid_argument, "heat kernel bound needs a horizon >= 10");
  from = std::min<std::uint64_t>(from, N / 2);
  HeatKernelBound b;
  b.K = s.K;
  b.K_at = s.K_at;
  std::uint64_t mid = from + (N - from) / 2;
  for (std::uint64_t n = from; n <= N; ++n) {
    double v = std::pow(static_cast<double>(n), s.dim / 2.0) * s.pmax[n];
    if (n < mid) b.first_half_max = std::max(b.first_half_max, v);
    else b.last_half_max = std::max(b.last_half_max, v);
  }
  b.plateau = b.last_half_max <= factor * b.first_half_max;
  return b;
}

struct EntropyBoundCheck {
  double min_margin = std::numeric_limits<double>::infinity();  // min_n Q(n) - bound(n)
  std::uint64_t worst_n = 0;
  std::uint64_t violations = 0;
};

/// Q(n) >= (d/2) log(n-1) - log K for 2 <= n <= N.
inline EntropyBoundCheck entropy_bound(const DiagnosticSeries& s, double K) {
  EntropyBoundCheck c;
  for (std::uint64_t n = 2; n <= s.horizon(); ++n) {
    double bound = (s.dim / 2.0) * std::log(static_cast<double>(n - 1)) - std::log(K);
    double margin = s.Q[n] - bound;
    if (margin < c.min_margin) {
      c.min_margin = margin;
      c.worst_n = n;
    }
    if (margin < 0) ++c.violations;
  }
  return c;
}

struct GreenReport {
  double value = 0;       // partial sum at the horizon
  double tail_slope = 0;  // mean increment over the last 10% of the horizon
  double exponent = 0;    // log-log slope of partial sums over the later half
};

inline GreenReport green_report(const std::vector<double>& partial) {
  GreenReport r;
  std::size_t N = partial.size() - 1;
  r.value = partial[N];
  if (N >= 10) {
    std::size_t a = N - N / 10;
    r.tail_slope = (partial[N] - partial[a]) / static_cast<double>(N - a);
    std::vector<double> lx, ly;
    for (std::size_t n = std::max<std::size_t>(N / 2, 1); n <= N; ++n) {
      lx.push_back(std::log(static_cast<double>(n)));
      ly.push_back(std::log(partial[n]));
    }
    r.exponent = ls_slope(lx, ly);
  }
  return r;
}

inline void write_series_csv(std::ostream& os, const DiagnosticSeries& s) {
  os << "n,p00,M,Q,R,gauss_green_residual,green_partial\n";
  auto flags = os.flags();
  os << std::scientific << std::setprecision(12);
  for (std::size_t n = 0; n <= s.horizon(); ++n) {
    os << n << ',' << s.p00[n] << ',' << s.M[n] << ',' << s.Q[n] << ',' << s.R[n] << ',' << s.gauss_green[n] << ','
       << s.green_partial[n] << '\n';
  }
  os.flags(flags);
}

}  // namespace dpp
