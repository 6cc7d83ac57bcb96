#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/gamma.hpp>

#include "dpp/corrector.hpp"
#include "dpp/env.hpp"
#include "dpp/error.hpp"
#include "dpp/fit.hpp"
#include "dpp/heatkernel.hpp"
#include "dpp/network2d.hpp"
#include "dpp/parallel.hpp"
#include "dpp/walk.hpp"

namespace dpp {

inline double normal_cdf(double x, double variance = 1.0) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0 * variance));
}

/// P(K > lambda) for the Kolmogorov distribution.
inline double kolmogorov_q(double lambda) {
  if (lambda <= 0) return 1.0;
  if (lambda < 1.18) {
    // P(K <= l) = sqrt(2 pi)/l sum exp(-(2k-1)^2 pi^2 / (8 l^2))
    double s = 0;
    for (int k = 1; k <= 20; ++k) {
      double a = (2.0 * k - 1.0) * std::numbers::pi / lambda;
      s += std::exp(-a * a / 8.0);
    }
    return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / lambda * s, 0.0, 1.0);
  }
  double s = 0;
  for (int k = 1; k <= 100; ++k) {
    double term = std::exp(-2.0 * k * k * lambda * lambda);
    s += (k % 2 ? 1.0 : -1.0) * term;
    if (term < 1e-17) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

struct KsResult {
  double statistic = 0;
  double pvalue = 1;
  std::size_t n = 0;
};

template <class Cdf>
KsResult ks_test(std::vector<double> xs, Cdf cdf) {
  require(!xs.empty(), errc::invalid_argument, "KS test needs samples");
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  KsResult r;
  r.n = xs.size();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    // ties: compare against the empirical CDF just below and at the value
    std::size_t j = i;
    while (j + 1 < xs.size() && xs[j + 1] == xs[i]) ++j;
    double f = cdf(xs[i]);
    r.statistic = std::max({r.statistic, f - static_cast<double>(i) / n, static_cast<double>(j + 1) / n - f});
    i = j;
  }
  double sn = std::sqrt(n);
  r.pvalue = kolmogorov_q((sn + 0.12 + 0.11 / sn) * r.statistic);
  return r;
}

/// KS for lattice-valued samples: the empirical CDF at each distinct value is
/// compared with the model CDF at the midpoint to the next distinct value.
template <class Cdf>
KsResult ks_test_lattice(std::vector<double> xs, Cdf cdf) {
  require(xs.size() >= 2, errc::invalid_argument, "KS test needs samples");
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  std::vector<double> vals;
  std::vector<double> ecdf;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i + 1 < xs.size() && xs[i + 1] == xs[i]) continue;
    vals.push_back(xs[i]);
    ecdf.push_back(static_cast<double>(i + 1) / n);
  }
  KsResult r;
  r.n = xs.size();
  if (vals.size() >= 2) r.statistic = cdf(vals[0] - 0.5 * (vals[1] - vals[0]));
  for (std::size_t j = 0; j + 1 < vals.size(); ++j)
    r.statistic = std::max(r.statistic, std::abs(ecdf[j] - cdf(0.5 * (vals[j] + vals[j + 1]))));
  double sn = std::sqrt(n);
  r.pvalue = kolmogorov_q((sn + 0.12 + 0.11 / sn) * r.statistic);
  return r;
}

inline double chi_square_pvalue(double statistic, double dof) {
  require(dof > 0, errc::invalid_argument, "chi-square needs positive degrees of freedom");
  return boost::math::gamma_q(dof / 2.0, std::max(0.0, statistic) / 2.0);
}

// ---------------------------------------------------------------------------
// Velocity

struct VelocityReport {
  std::uint64_t horizon = 0;
  std::uint64_t used = 0;
  double k = 3;
  std::vector<double> mean;    // per axis, of X_n / n
  std::vector<double> stderr_;
  std::vector<bool> contains_zero;
  bool passed() const { return std::all_of(contains_zero.begin(), contains_zero.end(), [](bool b) { return b; }); }
};

inline VelocityReport velocity_test(const WalkEnsemble& ens, double k = 3) {
  require(ens.horizon > 0, errc::invalid_argument, "velocity needs a positive horizon");
  VelocityReport r;
  r.horizon = ens.horizon;
  r.k = k;
  const auto d = static_cast<std::size_t>(ens.dim);
  std::vector<double> s(d, 0), s2(d, 0);
  for (const auto& w : ens.walks) {
    if (!w.ok()) continue;
    ++r.used;
    for (std::size_t i = 0; i < d; ++i) {
      double v = static_cast<double>(w.final_position[i]) / static_cast<double>(ens.horizon);
      s[i] += v;
      s2[i] += v * v;
    }
  }
  require(r.used >= 2, errc::invalid_argument, "velocity needs at least two completed walks");
  const double n = static_cast<double>(r.used);
  for (std::size_t i = 0; i < d; ++i) {
    double m = s[i] / n;
    double var = (s2[i] - n * m * m) / (n - 1);
    double se = std::sqrt(std::max(var, 0.0) / n);
    r.mean.push_back(m);
    r.stderr_.push_back(se);
    r.contains_zero.push_back(std::abs(m) <= k * se);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Moments

struct MomentEstimate {
  double q = 0;
  std::uint64_t samples = 0;
  double value = 0;
  double stderr_ = 0;
  double hill_index = 0;  // tail index estimate from the top sqrt(n) order statistics
  bool warning = false;
  std::string note;
};

inline MomentEstimate moment_from_samples(std::vector<double> xs, double q) {
  require(q > 0, errc::invalid_argument, "moment order must be positive");
  require(xs.size() >= 2, errc::invalid_argument, "moment estimate needs samples");
  MomentEstimate m;
  m.q = q;
  m.samples = xs.size();
  const double n = static_cast<double>(xs.size());
  double s = 0, s2 = 0;
  for (double x : xs) {
    double v = std::pow(x, q);
    s += v;
    s2 += v * v;
  }
  m.value = s / n;
  m.stderr_ = std::sqrt(std::max(0.0, s2 / n - m.value * m.value) / (n - 1));
  std::sort(xs.begin(), xs.end(), std::greater<>());
  auto k = static_cast<std::size_t>(std::sqrt(n));
  double threshold = xs[k];
  double acc = 0;
  for (std::size_t i = 0; i < k; ++i) acc += std::log(xs[i] / threshold);
  m.hill_index = acc > 0 ? static_cast<double>(k) / acc : std::numeric_limits<double>::infinity();
  if (m.hill_index <= q) {
    m.warning = true;
    m.note = "tail index estimate " + std::to_string(m.hill_index) + " <= q; moment may diverge";
  }
  return m;
}

/// Gaps f_{+e_0} at occupied sites of environments drawn from the law.
inline std::vector<double> sample_gaps(const ProcessSpec& spec, const LatticeWindow& window, std::uint64_t samples,
                                       std::uint64_t seed, const SampleOptions& opts = {}) {
  std::vector<double> out;
  out.reserve(samples);
  for (std::uint64_t e = 0; out.size() < samples; ++e) {
    require(e < 100000, errc::rejection_budget_exhausted, "could not collect gap samples");
    auto env = sample(spec, window, derive_key(seed, e), false, opts);
    if (env.count() == 0) continue;
    NeighborTable t(env);
    for (std::size_t id = 0; id < t.size() && out.size() < samples; ++id) out.push_back(t.gap(id, 0));
  }
  return out;
}

inline MomentEstimate moment_estimate(const ProcessSpec& spec, const LatticeWindow& window, double q,
                                      std::uint64_t samples, std::uint64_t seed) {
  return moment_from_samples(sample_gaps(spec, window, samples, seed), q);
}

/// i.i.d. draws from a pmf on {0, 1, ...} by inversion.
inline std::vector<double> sample_pmf(const network::Pmf& f, std::uint64_t samples, std::uint64_t seed) {
  std::vector<double> cdf(f.size());
  double acc = 0;
  for (std::size_t k = 0; k < f.size(); ++k) cdf[k] = acc += f[k];
  CounterRng rng(seed);
  std::vector<double> out(samples);
  for (auto& x : out) {
    double u = rng.uniform() * acc;
    x = static_cast<double>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// CLT

struct CltOptions {
  WalkMode mode = WalkMode::annealed;  // d = 1 only; d >= 2 is always quenched
  double ks_level = 0.01;              // family-wise, Bonferroni across axes
  double variance_tol = 0.05;          // d = 1: relative band on Var(X_n / sqrt n)
  double covariance_tol = 0.10;        // d >= 2: X_n covariance against D
  bool exclude_window_limited = true;
  double moment_q = 2.5;
  std::uint64_t moment_samples = 100000;
  std::uint64_t birkhoff_envs = 1000;
  CorrectorOptions corrector;
  SampleOptions sampling;
};

struct CltReport {
  int dim = 0;
  std::uint64_t horizon = 0;
  std::uint64_t walkers = 0;
  std::uint64_t used = 0;
  std::uint64_t excluded = 0;
  std::uint64_t window_limited = 0;
  WalkMode mode = WalkMode::annealed;
  bool use_corrector = false;
  Eigen::MatrixXd covariance;  // empirical, of X_n/sqrt n (or M_n/sqrt n)
  Eigen::MatrixXd target;
  std::string target_source;
  double gap_mean_analytic = std::numeric_limits<double>::quiet_NaN();
  double gap_mean_birkhoff = std::numeric_limits<double>::quiet_NaN();
  Eigen::MatrixXd D_site;  // d >= 2: site average, for cross-checking
  std::vector<KsResult> ks;
  double ks_level = 0;
  double variance_tol = 0;
  double covariance_tol = 0;
  double covariance_error = 0;  // max |C_ij - T_ij| / max_i T_ii
  bool covariance_ok = false;
  bool ks_ok = false;
  std::vector<std::string> warnings;
  bool passed() const { return covariance_ok && ks_ok; }
};

namespace detail {

inline void finish_clt(CltReport& r, const std::vector<std::vector<double>>& xs, double tol, bool lattice) {
  const auto d = static_cast<std::size_t>(r.dim);
  r.used = xs.size();
  require(r.used >= 2, errc::invalid_argument, "CLT needs at least two usable walks");
  const double n = static_cast<double>(r.used);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(r.dim);
  for (const auto& x : xs)
    for (std::size_t i = 0; i < d; ++i) mean(static_cast<Eigen::Index>(i)) += x[i] / n;
  r.covariance = Eigen::MatrixXd::Zero(r.dim, r.dim);
  for (const auto& x : xs)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        r.covariance(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) +=
            (x[i] - mean(static_cast<Eigen::Index>(i))) * (x[j] - mean(static_cast<Eigen::Index>(j))) / (n - 1);
  double scale = r.target.diagonal().maxCoeff();
  r.covariance_error = (r.covariance - r.target).cwiseAbs().maxCoeff() / scale;
  r.covariance_tol = tol;
  r.covariance_ok = r.covariance_error <= tol;
  r.ks_ok = true;
  for (std::size_t i = 0; i < d; ++i) {
    std::vector<double> col(xs.size());
    for (std::size_t k = 0; k < xs.size(); ++k) col[k] = xs[k][i];
    double var = r.target(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
    auto cdf = [var](double x) { return normal_cdf(x, var); };
    auto ks = lattice ? ks_test_lattice(std::move(col), cdf) : ks_test(std::move(col), cdf);
    r.ks_ok = r.ks_ok && ks.pvalue > r.ks_level / static_cast<double>(d);
    r.ks.push_back(ks);
  }
}

inline double analytic_gap_mean(const ProcessSpec& spec) {
  if (const auto* b = std::get_if<Bernoulli>(&spec)) return 1.0 / b->p;
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

/// X_n / sqrt n against N(0, E[f]^2) in one dimension.
inline CltReport clt_1d(const ProcessSpec& spec, const LatticeWindow& window, std::uint64_t horizon,
                        std::uint64_t walkers, std::uint64_t seed, const CltOptions& opts = {}) {
  require(window.dim() == 1, errc::unsupported_dimension, "clt_1d needs d = 1");
  require(horizon > 0 && walkers >= 2, errc::invalid_argument, "clt_1d needs horizon > 0 and >= 2 walkers");
  CltReport r;
  r.dim = 1;
  r.horizon = horizon;
  r.walkers = walkers;
  r.mode = opts.mode;
  r.ks_level = opts.ks_level;
  r.variance_tol = opts.variance_tol;
  WalkEnsemble ens;
  // Birkhoff average of the gap over the same environment family
  double birk = 0;
  std::uint64_t envs = 0;
  if (opts.mode == WalkMode::annealed) {
    ens = run_annealed(spec, window, {}, horizon, walkers, seed, opts.sampling);
    for (std::uint64_t i = 0; i < std::min(walkers, opts.birkhoff_envs); ++i) {
      auto env = sample(spec, window, annealed_env_seed(walk_seed(seed, i)), true, opts.sampling);
      birk += static_cast<double>(window.side(0)) / static_cast<double>(env.count());
      ++envs;
    }
  } else {
    auto opts_strict = opts.sampling;
    auto env = sample(spec, window, annealed_env_seed(seed), true, opts_strict);
    ens = run_quenched_ensemble(env, {}, horizon, walkers, seed);
    birk = static_cast<double>(window.side(0)) / static_cast<double>(env.count());
    envs = 1;
  }
  r.gap_mean_birkhoff = birk / static_cast<double>(envs);
  r.gap_mean_analytic = detail::analytic_gap_mean(spec);
  double mu = std::isnan(r.gap_mean_analytic) ? r.gap_mean_birkhoff : r.gap_mean_analytic;
  r.target_source = std::isnan(r.gap_mean_analytic) ? "birkhoff" : "analytic";
  r.target = Eigen::MatrixXd::Constant(1, 1, mu * mu);
  std::vector<std::vector<double>> xs;
  const double sn = std::sqrt(static_cast<double>(horizon));
  for (const auto& w : ens.walks) {
    if (!w.ok()) {
      ++r.excluded;
      continue;
    }
    if (w.window_limited) {
      ++r.window_limited;
      if (opts.exclude_window_limited) {
        ++r.excluded;
        continue;
      }
    }
    xs.push_back({static_cast<double>(w.final_position[0]) / sn});
  }
  detail::finish_clt(r, xs, opts.variance_tol, true);
  return r;
}

/// Per-site covariance of the x + chi increment, flattened d*d per site.
inline std::vector<double> site_covariances(const NeighborTable& t, const Field& chi) {
  const auto dd = static_cast<std::size_t>(t.dim() * t.dim());
  std::vector<double> out(t.size() * dd);
  for (std::size_t id = 0; id < t.size(); ++id) {
    auto c = increment_covariance(t, chi, id);
    for (std::size_t k = 0; k < dd; ++k) out[id * dd + k] = c.data()[k];
  }
  return out;
}

/// Quenched test of M_n / sqrt n (use_corrector) or X_n / sqrt n against N(0, D),
/// D the time average of the increment covariance along the same trajectories.
/// The walk lives on the periodic extension of the window, for which chi and D
/// are exact, so wrapping is recorded but not excluded.
inline CltReport clt_hd(const ProcessSpec& spec, const LatticeWindow& window, std::uint64_t horizon,
                        std::uint64_t walkers, std::uint64_t seed, bool use_corrector, const CltOptions& opts = {}) {
  const int d = window.dim();
  require(d >= 2, errc::unsupported_dimension, "clt_hd needs d >= 2");
  require(horizon > 0 && walkers >= 2, errc::invalid_argument, "clt_hd needs horizon > 0 and >= 2 walkers");
  CltReport r;
  r.dim = d;
  r.horizon = horizon;
  r.walkers = walkers;
  r.mode = WalkMode::quenched;
  r.use_corrector = use_corrector;
  r.ks_level = opts.ks_level;
  auto mom = moment_estimate(spec, window, opts.moment_q, opts.moment_samples, derive_key(seed, 0x6d6f6d));
  if (mom.warning) r.warnings.push_back("moment check: " + mom.note);
  auto sampling = opts.sampling;
  sampling.validation = ValidationMode::strict;
  auto env = sample(spec, window, annealed_env_seed(seed), true, sampling);
  NeighborTable t(env);
  auto field = assemble_corrector(t, opts.corrector);
  if (!field.stabilized) r.warnings.push_back("corrector increments not stabilized at the final epsilon");
  auto cov = site_covariances(t, field.chi);
  const auto dd = static_cast<std::size_t>(d * d);
  std::vector<std::vector<double>> xs(walkers);
  std::vector<std::vector<double>> dsum(walkers, std::vector<double>(dd, 0.0));
  std::vector<char> limited(walkers, 0);
  const double sn = std::sqrt(static_cast<double>(horizon));
  parallel_for(walkers, [&](std::size_t w) {
    std::vector<double> last(static_cast<std::size_t>(d));
    std::size_t last_id = 0;
    auto& acc = dsum[w];
    walk_path(t, {}, horizon, walk_seed(seed, w), [&](std::uint64_t k, std::size_t id, const std::int64_t* x) {
      if (k < horizon)
        for (std::size_t j = 0; j < dd; ++j) acc[j] += cov[id * dd + j];
      if (k == horizon) {
        last_id = id;
        for (int i = 0; i < d; ++i) {
          last[static_cast<std::size_t>(i)] = static_cast<double>(x[i]);
          if (2 * std::abs(x[i]) > static_cast<std::int64_t>(window.side(i))) limited[w] = 1;
        }
      }
    });
    for (int i = 0; i < d; ++i) {
      double v = last[static_cast<std::size_t>(i)];
      if (use_corrector) v += field.chi[last_id * d + i];
      last[static_cast<std::size_t>(i)] = v / sn;
    }
    xs[w] = std::move(last);
  });
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t w = 0; w < walkers; ++w) {
    r.window_limited += static_cast<std::uint64_t>(limited[w]);
    for (std::size_t j = 0; j < dd; ++j) D.data()[j] += dsum[w][j];
  }
  D /= static_cast<double>(walkers) * static_cast<double>(horizon);
  r.target = D;
  r.target_source = "martingale increment covariance";
  r.D_site = site_average_D(t, field.chi);
  detail::finish_clt(r, xs, opts.covariance_tol, !use_corrector);
  return r;
}

// ---------------------------------------------------------------------------
// Recurrence / transience

enum class Verdict { recurrent, transient, inconclusive };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::recurrent: return "consistent-with-recurrent";
    case Verdict::transient: return "consistent-with-transient";
    default: return "inconclusive";
  }
}

struct RecurrenceOptions {
  std::uint64_t first_checkpoint = 256;
  double exponent_target = 0.5;
  double exponent_tol = 0.05;
  double green_tail_tol = 1e-4;
  std::uint32_t cutset_levels = 0;  // d = 2; 0 picks the largest that fits
};

struct RecurrenceReport {
  int dim = 0;
  std::vector<std::uint64_t> checkpoints;
  std::vector<double> mean_local_time;  // visits to the origin in 0..n, averaged over walkers
  double exponent = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> green_partial;
  double green_tail_slope = std::numeric_limits<double>::quiet_NaN();
  double cauchy_C = std::numeric_limits<double>::quiet_NaN();
  bool cauchy_holds = false;
  double nash_williams_slope = std::numeric_limits<double>::quiet_NaN();
  Verdict verdict = Verdict::inconclusive;
  std::string basis;
};

inline RecurrenceReport recurrence_report(const ProcessSpec& spec, const LatticeWindow& window, std::uint64_t horizon,
                                          std::uint64_t walkers, std::uint64_t seed,
                                          const RecurrenceOptions& opts = {}) {
  RecurrenceReport r;
  r.dim = window.dim();
  SampleOptions sampling;
  sampling.validation = ValidationMode::strict;
  auto env = sample(spec, window, annealed_env_seed(seed), true, sampling);
  NeighborTable t(env);
  if (r.dim == 1) {
    require(horizon >= 2 * opts.first_checkpoint, errc::invalid_argument, "horizon too short for the return fit");
    for (std::uint64_t n = opts.first_checkpoint; n <= horizon; n *= 2) r.checkpoints.push_back(n);
    std::vector<std::vector<double>> counts(walkers, std::vector<double>(r.checkpoints.size(), 0.0));
    parallel_for(walkers, [&](std::size_t w) {
      std::uint64_t visits = 1;
      std::size_t c = 0;
      const auto last = r.checkpoints.back();
      walk_path(t, {}, last, walk_seed(seed, w), [&](std::uint64_t k, std::size_t, const std::int64_t* x) {
        if (k > 0 && x[0] == 0) ++visits;
        if (c < r.checkpoints.size() && k == r.checkpoints[c]) counts[w][c++] = static_cast<double>(visits);
      });
    });
    std::vector<double> lx, ly;
    for (std::size_t c = 0; c < r.checkpoints.size(); ++c) {
      double m = 0;
      for (const auto& v : counts) m += v[c];
      m /= static_cast<double>(walkers);
      r.mean_local_time.push_back(m);
      lx.push_back(std::log(static_cast<double>(r.checkpoints[c])));
      ly.push_back(std::log(m));
    }
    r.exponent = ls_slope(lx, ly);
    bool ok = std::abs(r.exponent - opts.exponent_target) <= opts.exponent_tol;
    r.verdict = ok ? Verdict::recurrent : Verdict::inconclusive;
    r.basis = "local time at the origin grows like n^" + std::to_string(r.exponent);
  } else if (r.dim == 2) {
    network::Pmf law;
    if (const auto* b = std::get_if<Bernoulli>(&spec))
      law = network::bernoulli_gap_law(b->p, 400);
    else
      law = network::empirical_gap_law(spec, window, 0, 8, derive_key(seed, 0x676170));
    auto ct = network::cauchy_tail_check(law);
    r.cauchy_C = ct.C;
    r.cauchy_holds = ct.holds;
    auto net = network::build_network(env);
    std::uint32_t levels = opts.cutset_levels ? opts.cutset_levels : (window.min_side() - 2) / 2;
    r.nash_williams_slope = network::cutsets(net, levels).log_slope;
    r.verdict = ct.holds ? Verdict::recurrent : Verdict::inconclusive;
    r.basis = std::string("Cauchy tail condition ") + (ct.holds ? "holds" : "fails") +
              "; Nash-Williams partial sums grow with log slope " + std::to_string(r.nash_williams_slope);
  } else {
    auto s = diagnostics(t, {}, horizon);
    r.green_partial = s.green_partial;
    r.green_tail_slope = green_report(s.green_partial).tail_slope;
    r.verdict = r.green_tail_slope <= opts.green_tail_tol ? Verdict::transient : Verdict::inconclusive;
    r.basis = "Green partial sums flatten, tail slope " + std::to_string(r.green_tail_slope);
  }
  return r;
}

}  // namespace dpp
