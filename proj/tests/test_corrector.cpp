#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "dpp/corrector.hpp"

using namespace dpp;

namespace {

Environment three_sites() { return Environment::from_sites(LatticeWindow({8}), {{0}, {3}, {5}}); }

Environment bernoulli_env(std::uint32_t side, std::uint64_t seed) {
  SampleOptions opts;
  opts.validation = ValidationMode::strict;
  return sample(Bernoulli{0.5}, LatticeWindow({side, side}), seed, true, opts);
}

}  // namespace

TEST(Kernel, SymmetricAndContracting) {
  NeighborTable t(bernoulli_env(16, 1));
  CounterRng rng(5);
  std::vector<double> f(t.size()), g(t.size()), lf, lg;
  for (int trial = 0; trial < 5; ++trial) {
    for (auto& v : f) v = rng.uniform() - 0.5;
    for (auto& v : g) v = rng.uniform() - 0.5;
    apply_lambda(t, f, lf);
    apply_lambda(t, g, lg);
    double a = 0, b = 0, nf = 0, nlf = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      a += f[i] * lg[i];
      b += lf[i] * g[i];
      nf += f[i] * f[i];
      nlf += lf[i] * lf[i];
    }
    EXPECT_NEAR(a, b, 1e-12);
    EXPECT_LE(nlf, nf);
  }
}

TEST(Drift, FullLatticeIsZero) {
  NeighborTable t(Environment::full(LatticeWindow::cube(2, 8)));
  for (double v : drift(t)) EXPECT_EQ(v, 0.0);
}

TEST(Drift, ThreeSites) {
  NeighborTable t(three_sites());
  auto v = drift(t);
  EXPECT_EQ(v[t.id(0)], 0.0);
  EXPECT_EQ(v[t.id(3)], -0.5);
  EXPECT_EQ(v[t.id(5)], 0.5);
}

TEST(Solve, ZeroAndConstantFields) {
  NeighborTable t(bernoulli_env(12, 2));
  Field zero(t.size() * 2, 0.0);
  auto s0 = solve_psi(t, zero, 0.1, 1e-12);
  for (double v : s0.psi) EXPECT_EQ(v, 0.0);
  Field c(t.size() * 2, 0.0);
  for (std::size_t id = 0; id < t.size(); ++id) {
    c[id * 2] = 1.5;
    c[id * 2 + 1] = -0.25;
  }
  auto sc = solve_psi(t, c, 0.125, 1e-12);
  for (std::size_t id = 0; id < t.size(); ++id) {
    EXPECT_NEAR(sc.psi[id * 2], 12.0, 1e-10);
    EXPECT_NEAR(sc.psi[id * 2 + 1], -2.0, 1e-10);
  }
}

TEST(Solve, ThreeSitesByHand) {
  // every site neighbours the other two, so (1.1 - Lambda) psi = V reads
  // 1.1 a - (b + c)/2 = V_a; with V = (0, -1/2, 1/2) the solution is (0, -5/16, 5/16).
  NeighborTable t(three_sites());
  auto s = solve_psi(t, drift(t), 0.1, 1e-13);
  EXPECT_NEAR(s.psi[t.id(0)], 0.0, 1e-10);
  EXPECT_NEAR(s.psi[t.id(3)], -0.3125, 1e-10);
  EXPECT_NEAR(s.psi[t.id(5)], 0.3125, 1e-10);
  EXPECT_LE(s.residual[0], 1e-13);
  // harmonicity residual of x + psi is eps |psi| = 0.03125 at sites 3 and 5
  EXPECT_NEAR(harmonicity_residual(t, s.psi), 0.03125, 1e-10);
}

TEST(Solve, ResidualMeetsToleranceOnSchedule) {
  NeighborTable t(bernoulli_env(32, 3));
  auto v = drift(t);
  for (double eps : default_schedule()) {
    auto s = solve_psi(t, v, eps, 1e-10);
    for (double r : s.residual) EXPECT_LE(r, 1e-10);
  }
}

TEST(Solve, IterationCapReported) {
  NeighborTable t(bernoulli_env(32, 3));
  auto b = component(drift(t), 2, 0);
  try {
    solve_scalar(t, b, 1e-4, 1e-14, nullptr, 3);
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::solver_not_converged);
  }
}

TEST(Corrector, FullLatticeDegenerate) {
  NeighborTable t(Environment::full(LatticeWindow::cube(2, 16)));
  auto f = assemble_corrector(t);
  for (double v : f.psi) EXPECT_EQ(v, 0.0);
  for (double v : f.chi) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(harmonicity_residual(t, f.chi), 0.0);
  EXPECT_TRUE(f.stabilized);
  auto r = sublinearity(t, f, 4);
  for (double v : r.box.fraction_cube) EXPECT_EQ(v, 0.0);
  for (const auto& a : r.axes)
    for (double v : a.ratio) EXPECT_EQ(v, 0.0);
}

TEST(Corrector, PathIndependence) {
  auto env = bernoulli_env(16, 4);
  NeighborTable t(env);
  auto f = assemble_corrector(t);
  EXPECT_LE(f.cocycle_residual, 1e-12);
  auto tr = run_quenched(t, {}, 400, 9);
  std::vector<std::size_t> path;
  for (std::size_t k = 0; k < tr.length(); ++k) {
    path.push_back(static_cast<std::size_t>(t.id(tr.sites[k])));
    if (k % 37 != 0) continue;
    auto c = chi_along_path(t, f.psi, path);
    for (int i = 0; i < 2; ++i) EXPECT_NEAR(c[static_cast<std::size_t>(i)], f.chi[path.back() * 2 + i], 1e-8);
  }
}

TEST(Corrector, ScheduleTrends) {
  NeighborTable t(bernoulli_env(64, 5));
  auto f = assemble_corrector(t);
  for (std::size_t k = 1; k < f.schedule.size(); ++k) {
    EXPECT_LT(f.eps_norm[k], f.eps_norm[k - 1]) << k;
    EXPECT_LT(f.harmonicity[k], f.harmonicity[k - 1]) << k;
  }
  for (double r : f.solver_residual) EXPECT_LE(r, 1e-10);
  double eps = f.schedule.back();
  EXPECT_LE(harmonicity_residual(t, f.chi), 10 * (eps + f.tol) * f.max_gap);
}

TEST(Martingale, FullLatticeCovariance) {
  auto env = Environment::full(LatticeWindow::cube(2, 16));
  NeighborTable t(env);
  auto f = assemble_corrector(t);
  std::vector<Trajectory> trs;
  for (std::uint64_t s = 0; s < 5; ++s) trs.push_back(run_quenched(t, {}, 100, s));
  auto m = martingale_check(t, f.chi, trs);
  EXPECT_TRUE(m.consistent);
  EXPECT_EQ(m.visits, 500u);
  EXPECT_DOUBLE_EQ(m.D(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(m.D(1, 1), 0.5);
  EXPECT_EQ(m.D(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(m.D_site(0, 0), 0.5);
  for (std::size_t k = 0; k < trs.size(); ++k)
    EXPECT_EQ(m.final_M[k][0], static_cast<double>(trs[k].lifted(100)[0]));
}

TEST(Martingale, RandomEnvironmentConsistent) {
  NeighborTable t(bernoulli_env(24, 6));
  auto f = assemble_corrector(t);
  std::vector<Trajectory> trs;
  for (std::uint64_t s = 0; s < 10; ++s) trs.push_back(run_quenched(t, {}, 300, s));
  auto m = martingale_check(t, f.chi, trs);
  EXPECT_TRUE(m.consistent);
  EXPECT_NEAR(m.D(0, 1), m.D(1, 0), 1e-15);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.D_site);
  EXPECT_GE(es.eigenvalues().minCoeff(), 0.0);
}

TEST(Corrector, CsvHeader) {
  NeighborTable t(three_sites());
  CorrectorOptions opts;
  opts.schedule = {0.5, 0.25};
  auto f = assemble_corrector(t, opts);
  std::ostringstream os;
  write_corrector_csv(os, t, f);
  EXPECT_EQ(os.str().substr(0, 14), "x0,chi0,psi0\n0");
}
