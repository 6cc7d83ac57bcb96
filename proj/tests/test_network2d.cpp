#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "dpp/network2d.hpp"

using namespace dpp;
using namespace dpp::network;

TEST(Network, FullLatticeHasUnitConductances) {
  auto net = build_network(Environment::full(LatticeWindow::cube(2, 8)));
  EXPECT_EQ(net.edges.size(), 128u);
  EXPECT_EQ(net.vertices.size(), 64u);
  for (const auto& e : net.edges) EXPECT_EQ(e.conductance, 1u);
  for (const auto& v : net.vertices) EXPECT_EQ(v.layer, 0);
}

TEST(Network, SingleLongEdgeSubdivided) {
  // Row y = 0 holds occupied x = 0 and x = 3 on a side-6 torus, so the base
  // edge 0 -> 3 has length 3 and becomes three unit edges of conductance 3.
  LatticeWindow w({6, 6});
  std::vector<Point> sites;
  for (std::int64_t y = 0; y < 6; ++y) {
    sites.push_back({0, y});
    sites.push_back({3, y});
  }
  auto env = Environment::from_sites(w, sites);
  auto net = build_network(env);
  int found = 0;
  for (std::size_t i = 0; i < net.base_edges.size(); ++i) {
    const auto& be = net.base_edges[i];
    if (be.minus_site != w.index({0, 0}) || be.axis != 0) continue;
    EXPECT_EQ(be.length, 3u);
    EXPECT_EQ(be.plus_site, w.index({3, 0}));
    for (const auto& e : net.edges) {
      if (e.origin != i) continue;
      ++found;
      EXPECT_EQ(e.conductance, 3u);
      auto lu = net.vertices[e.u].layer, lv = net.vertices[e.v].layer;
      EXPECT_TRUE(lu == 0 || lu == 1);
      EXPECT_TRUE(lv == 0 || lv == 1);
    }
  }
  EXPECT_EQ(found, 3);
  EXPECT_EQ(net.edges.size(), net.total_base_length());
}

TEST(Network, IdentifiedDegreeIsSumOfLayers) {
  auto env = sample(Bernoulli{0.4}, LatticeWindow({10, 10}), 3, true);
  auto net = build_network(env);
  std::vector<int> deg(net.vertices.size(), 0), deg1(net.vertices.size(), 0), deg2(net.vertices.size(), 0);
  for (const auto& e : net.edges) {
    int axis = net.base_edges[e.origin].axis;
    for (auto v : {e.u, e.v}) {
      ++deg[v];
      ++(axis == 0 ? deg1 : deg2)[v];
    }
  }
  for (std::size_t v = 0; v < net.vertices.size(); ++v) {
    if (net.vertices[v].layer == 0) {
      EXPECT_EQ(deg1[v], 2);
      EXPECT_EQ(deg2[v], 2);
      EXPECT_EQ(deg[v], 4);
    } else {
      EXPECT_EQ(deg[v], 2);
      EXPECT_EQ(net.vertices[v].layer == 1 ? deg1[v] : deg2[v], 2);
    }
  }
}

TEST(Network, RejectsOtherDimensions) {
  try {
    build_network(Environment::full(LatticeWindow::cube(3, 4)));
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::unsupported_dimension);
  }
}

TEST(Network, SubdivisionExact) {
  for (std::uint64_t s = 0; s < 3; ++s) {
    auto net = build_network(sample(Bernoulli{0.3}, LatticeWindow({24, 24}), s, true));
    auto c = check_subdivision(net);
    EXPECT_EQ(c.consistent, c.base_edges);
  }
}

TEST(Cutsets, FullLatticeHandCount) {
  auto net = build_network(Environment::full(LatticeWindow::cube(2, 32)));
  auto rep = cutsets(net, 15);
  double nw = 0;
  for (const auto& lvl : rep.levels) {
    EXPECT_EQ(lvl.conductance, 8.0 * lvl.n + 4.0) << lvl.n;
    EXPECT_EQ(lvl.edges.size(), 8u * lvl.n + 4u);
    nw += 1.0 / (8.0 * lvl.n + 4.0);
    EXPECT_DOUBLE_EQ(lvl.nash_williams, nw);
  }
}

TEST(Cutsets, NashWilliamsLogGrowth) {
  auto net = build_network(Environment::full(LatticeWindow::cube(2, 256)));
  auto rep = cutsets(net, 127);
  // sum 1/(8m + 4) grows like (1/8) log n.
  EXPECT_NEAR(rep.log_slope, 0.125, 0.01);
}

TEST(Cutsets, DisjointAndSeparating) {
  auto env = sample(Bernoulli{0.5}, LatticeWindow({20, 20}), 7, true);
  auto net = build_network(env);
  auto rep = cutsets(net, 9);
  std::set<std::uint32_t> seen;
  for (const auto& lvl : rep.levels) {
    for (auto e : lvl.edges) EXPECT_TRUE(seen.insert(e).second);
    EXPECT_TRUE(separates(net, lvl)) << lvl.n;
    EXPECT_GT(lvl.conductance, 0.0);
  }
}

TEST(Cutsets, WindowLimit) {
  auto net = build_network(Environment::full(LatticeWindow::cube(2, 10)));
  EXPECT_NO_THROW(cutsets(net, 4));
  try {
    cutsets(net, 5);
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::window_limit);
  }
}

TEST(ConductanceLaw, BernoulliMasses) {
  auto c = size_biased(bernoulli_gap_law(0.5, 200));
  EXPECT_NEAR(c[1], 0.25, 1e-15);
  EXPECT_NEAR(c[2], 0.25, 1e-15);
  EXPECT_NEAR(c[3], 0.1875, 1e-15);
  double total = 0;
  for (double v : c) total += v;
  EXPECT_NEAR(total, 1.0, 1e-12);
  auto f = bernoulli_gap_law(0.5, 200);
  EXPECT_NEAR(mean(f), 2.0, 1e-12);
}

TEST(ConductanceLaw, FullLatticePointMass) {
  auto law = conductance_law(Bernoulli{1.0}, LatticeWindow({64, 64}), 10000, 1);
  EXPECT_EQ(law.empirical[1], 1.0);
  EXPECT_EQ(law.tv, 0.0);
}

TEST(ConductanceLaw, EmpiricalGapLawForOtherSpecs) {
  auto law = conductance_law(PercolationCluster{0.8}, LatticeWindow({96, 96}), 20000, 5, 4);
  EXPECT_LT(law.tv, 0.05);
}

TEST(CauchyTail, GeometricHolds) {
  auto r = cauchy_tail_check(bernoulli_gap_law(0.5, 60));
  EXPECT_TRUE(r.holds);
  EXPECT_GT(r.C, 0.0);
  // sum_{k >= N} k p (1-p)^{k-1} = (1-p)^{N-1} (N - 1 + 1/p); at p = 1/2,
  // N T(N) = 2, 3, 3, 2.5, ... for N = 1, 2, 3, 4.
  EXPECT_NEAR(r.C, 3.0, 1e-9);
}

TEST(CauchyTail, PointMassHolds) {
  Pmf f = {0.0, 1.0};
  EXPECT_TRUE(cauchy_tail_check(f).holds);
}

TEST(CauchyTail, HeavyTailFails) {
  Pmf f(10001, 0.0);
  double z = 0;
  for (std::size_t k = 1; k < f.size(); ++k) z += f[k] = std::pow(static_cast<double>(k), -2.5);
  for (auto& v : f) v /= z;
  auto r = cauchy_tail_check(f);
  EXPECT_FALSE(r.holds);
  EXPECT_GT(r.slope, 0.3);
}

TEST(HittingProbabilities, NetworkMatchesWalk) {
  for (std::uint64_t s = 0; s < 3; ++s) {
    SampleOptions opts;
    opts.validation = ValidationMode::strict;
    auto env = sample(Bernoulli{0.5}, LatticeWindow({7, 6}), s, true, opts);
    auto occ = env.occupied_indices();
    std::uint64_t a = occ.front(), b = occ.back();
    auto h1 = hitting_base(env, a, b);
    auto hw = hitting_walk(env, a, b);
    auto net = build_network(env);
    auto hg = hitting_subdivided(env, net, a, b);
    ASSERT_EQ(h1.size(), hw.size());
    EXPECT_LE((h1 - hw).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((h1 - hg).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Network, EdgeCsv) {
  auto net = build_network(Environment::full(LatticeWindow::cube(2, 3)));
  std::ostringstream os;
  write_edges_csv(os, net);
  EXPECT_EQ(os.str().substr(0, 43), "u_layer,u_x,u_y,v_layer,v_x,v_y,conductance");
}
