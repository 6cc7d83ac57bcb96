#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "dpp/isoperimetry.hpp"

using namespace dpp;

namespace {

FiniteSet diagonal() { return FiniteSet(2, {{1, 1}, {2, 2}, {3, 3}}); }

}  // namespace

TEST(FiniteSet, RejectsNonPositiveCoordinates) {
  EXPECT_THROW(FiniteSet(2, {{0, 1}}), error);
  EXPECT_THROW(FiniteSet(2, {{1, 1, 1}}), error);
  EXPECT_EQ(FiniteSet(1, {{2}, {2}, {1}}).size(), 2u);
}

TEST(Projection, DropsOneCoordinate) {
  auto p = project(diagonal(), 0);
  EXPECT_EQ(p, FiniteSet(1, {{1}, {2}, {3}}));
  EXPECT_EQ(project(FiniteSet(2, {{1, 1}, {1, 2}}), 1).size(), 1u);
  EXPECT_EQ(project(FiniteSet(3, {{4, 5, 6}}), 2), FiniteSet(2, {{4, 5}}));
}

TEST(Squeeze, Diagonal) {
  auto a = diagonal();
  auto s = squeeze(a, 0);
  EXPECT_EQ(s, FiniteSet(2, {{1, 1}, {1, 2}, {1, 3}}));
  EXPECT_EQ(energy(a), 12);
  EXPECT_EQ(energy(s), 9);
  EXPECT_EQ(project(a, 0).size(), 3u);
  EXPECT_EQ(project(s, 0).size(), 3u);
  EXPECT_EQ(project(a, 1).size(), 3u);
  EXPECT_EQ(project(s, 1).size(), 1u);
}

TEST(Squeeze, AlreadySqueezedIsFixed) {
  FiniteSet a(2, {{1, 1}, {1, 2}});
  EXPECT_EQ(squeeze(a, 0), a);
  EXPECT_EQ(squeeze(a, 1), a);
}

TEST(Squeeze, RandomSetsThreeDimensions) {
  CounterRng rng(4);
  for (int t = 0; t < 500; ++t) {
    std::vector<Point> pts;
    auto n = 1 + rng.below(8);
    for (std::uint64_t i = 0; i < n; ++i)
      pts.push_back({1 + static_cast<std::int64_t>(rng.below(5)), 1 + static_cast<std::int64_t>(rng.below(5)),
                     1 + static_cast<std::int64_t>(rng.below(5))});
    FiniteSet a(3, pts);
    for (int j = 0; j < 3; ++j) EXPECT_TRUE(squeeze_properties(a, j).all());
    auto fp = squeeze_fixpoint(a);
    for (int j = 0; j < 3; ++j) EXPECT_EQ(squeeze(fp.set, j), fp.set);
    std::uint64_t sum = 0;
    for (int j = 0; j < 3; ++j) sum += project(fp.set, j).size();
    EXPECT_EQ(boundary_edges(fp.set), 2 * sum);
  }
}

TEST(Fixpoint, DiagonalBothSchedules) {
  auto a = squeeze_fixpoint(diagonal(), {0, 1});
  auto b = squeeze_fixpoint(diagonal(), {1, 0});
  EXPECT_EQ(a.set, FiniteSet(2, {{1, 1}, {1, 2}, {1, 3}}));
  EXPECT_EQ(b.set, FiniteSet(2, {{1, 1}, {2, 1}, {3, 1}}));
  EXPECT_EQ(energy(a.set), energy(b.set));
  EXPECT_EQ(a.energies, (std::vector<std::int64_t>{12, 9}));
}

TEST(Fixpoint, SingletonGoesToCorner) {
  auto fp = squeeze_fixpoint(FiniteSet(3, {{4, 2, 7}}));
  EXPECT_EQ(fp.set, FiniteSet(3, {{1, 1, 1}}));
}

TEST(Fixpoint, EnergyStrictlyDecreases) {
  auto fp = squeeze_fixpoint(FiniteSet(2, {{5, 1}, {1, 5}, {3, 3}, {4, 4}, {2, 6}}));
  for (std::size_t i = 1; i < fp.energies.size(); ++i) EXPECT_LT(fp.energies[i], fp.energies[i - 1]);
  EXPECT_THROW(squeeze_fixpoint(FiniteSet(2, {})), error);
  EXPECT_THROW(squeeze_fixpoint(diagonal(), {0, 0}), error);
}

TEST(Boundary, UnitSquareAndBar) {
  EXPECT_EQ(boundary_edges(FiniteSet(2, {{1, 1}})), 4u);
  EXPECT_EQ(boundary_edges(FiniteSet(2, {{1, 1}, {1, 2}, {1, 3}})), 8u);
  EXPECT_EQ(boundary_edges(diagonal()), 12u);
}

TEST(Isoperimetry, CubeRatioIsOne) {
  for (int d = 1; d <= 3; ++d) {
    for (int m = 1; m <= 4; ++m) {
      std::vector<Point> pts;
      Point x(static_cast<std::size_t>(d), 1);
      int total = 1;
      for (int i = 0; i < d; ++i) total *= m;
      for (int c = 0; c < total; ++c) {
        int r = c;
        for (int i = 0; i < d; ++i) {
          x[static_cast<std::size_t>(i)] = 1 + r % m;
          r /= m;
        }
        pts.push_back(x);
      }
      auto chk = isoperimetric_check(FiniteSet(d, pts));
      EXPECT_EQ(chk.max_projection, static_cast<std::size_t>(total / m));
      EXPECT_NEAR(chk.ratio, 1.0, 1e-12);
    }
  }
  EXPECT_EQ(isoperimetric_check(FiniteSet(2, {{3, 3}})).ratio, 1.0);
}

TEST(Isoperimetry, ExhaustiveFourByFour) {
  auto r = exhaustive_squeeze_check(4, 6);
  EXPECT_EQ(r.sets, 14892u);
  EXPECT_EQ(r.pairs, 2 * 14892u);
  EXPECT_TRUE(r.ok());
  // |A| <= |P1(A)| |P2(A)|, so the ratio is >= 1, with equality for squares
  EXPECT_GT(r.min_ratio, 0.0);
  EXPECT_NEAR(r.min_ratio, 1.0, 1e-12);
}

TEST(SetLiteral, RoundTrip) {
  auto a = parse_set("(1,2) (3,4)\n(2,2)");
  EXPECT_EQ(a, FiniteSet(2, {{1, 2}, {3, 4}, {2, 2}}));
  EXPECT_EQ(format_set(a), "(1,2) (2,2) (3,4)");
  EXPECT_EQ(parse_set(format_set(a)), a);
  EXPECT_EQ(parse_set("1,1 2,1"), FiniteSet(2, {{1, 1}, {2, 1}}));
  EXPECT_THROW(parse_set("(1,2) (3)"), error);
  EXPECT_THROW(parse_set("(1,x)"), error);
  EXPECT_THROW(parse_set(""), error);
}

TEST(Profile, CompleteGraphWithLoops) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Constant(4, 4, 0.25);
  auto prof = conductance_profile(p, 3);
  EXPECT_TRUE(prof.exact);
  EXPECT_DOUBLE_EQ(prof.phi[1], 0.75);
  EXPECT_DOUBLE_EQ(prof.phi[2], 0.5);
  EXPECT_DOUBLE_EQ(prof.phi[3], 0.25);
  std::ostringstream os;
  write_profile_csv(os, prof);
  EXPECT_EQ(os.str().substr(0, 6), "u,phi\n");
}

TEST(Profile, CycleMatchesBruteForce) {
  // lazy walk on a 12-cycle: the best set of size k is an arc with boundary 2 * 1/4
  const int n = 12;
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    p(i, i) = 0.5;
    p(i, (i + 1) % n) = 0.25;
    p(i, (i + n - 1) % n) = 0.25;
  }
  auto prof = conductance_profile(p, 11);
  for (int k = 1; k <= 11; ++k) EXPECT_NEAR(prof.phi[static_cast<std::size_t>(k)], 0.5 / k, 1e-15);
}

TEST(Profile, RandomizedModeIsUpperBound) {
  const int n = 30;
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    p(i, i) = 0.5;
    p(i, (i + 1) % n) = 0.25;
    p(i, (i + n - 1) % n) = 0.25;
  }
  auto prof = conductance_profile(p, 10, 500, 1);
  EXPECT_FALSE(prof.exact);
  for (int k = 1; k <= 10; ++k) EXPECT_NEAR(prof.phi[static_cast<std::size_t>(k)], 0.5 / k, 1e-12);
}

TEST(MorrisPeres, TwoStateLazyChain) {
  for (double gamma : {0.1, 0.25, 0.4, 0.5}) {
    Eigen::MatrixXd p(2, 2);
    p << gamma, 1 - gamma, 1 - gamma, gamma;
    auto prof = conductance_profile(p, 1);
    EXPECT_DOUBLE_EQ(prof.phi[1], 1 - gamma);
    for (double eps : {0.5, 0.1, 1e-3}) {
      auto c = morris_peres_check(p, prof, gamma, eps);
      double need = 1 + 4 * std::log(2 / eps) / (gamma * gamma);
      EXPECT_EQ(c.required_n, static_cast<std::uint64_t>(std::ceil(need)));
      EXPECT_NEAR(c.observed_error, std::pow(std::abs(2 * gamma - 1), static_cast<double>(c.required_n)), 1e-12);
      EXPECT_TRUE(c.holds);
    }
  }
}

TEST(MorrisPeres, LazyCycle) {
  const int n = 10;
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    p(i, i) = 0.5;
    p(i, (i + 1) % n) = 0.25;
    p(i, (i + n - 1) % n) = 0.25;
  }
  auto prof = conductance_profile(p, 5);
  auto c = morris_peres_check(p, prof, 0.5, 0.01);
  EXPECT_TRUE(c.holds);
  EXPECT_THROW(morris_peres_check(p, prof, 0.6, 0.01), error);
}
