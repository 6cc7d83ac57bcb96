#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "dpp/env.hpp"
#include "dpp/env_io.hpp"

using namespace dpp;

namespace {

Environment three_sites() { return Environment::from_sites(LatticeWindow({8}), {{0}, {3}, {5}}); }

std::set<std::int64_t> occupied_1d(const Environment& env) {
  std::set<std::int64_t> s;
  for (auto i : env.occupied_indices()) s.insert(static_cast<std::int64_t>(i));
  return s;
}

}  // namespace

TEST(Lattice, IndexRoundTrip) {
  LatticeWindow w({4, 5, 6});
  for (std::uint64_t i = 0; i < w.volume(); ++i) EXPECT_EQ(w.index(w.point(i)), i);
  EXPECT_EQ(w.index({-1, -1, -1}), w.index({3, 4, 5}));
  EXPECT_EQ(LatticeWindow::centered(5, 8), -3);
  EXPECT_EQ(LatticeWindow::centered(4, 8), 4);
}

TEST(Lattice, RejectsBadSides) {
  EXPECT_THROW(LatticeWindow({1}), error);
  EXPECT_THROW(LatticeWindow(std::vector<std::uint32_t>{}), error);
}

TEST(Env, ExplicitEmbedding) {
  auto env = sample(Explicit{{{0}, {3}, {5}}}, LatticeWindow({8}), 1, false);
  EXPECT_EQ(occupied_1d(env), (std::set<std::int64_t>{0, 3, 5}));
}

TEST(Env, FullLatticeFromUnitDensity) {
  auto env = sample(Bernoulli{1.0}, LatticeWindow::cube(2, 6), 9, false);
  EXPECT_EQ(env.count(), 36u);
  for (auto v : env.occupied_indices())
    for (int e = 0; e < 4; ++e) EXPECT_EQ(gap(env, v, e), 1u);
  auto nb = neighbors(env, {0, 0});
  ASSERT_EQ(nb.size(), 4u);
  EXPECT_EQ(nb[0].point, (Point{1, 0}));
  EXPECT_EQ(nb[1].point, (Point{5, 0}));
  EXPECT_EQ(nb[2].point, (Point{0, 1}));
  EXPECT_EQ(nb[3].point, (Point{0, 5}));
}

TEST(Env, GapsOnThreeSites) {
  auto env = three_sites();
  EXPECT_EQ(gap(env, Point{0}, 0), 3u);
  EXPECT_EQ(gap(env, Point{0}, 1), 3u);
  EXPECT_EQ(gap(env, Point{3}, 0), 2u);
  EXPECT_EQ(gap(env, Point{5}, 0), 3u);
  EXPECT_THROW(gap(env, Point{1}, 0), error);
}

TEST(Env, NeighborsOnThreeSites) {
  auto nb = neighbors(three_sites(), {3});
  ASSERT_EQ(nb.size(), 2u);
  EXPECT_EQ(nb[0].point, Point{5});
  EXPECT_EQ(nb[0].dir, 0);
  EXPECT_EQ(nb[1].point, Point{0});
  EXPECT_EQ(nb[1].dir, 1);
}

TEST(Env, ShiftThreeSites) {
  auto s = shift(three_sites(), {3});
  EXPECT_EQ(occupied_1d(s), (std::set<std::int64_t>{0, 2, 5}));
  EXPECT_EQ(shift(three_sites(), {0}), three_sites());
}

TEST(Env, ShiftGroupAction) {
  auto env = sample(Bernoulli{0.4}, LatticeWindow({7, 9}), 3, false);
  for (Point x : {Point{1, 2}, Point{-3, 5}, Point{6, 8}}) {
    Point mx = {-x[0], -x[1]};
    EXPECT_EQ(shift(shift(env, x), mx).occupancy(), env.occupancy());
  }
}

TEST(Env, ConditionedBernoulliDensity) {
  LatticeWindow w = LatticeWindow::cube(2, 64);
  auto env = sample(Bernoulli{0.5}, w, 12345, true);
  EXPECT_TRUE(env.occupied(std::uint64_t{0}));
  double n = static_cast<double>(w.volume() - 1);
  double k = static_cast<double>(env.count() - 1);
  double sigma = std::sqrt(n * 0.25);
  EXPECT_LE(std::abs(k - 0.5 * n), 3 * sigma);
}

TEST(Env, SamplingIsPure) {
  LatticeWindow w({16, 16});
  for (const ProcessSpec& spec : {ProcessSpec{Bernoulli{0.3}}, ProcessSpec{PercolationCluster{0.7}},
                                  ProcessSpec{DeletedBalls{{1.0}, {0.05}}}}) {
    auto a = sample(spec, w, 77, true);
    auto b = sample(spec, w, 77, true);
    EXPECT_EQ(a, b);
    auto c = sample(spec, w, 78, true);
    EXPECT_NE(a.occupancy(), c.occupancy());
  }
}

TEST(Env, NearestNeighbourInvariantsExhaustive) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto env = sample(Bernoulli{0.35}, LatticeWindow({9, 11}), seed, true);
    const auto& w = env.window();
    NeighborTable t(env);
    for (auto v : env.occupied_indices()) {
      for (int e = 0; e < 4; ++e) {
        auto g = gap(env, v, e);
        int axis = axis_of(e);
        std::int64_t s = sign_of(e);
        if (g < w.side(axis)) {
          EXPECT_TRUE(env.occupied(w.step(v, axis, s * g)));
        }
        for (std::uint32_t k = 1; k < g; ++k) EXPECT_FALSE(env.occupied(w.step(v, axis, s * k)));
        auto id = static_cast<std::size_t>(t.id(v));
        EXPECT_EQ(t.gap(id, e), g);
        std::size_t u = t.neighbor(id, e);
        EXPECT_EQ(t.neighbor(u, opposite(e)), id);
        EXPECT_EQ(gap(shift(env, w.point(v)), std::uint64_t{0}, e), g);
      }
    }
  }
}

TEST(Env, ConditionedGapIsGeometric) {
  const double p = 0.4;
  const int envs = 4000;
  std::vector<double> hist_plus(6, 0), hist_minus(6, 0);
  for (int s = 0; s < envs; ++s) {
    auto env = sample(Bernoulli{p}, LatticeWindow({256}), static_cast<std::uint64_t>(s), true);
    auto gp = gap(env, std::uint64_t{0}, 0);
    auto gm = gap(env, std::uint64_t{0}, 1);
    if (gp <= 5) hist_plus[gp] += 1;
    if (gm <= 5) hist_minus[gm] += 1;
  }
  for (int k = 1; k <= 5; ++k) {
    double q = p * std::pow(1 - p, k - 1);
    double sd = std::sqrt(envs * q * (1 - q));
    EXPECT_LE(std::abs(hist_plus[k] - envs * q), 4 * sd) << "k=" << k;
    EXPECT_LE(std::abs(hist_minus[k] - envs * q), 4 * sd) << "k=" << k;
    EXPECT_LE(std::abs(hist_plus[k] - hist_minus[k]), 4 * std::sqrt(2.0) * sd) << "k=" << k;
  }
}

TEST(Env, PercolationFullAndConnected) {
  auto full = sample(PercolationCluster{1.0}, LatticeWindow({6, 6}), 1, false);
  EXPECT_EQ(full.count(), 36u);
  auto env = sample(PercolationCluster{0.6}, LatticeWindow({20, 20}), 4, false);
  EXPECT_GT(env.count(), 100u);
}

TEST(Env, DeletedBallsVolumeWarning) {
  LatticeWindow w({16, 16});
  EXPECT_TRUE(check_spec(DeletedBalls{{1.0}, {0.01}}, w).warnings.empty());
  EXPECT_FALSE(check_spec(DeletedBalls{{3.0}, {0.5}}, w).warnings.empty());
  EXPECT_THROW(check_spec(DeletedBalls{{1.0}, {1.0}}, w), error);
  EXPECT_THROW(check_spec(Bernoulli{0.0}, w), error);
}

TEST(Env, RejectionBudgetExhausted) {
  SampleOptions opts;
  opts.rejection_budget = 20;
  try {
    sample(DeletedBalls{{20.0}, {0.9}}, LatticeWindow({8, 8}), 3, true, opts);
    FAIL() << "expected an error";
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::rejection_budget_exhausted);
  }
}

TEST(Env, StrictRetriesExhausted) {
  SampleOptions opts;
  opts.validation = ValidationMode::strict;
  opts.strict_retries = 3;
  try {
    sample(Bernoulli{0.001}, LatticeWindow({4}), 5, true, opts);
    FAIL() << "expected an error";
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::validation_failed);
  }
}

TEST(Env, StrictSamplingSetsFlag) {
  SampleOptions opts;
  opts.validation = ValidationMode::strict;
  auto env = sample(Bernoulli{0.5}, LatticeWindow({32, 32}), 8, true, opts);
  EXPECT_TRUE(env.strict_validated());
  EXPECT_TRUE(validate(env).strict_ok());
}

TEST(Env, DegenerateLineFlagged) {
  auto env = Environment::from_sites(LatticeWindow({5, 5}), {{0, 0}, {0, 3}});
  auto r = validate(env);
  EXPECT_FALSE(r.strict_ok());
  EXPECT_EQ(r.degenerate_lines, 2u);
  EXPECT_EQ(gap(env, Point{0, 0}, 0), 5u);
}

TEST(EnvIo, RoundTrip) {
  auto env = sample(Bernoulli{0.5}, LatticeWindow({13, 7, 3}), 99, true);
  EXPECT_EQ(load(save(env)), env);
  auto bytes = save(env);
  EXPECT_EQ(bytes.size(), 4u + 1 + 12 + 1 + 8 + (13 * 7 * 3 + 7) / 8 + 4);
}

TEST(EnvIo, DistinctErrors) {
  auto env = sample(Bernoulli{0.5}, LatticeWindow({10, 10}), 1, true);
  auto bytes = save(env);
  auto code_of = [](const std::vector<std::uint8_t>& b) {
    try {
      load(b);
    } catch (const error& e) {
      return e.code();
    }
    return errc::invalid_argument;
  };
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_EQ(code_of(bad), errc::bad_magic);
  bad = bytes;
  bad[4] = 200;
  EXPECT_EQ(code_of(bad), errc::dimension_overflow);
  bad = bytes;
  bad[5] = 0xff;
  bad[6] = 0xff;
  bad[7] = 0xff;
  bad[8] = 0xff;
  EXPECT_EQ(code_of(bad), errc::dimension_overflow);
  bad.assign(bytes.begin(), bytes.end() - 6);
  EXPECT_EQ(code_of(bad), errc::truncated_payload);
  bad = bytes;
  bad[bytes.size() - 6] ^= 0x10;
  EXPECT_EQ(code_of(bad), errc::checksum_mismatch);
  EXPECT_EQ(code_of({}), errc::bad_magic);
}

TEST(EnvIo, EmptyPayloadFailsStrict) {
  Environment empty(LatticeWindow({4, 4}), std::vector<std::uint8_t>(16, 0));
  auto bytes = save(empty);
  EXPECT_NO_THROW(load(bytes));
  try {
    load(bytes, ValidationMode::strict);
    FAIL() << "expected an error";
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::validation_failed);
  }
}

TEST(EnvIo, SpecJsonRoundTrip) {
  ProcessSpec specs[] = {Bernoulli{0.25}, DeletedBalls{{1, 2.5}, {0.1, 0.01}}, PercolationCluster{0.8},
                         Explicit{{{0, 1}, {2, 3}}}};
  for (const auto& s : specs) {
    auto back = spec_from_json(spec_to_json(s));
    EXPECT_EQ(spec_to_json(back), spec_to_json(s));
  }
  EXPECT_EQ(std::get<Bernoulli>(parse_spec("bernoulli:p=0.5")).p, 0.5);
  auto db = std::get<DeletedBalls>(parse_spec("deleted_balls:r=1,2;p=0.1,0.2"));
  EXPECT_EQ(db.radii, (std::vector<double>{1, 2}));
  EXPECT_EQ(db.probs, (std::vector<double>{0.1, 0.2}));
  EXPECT_THROW(parse_spec("gaussian:s=1"), error);
  EXPECT_THROW(parse_spec("{\"kind\":\"bernoulli\"}"), error);
}
