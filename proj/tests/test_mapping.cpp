#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "objnav/mapping.hpp"

using namespace objnav;

namespace {

WorldGrid open_world(int w, int h) { return WorldGrid{Grid<CellClass>(w, h, CellClass::Free), 0.05, 0}; }

SemanticMapStack random_stack(int n, std::uint64_t seed) {
  SemanticMapStack m(n, {0, 0}, 0.05);
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (float& v : m.values()) v = u(rng);
  return m;
}

// Writes a window back into `dst` at the window's origin.
void paste(SemanticMapStack& dst, const SemanticMapStack& win) {
  const int ox = win.origin().x - dst.origin().x, oy = win.origin().y - dst.origin().y;
  for (int c = 0; c < kMapChannels; ++c)
    for (int y = 0; y < win.size(); ++y)
      for (int x = 0; x < win.size(); ++x)
        if (dst.contains(ox + x, oy + y)) dst.at(c, ox + x, oy + y) = win.at(c, x, y);
}

// Line of sight between two world points, sampled finely against the grid.
// Obstacles are shrunk by `tol` so rays grazing a corner count as clear.
bool line_of_sight(const WorldGrid& w, double x0, double y0, double x1, double y1, Cell target, double tol = 0.0) {
  const double len = std::hypot(x1 - x0, y1 - y0);
  const int n = static_cast<int>(len / 0.0005) + 1;
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    const double px = x0 + t * (x1 - x0), py = y0 + t * (y1 - y0);
    const Cell c = w.cell_at(px, py);
    if (c == target) return true;
    if (is_free(w.class_of(c))) continue;
    const double fx = px / w.resolution - c.x, fy = py / w.resolution - c.y;
    const double inset = std::min({fx, 1.0 - fx, fy, 1.0 - fy}) * w.resolution;
    if (inset > tol) return false;
  }
  return true;
}

// Some point on the cell boundary is visible from (x0, y0).
bool cell_visible(const WorldGrid& w, double x0, double y0, Cell c) {
  const double r = w.resolution;
  for (int k = 0; k <= 100; ++k) {
    const double f = k / 100.0;
    const double pts[4][2] = {{c.x + f, c.y + 0.0}, {c.x + f, c.y + 1.0}, {c.x + 0.0, c.y + f}, {c.x + 1.0, c.y + f}};
    for (const auto& p : pts) {
      const double px = std::clamp(p[0], c.x + 1e-6, c.x + 1 - 1e-6) * r;
      const double py = std::clamp(p[1], c.y + 1e-6, c.y + 1 - 1e-6) * r;
      if (line_of_sight(w, x0, y0, px, py, c, 1e-3)) return true;
    }
  }
  return false;
}

}  // namespace

TEST(Mapping, SingleRayHittingBed) {
  WorldGrid w = open_world(100, 100);
  w.cells(60, 50) = CellClass::Bed;
  const AgentState pose{2.025, 2.525, 0.0};
  SensorParams sp;
  sp.ray_count = 1;
  const Observation o = raycast_observe(w, pose, sp);
  ASSERT_TRUE(o.rays[0].hit_cell);
  EXPECT_NEAR(o.rays[0].hit_distance, 0.975, 0.025);

  SemanticMapStack m(100, {0, 0}, 0.05);
  integrate_observation_inplace(m, o);
  EXPECT_EQ(m.explored_count(), o.rays[0].swept.size() + 1);
  int obstacles = 0;
  for (float v : m.channel(kObstacleChannel)) obstacles += v > 0.5f;
  EXPECT_EQ(obstacles, 1);
  EXPECT_EQ(m.at(kObstacleChannel, 60, 50), 1.0f);
  EXPECT_EQ(m.at(semantic_channel(CellClass::Bed), 60, 50), 1.0f);
  for (Cell s : o.rays[0].swept) {
    EXPECT_EQ(m.at(kExploredChannel, s.x, s.y), 1.0f);
    EXPECT_EQ(m.at(kObstacleChannel, s.x, s.y), 0.0f);
  }
}

TEST(Mapping, IntegrationIsIdempotent) {
  const WorldGrid w = generate_world(12);
  AgentState pose;
  for (std::size_t i = 0; i < w.cells.size(); ++i)
    if (w.cells.values()[i] == CellClass::Free && i > w.cells.size() / 2) {
      std::tie(pose.x, pose.y) = w.center_of(w.cells.cell_of(i));
      break;
    }
  SemanticMapStack m = SemanticMapStack::global_for(pose, w.resolution);
  const Observation o = raycast_observe(w, pose);
  const SemanticMapStack once = integrate_observation(m, o);
  EXPECT_EQ(integrate_observation(once, o), once);
  EXPECT_EQ(once.channels(), 18);
}

TEST(Mapping, ExploredCountNeverDecreases) {
  const WorldGrid w = generate_world(13);
  AgentState pose;
  for (std::size_t i = w.cells.size() / 2; i < w.cells.size(); ++i)
    if (w.cells.values()[i] == CellClass::Free) {
      std::tie(pose.x, pose.y) = w.center_of(w.cells.cell_of(i));
      break;
    }
  SemanticMapStack m = SemanticMapStack::global_for(pose, w.resolution);
  std::size_t last = 0;
  for (int k = 0; k < 30; ++k) {
    integrate_observation_inplace(m, raycast_observe(w, pose));
    EXPECT_GE(m.explored_count(), last);
    last = m.explored_count();
    pose = step_dynamics(w, pose, {0.5, 0.6}, 0.1);
  }
}

TEST(Mapping, FullScanMatchesVisibilityOracle) {
  // closed 3 m x 2 m room with a pillar, agent off-center
  WorldGrid w = open_world(80, 60);
  for (int x = 0; x < 80; ++x) w.cells(x, 0) = w.cells(x, 59) = CellClass::Obstacle;
  for (int y = 0; y < 60; ++y) w.cells(0, y) = w.cells(79, y) = CellClass::Obstacle;
  for (int y = 25; y < 32; ++y)
    for (int x = 45; x < 50; ++x) w.cells(x, y) = CellClass::Chair;
  const AgentState pose{1.2, 1.3, 0.0};
  SensorParams sp;
  sp.ray_count = 3000;
  SemanticMapStack m(80, {0, 0}, 0.05);
  for (int k = 0; k < 4; ++k) {
    AgentState p = pose;
    p.theta = normalize_angle(k * std::numbers::pi / 2);
    integrate_observation_inplace(m, raycast_observe(w, p, sp));
  }
  int checked = 0;
  for (int y = 0; y < 60; ++y)
    for (int x = 0; x < 80; ++x) {
      const auto [cx, cy] = w.center_of({x, y});
      const bool center_visible = line_of_sight(w, pose.x, pose.y, cx, cy, {x, y});
      const bool explored = m.at(kExploredChannel, x, y) > 0.5f;
      if (center_visible) EXPECT_TRUE(explored) << x << "," << y;
      if (explored && !center_visible) EXPECT_TRUE(cell_visible(w, pose.x, pose.y, {x, y})) << x << "," << y;
      if (explored) EXPECT_EQ(m.at(kObstacleChannel, x, y) > 0.5f, !is_free(w.cells(x, y)));
      checked += center_visible;
    }
  EXPECT_GT(checked, 3000);
}

TEST(Mapping, LocalAtCenterEqualsSlice) {
  const SemanticMapStack g = random_stack(kGlobalMapSize, 1);
  const AgentState pose{210 * 0.05 + 0.01, 210 * 0.05 + 0.01, 0.4};
  const SemanticMapStack l = extract_local(g, pose);
  ASSERT_EQ(l.size(), 140);
  for (int c = 0; c < kMapChannels; ++c)
    for (int y = 0; y < 140; ++y)
      for (int x = 0; x < 140; ++x) ASSERT_EQ(l.at(c, x, y), g.at(c, 140 + x, 140 + y));
  EXPECT_EQ(l.origin(), (Cell{140, 140}));
}

TEST(Mapping, LocalAtCornerIsMostlyPadding) {
  const SemanticMapStack g = random_stack(kGlobalMapSize, 2);
  const SemanticMapStack l = extract_local(g, {0.01, 0.01, 0.0});
  int padded = 0;
  for (int y = 0; y < 140; ++y)
    for (int x = 0; x < 140; ++x) {
      if (l.origin().x + x >= 0 && l.origin().y + y >= 0) continue;
      ++padded;
      for (int c = 0; c < kMapChannels; ++c) ASSERT_EQ(l.at(c, x, y), 0.0f);
    }
  EXPECT_GE(padded, 140 * 140 * 3 / 4);
  EXPECT_EQ(l.at(kExploredChannel, 0, 0), 0.0f);
}

TEST(Mapping, CropPasteRoundTrip) {
  Rng rng = make_rng(5);
  std::uniform_real_distribution<double> u(-2.0, 23.0), th(-3.0, 3.0);
  const SemanticMapStack g = random_stack(kGlobalMapSize, 3);
  for (int i = 0; i < 20; ++i) {
    const AgentState pose{u(rng), u(rng), th(rng)};
    SemanticMapStack copy = g;
    paste(copy, extract_local(g, pose));
    EXPECT_EQ(copy, g);
    // and the pasted window lands exactly where it was cut from
    SemanticMapStack blank(kGlobalMapSize, g.origin(), g.resolution());
    paste(blank, extract_local(g, pose));
    EXPECT_EQ(extract_local(blank, pose), extract_local(g, pose));
  }
}

TEST(Mapping, PoolConstantStaysConstant) {
  SemanticMapStack g(kGlobalMapSize, {0, 0}, 0.05);
  for (int c = 0; c < kMapChannels; ++c)
    for (float& v : g.channel(c)) v = 0.1f * static_cast<float>(c) + 0.037f;
  const SemanticMapStack p = pool_global(g);
  for (int c = 0; c < kMapChannels; ++c)
    for (float v : p.channel(c)) ASSERT_EQ(v, 0.1f * static_cast<float>(c) + 0.037f);
}

TEST(Mapping, PoolSingleCell) {
  SemanticMapStack g(kGlobalMapSize, {0, 0}, 0.05);
  g.at(4, 100, 200) = 9.0f;
  const SemanticMapStack p = pool_global(g);
  EXPECT_EQ(p.at(4, 33, 66), 1.0f);
  EXPECT_EQ(p.at(4, 34, 66), 0.0f);
  EXPECT_EQ(p.channels(), 18);
}

TEST(Mapping, PoolMatchesNaiveMean) {
  const SemanticMapStack g = random_stack(kGlobalMapSize, 4);
  const SemanticMapStack p = pool_global(g);
  for (int c = 0; c < kMapChannels; ++c)
    for (int y = 0; y < 140; ++y)
      for (int x = 0; x < 140; ++x) {
        double s = 0.0;
        for (int j = 0; j < 3; ++j)
          for (int i = 0; i < 3; ++i) s += g.at(c, 3 * x + i, 3 * y + j);
        ASSERT_EQ(p.at(c, x, y), static_cast<float>(s / 9.0));
      }
  EXPECT_THROW(pool_global(random_stack(140, 1)), ShapeError);
}

TEST(GoalMask, NoEvidenceIsEmpty) {
  SemanticMapStack l(140, {0, 0}, 0.05);
  for (float& v : l.channel(kExploredChannel)) v = 1.0f;
  l.at(semantic_channel(CellClass::Chair), 3, 3) = 1.0f;
  const GoalMask g = goal_mask(l, CellClass::Bed);
  EXPECT_EQ(g.count, 0);
}

TEST(GoalMask, IsolatedCellRemoved) {
  SemanticMapStack l(140, {0, 0}, 0.05);
  l.at(kExploredChannel, 50, 50) = 1.0f;
  l.at(semantic_channel(CellClass::Bed), 50, 50) = 1.0f;
  EXPECT_EQ(goal_mask(l, CellClass::Bed, 4).count, 0);
  EXPECT_EQ(goal_mask(l, CellClass::Bed, 1).count, 1);
}

TEST(GoalMask, SmallComponentDropped) {
  SemanticMapStack l(140, {0, 0}, 0.05);
  auto mark = [&](int x, int y) {
    l.at(kExploredChannel, x, y) = 1.0f;
    l.at(semantic_channel(CellClass::Sink), x, y) = 0.9f;
  };
  std::set<std::pair<int, int>> big;
  for (int x = 10; x < 13; ++x) mark(x, 10);  // 3 cells
  for (int y = 40; y < 43; ++y)
    for (int x = 60; x < 64; ++x) {
      mark(x, y);
      big.insert({x, y});
    }
  const GoalMask g = goal_mask(l, CellClass::Sink, 4);
  EXPECT_EQ(g.count, 12);
  for (int y = 0; y < 140; ++y)
    for (int x = 0; x < 140; ++x) EXPECT_EQ(g.mask(x, y) != 0, big.count({x, y}) == 1);
}

TEST(GoalMask, SubsetOfArgmaxAndExplored) {
  SemanticMapStack l = random_stack(140, 8);
  const GoalMask g = goal_mask(l, CellClass::Plant, 2);
  const int want = semantic_channel(CellClass::Plant);
  for (int y = 0; y < 140; ++y)
    for (int x = 0; x < 140; ++x) {
      if (!g.mask(x, y)) continue;
      EXPECT_GE(l.at(kExploredChannel, x, y), 0.5f);
      for (int c = 2; c < kMapChannels; ++c) EXPECT_LE(l.at(c, x, y), l.at(want, x, y));
    }
  EXPECT_THROW(goal_mask(l, CellClass::Table), Error);
}
