#include <gtest/gtest.h>

#include <cmath>

#include "objnav/predictor.hpp"
#include "oracles.hpp"

using namespace objnav;

namespace {

AgentState free_pose_near(const WorldGrid& w, Cell want) {
  for (int r = 0; r < 200; ++r)
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) {
        const Cell c{want.x + dx, want.y + dy};
        if (w.cells.contains(c) && w.cells[c] == CellClass::Free) {
          const auto [x, y] = w.center_of(c);
          return {x, y, 0.0};
        }
      }
  throw std::runtime_error("no free cell");
}

OccupancyGrid target_occupancy(const WorldGrid& w, CellClass target, std::vector<Cell>& seeds) {
  OccupancyGrid occ(w.width(), w.height(), 0);
  for (int y = 0; y < w.height(); ++y)
    for (int x = 0; x < w.width(); ++x) {
      if (w.cells(x, y) == target)
        seeds.push_back({x, y});
      else
        occ(x, y) = !is_free(w.cells(x, y));
    }
  return occ;
}

}  // namespace

TEST(GtOracle, EqualsFmmCrop) {
  const WorldGrid w = generate_world(21);
  EpisodeConfig ep;
  ep.target = CellClass::Bed;
  const AgentState pose = free_pose_near(w, {100, 100});
  const PredictionResponse r = gt_oracle_predict(w, ep, pose);
  std::vector<Cell> seeds;
  const OccupancyGrid occ = target_occupancy(w, ep.target, seeds);
  const Grid<double> d = fmm_distance(occ, seeds, w.resolution);
  const Cell a = w.cell_at(pose.x, pose.y);
  const Cell corner{a.x - 70, a.y - 70};
  double mx = 0.0;
  for (int y = 0; y < 140; ++y)
    for (int x = 0; x < 140; ++x) {
      const double v = d.value_or(corner.x + x, corner.y + y, INFINITY);
      if (std::isfinite(v)) mx = std::max(mx, v);
    }
  ASSERT_EQ(r.nav.width(), 140);
  EXPECT_EQ(r.origin, corner);
  for (int y = 0; y < 140; ++y)
    for (int x = 0; x < 140; ++x) {
      const double v = d.value_or(corner.x + x, corner.y + y, INFINITY);
      ASSERT_EQ(r.nav(x, y), std::isfinite(v) ? v / mx : 1.0);
      const CellClass c = w.cells.value_or(corner.x + x, corner.y + y, CellClass::Obstacle);
      ASSERT_EQ(r.occ(x, y), is_free(c) ? 0.0 : 1.0);
    }
}

TEST(GtOracle, AdjacentToTargetIsNearZero) {
  const WorldGrid w = generate_world(22);
  EpisodeConfig ep;
  ep.target = CellClass::Sink;
  for (int y = 1; y < w.height() - 1; ++y)
    for (int x = 1; x < w.width() - 1; ++x)
      if (w.cells(x, y) == CellClass::Free &&
          (w.cells(x + 1, y) == CellClass::Sink || w.cells(x - 1, y) == CellClass::Sink ||
           w.cells(x, y + 1) == CellClass::Sink || w.cells(x, y - 1) == CellClass::Sink)) {
        const auto [px, py] = w.center_of({x, y});
        const PredictionResponse r = gt_oracle_predict(w, ep, {px, py, 0.0});
        EXPECT_LT(r.nav(70, 70), 0.02);
        return;
      }
  FAIL() << "no free cell next to a sink";
}

TEST(GtOracle, DecreasesAlongShortestPath) {
  const WorldGrid w = generate_world(23);
  EpisodeConfig ep;
  ep.target = CellClass::Chair;
  std::vector<Cell> seeds;
  const OccupancyGrid occ = target_occupancy(w, ep.target, seeds);
  const Grid<double> field = fmm_distance(occ, seeds, w.resolution);
  const Grid<double> dj = oracle::dijkstra8(occ, seeds, w.resolution);
  Rng rng = make_rng(4);
  std::uniform_int_distribution<int> p(0, 199);
  int paths = 0;
  while (paths < 10) {
    Cell c{p(rng), p(rng)};
    if (occ[c] || !std::isfinite(dj[c]) || dj[c] < 1.0) continue;
    ++paths;
    // walk the Dijkstra shortest-path tree downhill
    while (dj[c] > 0.0) {
      Cell next = c;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const Cell m{c.x + dx, c.y + dy};
          if (dj.contains(m) && std::isfinite(dj[m]) && dj[m] < dj[next]) next = m;
        }
      ASSERT_NE(next, c);
      EXPECT_LT(field[next], field[c]) << "at " << c.x << "," << c.y;
      c = next;
    }
  }
  // the oracle window is a crop of the same field
  const AgentState pose = free_pose_near(w, {100, 100});
  const PredictionResponse a = gt_oracle_predict(w, ep, pose), b = gt_oracle_predict(w, ep, pose);
  EXPECT_EQ(a.nav, b.nav);
  EXPECT_EQ(a.occ, b.occ);
}

TEST(GtOracle, ProviderMatchesFunction) {
  const WorldGrid w = generate_world(24);
  EpisodeConfig ep;
  ep.target = CellClass::Plant;
  const AgentState pose = free_pose_near(w, {60, 140});
  const Observation obs = raycast_observe(w, pose);
  SemanticMapStack g = SemanticMapStack::global_for(pose, w.resolution);
  const SemanticMapStack l = extract_local(g, pose);
  GtOracleProvider p;
  const PredictionResponse r = p.predict(PredictionContext{w, ep, pose, g, l, obs});
  EXPECT_EQ(r.nav, gt_oracle_predict(w, ep, pose).nav);
  EXPECT_EQ(p.name(), "gt");
}

TEST(GtOracle, MissingTargetIsAnError) {
  WorldGenParams params;
  params.object_density = 0.0;
  params.target_coverage = 0.0;
  const WorldGrid w = generate_world(3, params);
  EpisodeConfig ep;
  ep.target = CellClass::Couch;
  EXPECT_THROW(gt_oracle_predict(w, ep, free_pose_near(w, {100, 100})), UnreachableGoalError);
}

namespace {

// 10x10 partial map. Columns 0..5 explored; a wall stub at x=3, y=2..6.
SemanticMapStack partial_map() {
  SemanticMapStack m(10, {0, 0}, 0.05);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 6; ++x) m.at(kExploredChannel, x, y) = 1.0f;
  for (int y = 2; y < 7; ++y) m.at(kObstacleChannel, 3, y) = 1.0f;
  return m;
}

}  // namespace

TEST(Frontier, MatchesBruteForceOracle) {
  const SemanticMapStack m = partial_map();
  // brute-force frontier: explored, not obstacle, with an unexplored 4-neighbour
  std::vector<Cell> expect;
  OccupancyGrid blocked(10, 10, 0);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) {
      const bool ex = m.at(kExploredChannel, x, y) > 0.5f, ob = m.at(kObstacleChannel, x, y) > 0.5f;
      blocked(x, y) = !ex || ob;
      if (!ex || ob) continue;
      bool touches = false;
      for (Cell d : {Cell{1, 0}, Cell{-1, 0}, Cell{0, 1}, Cell{0, -1}})
        touches |= m.contains(x + d.x, y + d.y) && m.at(kExploredChannel, x + d.x, y + d.y) < 0.5f;
      if (touches) expect.push_back({x, y});
    }
  auto got = frontier_cells(m);
  std::sort(got.begin(), got.end());
  std::sort(expect.begin(), expect.end());
  EXPECT_EQ(got, expect);
  ASSERT_EQ(expect.size(), 10u);

  const AgentState pose{0.025, 0.225, 0.0};
  const PredictionResponse r = partial_fmm_predict(m, CellClass::Bed, pose);
  const Grid<double> d = oracle::dijkstra8(blocked, expect, 0.05);
  double dmax = 0.0;
  for (double v : d.values())
    if (std::isfinite(v)) dmax = std::max(dmax, v);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) {
      if (!std::isfinite(d(x, y))) {
        EXPECT_EQ(r.nav(x, y), 1.0);
        continue;
      }
      EXPECT_NEAR(r.nav(x, y), d(x, y) / dmax, 0.10 * d(x, y) / dmax + 1e-12) << x << "," << y;
    }
  EXPECT_EQ(r.occ(3, 4), 1.0);
  EXPECT_EQ(r.occ(0, 0), 0.0);
}

TEST(Frontier, AgentCostIsDistanceToNearestFrontier) {
  // only a 5x5 patch around the agent has been seen
  SemanticMapStack m(21, {0, 0}, 0.05);
  for (int y = 8; y < 13; ++y)
    for (int x = 8; x < 13; ++x) m.at(kExploredChannel, x, y) = 1.0f;
  const AgentState pose{10 * 0.05 + 0.025, 10 * 0.05 + 0.025, 0.0};
  const PredictionResponse r = partial_fmm_predict(m, CellClass::Bed, pose);
  // frontier is the patch boundary, and the agent at the center is the farthest cell
  EXPECT_EQ(r.nav(8, 10), 0.0);
  EXPECT_EQ(r.nav(12, 12), 0.0);
  EXPECT_EQ(r.nav(10, 10), 1.0);
  EXPECT_EQ(r.nav(9, 10), r.nav(11, 10));
  EXPECT_EQ(r.nav(10, 9), r.nav(10, 11));
  OccupancyGrid blocked(21, 21, 1);
  for (int y = 8; y < 13; ++y)
    for (int x = 8; x < 13; ++x) blocked(x, y) = 0;
  const auto frontier = frontier_cells(m);
  EXPECT_EQ(frontier.size(), 16u);
  const Grid<double> d = fmm_distance(blocked, frontier, 0.05);
  EXPECT_EQ(r.nav, normalize_costs(d));
  EXPECT_GT(d(10, 10), 1.4 * 0.05);
  EXPECT_LE(d(10, 10), 2.0 * 0.05);
  EXPECT_EQ(r.nav(0, 0), 1.0);
}

TEST(Frontier, FullyExploredWithTargetIsGoalFmm) {
  SemanticMapStack m(40, {0, 0}, 0.05);
  for (float& v : m.channel(kExploredChannel)) v = 1.0f;
  for (int y = 10; y < 14; ++y)
    for (int x = 30; x < 34; ++x) {
      m.at(kObstacleChannel, x, y) = 1.0f;
      m.at(semantic_channel(CellClass::Couch), x, y) = 1.0f;
    }
  for (int y = 0; y < 30; ++y) m.at(kObstacleChannel, 20, y) = 1.0f;
  const AgentState pose{0.2, 0.2, 0.0};
  const PredictionResponse r = partial_fmm_predict(m, CellClass::Couch, pose);
  OccupancyGrid occ(40, 40, 0);
  std::vector<Cell> seeds;
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x) {
      if (m.at(semantic_channel(CellClass::Couch), x, y) > 0.5f)
        seeds.push_back({x, y});
      else
        occ(x, y) = m.at(kObstacleChannel, x, y) > 0.5f;
    }
  EXPECT_EQ(r.nav, normalize_costs(fmm_distance(occ, seeds, 0.05)));
}

TEST(Frontier, NothingLeftGivesUniformMaxCost) {
  SemanticMapStack m(20, {0, 0}, 0.05);
  for (float& v : m.channel(kExploredChannel)) v = 1.0f;
  const PredictionResponse r = partial_fmm_predict(m, CellClass::Bed, {0.5, 0.5, 0.0});
  for (double v : r.nav.values()) EXPECT_EQ(v, 1.0);
}

TEST(Frontier, UnreachableCellsNeverFinite) {
  SemanticMapStack m = partial_map();
  for (int y = 0; y < 10; ++y) m.at(kObstacleChannel, 1, y) = 1.0f;  // seal column 0
  const PredictionResponse r = partial_fmm_predict(m, CellClass::Bed, {0.125, 0.125, 0.0});
  for (int y = 0; y < 10; ++y) EXPECT_EQ(r.nav(0, y), 1.0);
}

TEST(Request, OrientationBins) {
  const double q = std::numbers::pi / 4.0;
  EXPECT_EQ(orientation_bin(0.0), 1);
  EXPECT_EQ(orientation_bin(q), 2);
  EXPECT_EQ(orientation_bin(2 * q), 3);
  EXPECT_EQ(orientation_bin(-q), 8);
  EXPECT_EQ(orientation_bin(-std::numbers::pi), 5);
  EXPECT_EQ(orientation_bin(q / 2 - 1e-9), 1);
  EXPECT_EQ(orientation_bin(q / 2 + 1e-9), 2);
  for (double a = -4.0; a < 4.0; a += 0.01) {
    EXPECT_GE(orientation_bin(a), 1);
    EXPECT_LE(orientation_bin(a), 8);
  }
}

TEST(Request, Shapes) {
  const WorldGrid w = generate_world(25);
  const AgentState pose = free_pose_near(w, {100, 100});
  SemanticMapStack g = SemanticMapStack::global_for(pose, w.resolution);
  const Observation obs = raycast_observe(w, pose);
  integrate_observation_inplace(g, obs);
  const PredictionRequest r = make_request(3, 8, CellClass::Plant, pose, extract_local(g, pose), g, obs);
  EXPECT_EQ(r.local.shape, (std::vector<std::uint32_t>{18, 140, 140}));
  EXPECT_EQ(r.global.shape, (std::vector<std::uint32_t>{18, 140, 140}));
  EXPECT_EQ(r.target, 3);
  EXPECT_EQ(r.ray_depth.size(), 120u);
  EXPECT_EQ(r.ray_class.size(), 120u);
}
