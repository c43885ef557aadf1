#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "objnav/controller.hpp"
#include "objnav/costfield.hpp"
#include "objnav/fmm.hpp"
#include "objnav/mapping.hpp"
#include "objnav/tensor.hpp"
#include "objnav/world.hpp"

namespace objnav {

/// 45-degree heading bin in 1..8, counterclockwise from east; bin 1 is centered
/// on east, north falls in bin 3.
inline int orientation_bin(double theta) noexcept {
  constexpr double width = std::numbers::pi / 4.0;
  double a = std::fmod(theta + width / 2.0, 2.0 * std::numbers::pi);
  if (a < 0.0) a += 2.0 * std::numbers::pi;
  const int bin = static_cast<int>(std::floor(a / width));
  return std::min(bin, 7) + 1;
}

/// (18, n, n) tensor view of a map stack.
inline Tensor map_tensor(const SemanticMapStack& m) {
  const auto n = static_cast<std::uint32_t>(m.size());
  return {{static_cast<std::uint32_t>(kMapChannels), n, n}, std::vector<float>(m.values().begin(), m.values().end())};
}

struct PredictionRequest {
  int episode = 0;
  int step = 0;
  int target = 0;           // index into kTargetCategories
  int orientation_bin = 1;  // 1..8
  Tensor local;             // (18,140,140)
  Tensor global;            // pooled, (18,140,140)
  std::vector<float> ray_depth;
  std::vector<int> ray_class;  // -1 where nothing was hit

  friend bool operator==(const PredictionRequest&, const PredictionRequest&) = default;
};

struct PredictionResponse {
  Grid<double> nav;  // (140,140) in [0,1]
  Grid<double> occ;  // (140,140) in [0,1]
  Cell origin{};     // world cell of window cell (0,0)
  double resolution = 0.05;
  double latency_ms = 0.0;
};

inline PredictionRequest make_request(int episode, int step, CellClass target, const AgentState& pose,
                                      const SemanticMapStack& local, const SemanticMapStack& global,
                                      const Observation& obs) {
  PredictionRequest r;
  r.episode = episode;
  r.step = step;
  r.target = target_id(target);
  r.orientation_bin = orientation_bin(pose.theta);
  r.local = map_tensor(local);
  r.global = map_tensor(pool_global(global));
  for (const Ray& ray : obs.rays) {
    r.ray_depth.push_back(static_cast<float>(ray.hit_distance));
    r.ray_class.push_back(ray.hit_class ? static_cast<int>(*ray.hit_class) : -1);
  }
  return r;
}

/// Cost map the controller drives on: occupancy thresholded at theta_occ and
/// grown by the robot's inflation radius, then overlaid on the nav cost.
inline CostMap control_costmap(const PredictionResponse& r, double theta_occ = 0.5, double inflation = 0.1) {
  OccupancyGrid bin = map_grid<std::uint8_t>(r.occ, [theta_occ](double o) -> std::uint8_t { return o >= theta_occ; });
  const int radius = static_cast<int>(std::lround(inflation / r.resolution));
  Grid<double> occ = map_grid<double>(inflate(bin, radius), [](std::uint8_t v) { return static_cast<double>(v); });
  Grid<double> nav = r.nav;
  return make_costmap(std::move(nav), std::move(occ), r.origin, r.resolution, theta_occ);
}

/// Whatever a provider may look at when asked for a cost map.
struct PredictionContext {
  const WorldGrid& world;
  const EpisodeConfig& episode;
  const AgentState& pose;
  const SemanticMapStack& global;
  const SemanticMapStack& local;
  const Observation& observation;
  int episode_id = 0;
  int step = 0;
};

class CostMapProvider {
 public:
  virtual ~CostMapProvider() = default;
  [[nodiscard]] virtual std::string name() const = 0;
  virtual PredictionResponse predict(const PredictionContext& ctx) = 0;
};

// ---------------------------------------------------------------------------
// Ground-truth oracle
// ---------------------------------------------------------------------------

/// Geodesic distance (m) from every cell of the world to the nearest cell of
/// `target`; target cells are the seeds, every other non-Free cell blocks.
inline Grid<double> target_distance(const WorldGrid& world, CellClass target) {
  OccupancyGrid occ(world.width(), world.height(), 0);
  std::vector<Cell> seeds;
  for (int y = 0; y < world.height(); ++y) {
    for (int x = 0; x < world.width(); ++x) {
      const CellClass c = world.cells(x, y);
      if (c == target)
        seeds.push_back({x, y});
      else
        occ(x, y) = !is_free(c);
    }
  }
  if (seeds.empty())
    throw UnreachableGoalError("world has no '" + std::string(to_string(target)) + "' cells");
  return fmm_distance(occ, seeds, world.resolution);
}

inline Grid<double> world_occupancy(const WorldGrid& world) {
  return map_grid<double>(world.cells, [](CellClass c) { return is_free(c) ? 0.0 : 1.0; });
}

/// Crops world-level distance and occupancy to the window centered on
/// `agent`, normalizing the distance. Outside the world is unreachable and
/// occupied.
inline PredictionResponse oracle_window(const Grid<double>& dist, const Grid<double>& occ, Cell agent,
                                        double resolution) {
  const Cell corner{agent.x - kLocalMapSize / 2, agent.y - kLocalMapSize / 2};
  PredictionResponse r;
  r.nav = normalize_costs(crop(dist, corner.x, corner.y, kLocalMapSize, kLocalMapSize,
                               std::numeric_limits<double>::infinity()));
  r.occ = crop(occ, corner.x, corner.y, kLocalMapSize, kLocalMapSize, 1.0);
  r.origin = corner;
  r.resolution = resolution;
  return r;
}

inline PredictionResponse gt_oracle_predict(const WorldGrid& world, const EpisodeConfig& episode,
                                            const AgentState& pose) {
  return oracle_window(target_distance(world, episode.target), world_occupancy(world),
                       world.cell_at(pose.x, pose.y), world.resolution);
}

/// Privileged provider: exact distance to the target over the true floor plan.
/// The world-level field is computed once per (world, target).
class GtOracleProvider final : public CostMapProvider {
 public:
  [[nodiscard]] std::string name() const override { return "gt"; }
  PredictionResponse predict(const PredictionContext& ctx) override {
    const auto t0 = std::chrono::steady_clock::now();
    if (world_ != &ctx.world || target_ != ctx.episode.target) {
      dist_ = target_distance(ctx.world, ctx.episode.target);
      occ_ = world_occupancy(ctx.world);
      world_ = &ctx.world;
      target_ = ctx.episode.target;
    }
    PredictionResponse r = oracle_window(dist_, occ_, ctx.world.cell_at(ctx.pose.x, ctx.pose.y),
                                         ctx.world.resolution);
    r.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return r;
  }

 private:
  Grid<double> dist_;
  Grid<double> occ_;
  const WorldGrid* world_ = nullptr;
  CellClass target_ = CellClass::Free;
};

// ---------------------------------------------------------------------------
// Partial-map frontier baseline
// ---------------------------------------------------------------------------

struct FrontierOptions {
  /// Frontier cells closer than this (m) to the agent are ignored while farther
  /// ones exist.
  double min_distance = 0.0;
  int min_region = 4;
};

/// Explored free cells with an unexplored 4-neighbour inside the window.
inline std::vector<Cell> frontier_cells(const SemanticMapStack& local) {
  std::vector<Cell> out;
  const int n = local.size();
  auto explored = [&](int x, int y) { return local.at(kExploredChannel, x, y) > 0.5f; };
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      if (!explored(x, y) || local.at(kObstacleChannel, x, y) > 0.5f) continue;
      constexpr int dx[4] = {1, -1, 0, 0};
      constexpr int dy[4] = {0, 0, 1, -1};
      for (int k = 0; k < 4; ++k) {
        const int nx = x + dx[k];
        const int ny = y + dy[k];
        if (local.contains(nx, ny) && !explored(nx, ny)) {
          out.push_back({x, y});
          break;
        }
      }
    }
  }
  return out;
}

/// Cost map from the agent's own map: distance to the goal mask when the target
/// is mapped and reachable, otherwise distance to the frontier. Only explored
/// free cells are traversable. `local` must be centered on `pose`.
inline PredictionResponse partial_fmm_predict(const SemanticMapStack& local, CellClass target,
                                              const AgentState& pose, const FrontierOptions& opt = {}) {
  const int n = local.size();
  PredictionResponse r;
  r.origin = local.origin();
  r.resolution = local.resolution();
  r.occ = Grid<double>(n, n, 0.0);
  OccupancyGrid blocked(n, n, 0);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const bool obstacle = local.at(kObstacleChannel, x, y) > 0.5f;
      r.occ(x, y) = obstacle ? 1.0 : 0.0;
      blocked(x, y) = obstacle || local.at(kExploredChannel, x, y) < 0.5f;
    }
  }
  const Cell agent = local.map_cell(pose.x, pose.y);
  const bool agent_inside = local.contains(agent.x, agent.y);

  const GoalMask gm = goal_mask(local, target, opt.min_region);
  if (gm.count > 0) {
    OccupancyGrid occ = blocked;
    std::vector<Cell> seeds;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        if (gm.mask(x, y)) {
          occ(x, y) = 0;
          seeds.push_back({x, y});
        }
    Grid<double> dist = fmm_distance(occ, seeds, local.resolution());
    if (agent_inside && std::isfinite(dist[agent])) {
      r.nav = normalize_costs(dist);
      return r;
    }
  }

  std::vector<Cell> frontier = frontier_cells(local);
  if (opt.min_distance > 0.0 && agent_inside) {
    const double lim = opt.min_distance / local.resolution();
    std::vector<Cell> far;
    for (Cell c : frontier)
      if (std::hypot(c.x - agent.x, c.y - agent.y) >= lim) far.push_back(c);
    if (!far.empty()) frontier = std::move(far);
  }
  if (frontier.empty()) {
    r.nav = Grid<double>(n, n, 1.0);
    return r;
  }
  r.nav = normalize_costs(fmm_distance(blocked, frontier, local.resolution()));
  return r;
}

class FrontierProvider final : public CostMapProvider {
 public:
  explicit FrontierProvider(FrontierOptions opt = {1.0, 4}) : opt_(opt) {}
  [[nodiscard]] std::string name() const override { return "frontier"; }
  PredictionResponse predict(const PredictionContext& ctx) override {
    const auto t0 = std::chrono::steady_clock::now();
    PredictionResponse r = partial_fmm_predict(ctx.local, ctx.episode.target, ctx.pose, opt_);
    r.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return r;
  }

 private:
  FrontierOptions opt_;
};

}  // namespace objnav
