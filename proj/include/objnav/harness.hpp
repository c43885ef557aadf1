#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "objnav/controller.hpp"
#include "objnav/costfield.hpp"
#include "objnav/mapping.hpp"
#include "objnav/predictor.hpp"
#include "objnav/rng.hpp"
#include "objnav/world.hpp"

namespace objnav {

enum class AgentKind { Gt, Frontier, Random, Remote };

inline std::string to_string(AgentKind k) {
  switch (k) {
    case AgentKind::Gt: return "gt";
    case AgentKind::Frontier: return "frontier";
    case AgentKind::Random: return "random";
    case AgentKind::Remote: return "remote";
  }
  return "?";
}

inline AgentKind parse_agent(std::string_view s) {
  if (s == "gt") return AgentKind::Gt;
  if (s == "frontier") return AgentKind::Frontier;
  if (s == "random") return AgentKind::Random;
  if (s == "remote") return AgentKind::Remote;
  throw Error("unknown agent '" + std::string(s) + "' (expected gt, frontier, random or remote)");
}

struct AgentSpec {
  AgentKind kind = AgentKind::Gt;
  MpcConfig mpc{};
  GoalReacherConfig goal{};
  SensorParams sensor{};
  FrontierOptions frontier{1.0, 4};
  double theta_occ = 0.5;
  double inflation = 0.1;  // m, applied to occupancy before driving on it
  /// Supplies the provider for Remote agents (and overrides the built-in ones
  /// when set).
  std::function<std::unique_ptr<CostMapProvider>()> provider_factory;
};

struct EpisodeResult {
  std::uint64_t world_seed = 0;
  int episode_index = 0;
  CellClass target = CellClass::Bed;
  AgentState start;
  AgentState final_pose;
  std::string provider;
  bool success = false;
  bool declared_done = false;
  bool failed = false;  // aborted by an error, see failure_reason
  std::string failure_reason;
  double path_length = 0.0;      // p, meters
  double shortest_length = 0.0;  // l, meters to the success boundary
  double final_distance = 0.0;   // geodesic meters to the nearest target cell
  double dts = 0.0;
  int steps = 0;
  double dt = 0.1;
  std::vector<Control> history;  // executed (v, omega) per step
  std::vector<AgentState> trajectory;  // poses x_0..x_steps
};

/// What a per-step observer gets to see, after mapping and before the control
/// for this step is applied.
struct StepView {
  int step;
  const WorldGrid& world;
  const EpisodeConfig& episode;
  const AgentState& pose;
  const SemanticMapStack& global;
  const SemanticMapStack& local;
  const Observation& observation;
};
using StepHook = std::function<void(const StepView&)>;

// ---------------------------------------------------------------------------
// Navigation metrics
// ---------------------------------------------------------------------------

/// Geodesic distance (m) stored in a world-level field at the pose's cell.
inline double geodesic_at(const Grid<double>& target_dist, const WorldGrid& world, const AgentState& pose) {
  const Cell c = world.cell_at(pose.x, pose.y);
  return target_dist.value_or(c.x, c.y, std::numeric_limits<double>::infinity());
}

/// Distance to success: how far the pose is from the success boundary.
inline double dts(const AgentState& final_pose, const WorldGrid& world, const EpisodeConfig& episode) {
  const double g = geodesic_at(target_distance(world, episode.target), world, final_pose);
  return std::max(g - episode.success_distance, 0.0);
}

inline double spl_term(const EpisodeResult& r) {
  if (!r.success) return 0.0;
  const double denom = std::max(r.path_length, r.shortest_length);
  return denom > 0.0 ? r.shortest_length / denom : 1.0;
}

/// Success weighted by path length, averaged over episodes.
inline double spl(std::span<const EpisodeResult> results) {
  if (results.empty()) throw Error("spl: no episodes");
  double s = 0.0;
  for (const auto& r : results) s += spl_term(r);
  return s / static_cast<double>(results.size());
}

struct Smoothness {
  double acc_linear = 0.0;
  double acc_angular = 0.0;
  double jerk_linear = 0.0;
  double jerk_angular = 0.0;
};

/// Mean absolute first (acceleration) and second (jerk) differences of the
/// velocity history.
inline Smoothness smoothness(std::span<const Control> history, double dt) {
  Smoothness s;
  const std::size_t n = history.size();
  if (n >= 2) {
    for (std::size_t i = 0; i + 1 < n; ++i) {
      s.acc_linear += std::abs(history[i + 1].v - history[i].v) / dt;
      s.acc_angular += std::abs(history[i + 1].omega - history[i].omega) / dt;
    }
    s.acc_linear /= static_cast<double>(n - 1);
    s.acc_angular /= static_cast<double>(n - 1);
  }
  if (n >= 3) {
    for (std::size_t i = 0; i + 2 < n; ++i) {
      s.jerk_linear += std::abs(history[i + 2].v - 2.0 * history[i + 1].v + history[i].v) / (dt * dt);
      s.jerk_angular +=
          std::abs(history[i + 2].omega - 2.0 * history[i + 1].omega + history[i].omega) / (dt * dt);
    }
    s.jerk_linear /= static_cast<double>(n - 2);
    s.jerk_angular /= static_cast<double>(n - 2);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Episode runner
// ---------------------------------------------------------------------------

inline std::unique_ptr<CostMapProvider> make_provider(const AgentSpec& spec) {
  if (spec.provider_factory) return spec.provider_factory();
  switch (spec.kind) {
    case AgentKind::Gt: return std::make_unique<GtOracleProvider>();
    case AgentKind::Frontier: return std::make_unique<FrontierProvider>(spec.frontier);
    case AgentKind::Random: return nullptr;
    case AgentKind::Remote: throw Error("remote agent needs a provider factory (endpoint)");
  }
  return nullptr;
}

/// Runs one episode: observe, map, check the goal reacher, pick a cost map,
/// plan with IT-MPC and step the robot, until done or max_steps.
inline EpisodeResult run_episode(const WorldGrid& world, const EpisodeConfig& episode, const AgentSpec& spec,
                                 std::uint64_t seed, const StepHook& hook = {}, int episode_id = 0,
                                 CostMapProvider* provider_override = nullptr,
                                 const Grid<double>* target_dist = nullptr) {
  EpisodeResult res;
  res.world_seed = episode.world_seed;
  res.episode_index = episode_id;
  res.target = episode.target;
  res.start = episode.start;
  res.dt = episode.dt;

  Grid<double> own_dist;
  if (!target_dist) {
    own_dist = target_distance(world, episode.target);
    target_dist = &own_dist;
  }
  res.shortest_length =
      std::max(geodesic_at(*target_dist, world, episode.start) - episode.success_distance, 0.0);

  MpcConfig mpc = spec.mpc;
  mpc.dt = episode.dt;
  std::unique_ptr<CostMapProvider> owned;
  CostMapProvider* provider = provider_override;
  PrivilegedRandomPolicy random_policy(derive_seed({seed, 0x52414e44ULL}), mpc.limits);
  try {
    if (!provider && spec.kind != AgentKind::Random) {
      owned = make_provider(spec);
      provider = owned.get();
    }
  } catch (const std::exception& e) {
    res.failed = true;
    res.failure_reason = e.what();
  }
  res.provider = provider ? provider->name() : to_string(spec.kind);

  SemanticMapStack global = SemanticMapStack::global_for(episode.start, world.resolution);
  AgentState state = episode.start;
  ControlSequence seq = ControlSequence::zeros(mpc.horizon);
  res.trajectory.push_back(state);

  for (int step = 0; step < episode.max_steps && !res.failed; ++step) {
    try {
      const Observation obs = raycast_observe(world, state, spec.sensor);
      integrate_observation_inplace(global, obs);
      const SemanticMapStack local = extract_local(global, state);
      const GoalReacherResult gr = goal_reacher_update_local(local, episode.target, state, spec.goal);
      if (gr.status == GoalStatus::Done) {
        res.declared_done = true;
        break;
      }
      if (hook) hook(StepView{step, world, episode, state, global, local, obs});

      Control u;
      const std::uint64_t step_seed = derive_seed({seed, static_cast<std::uint64_t>(step)});
      if (gr.status == GoalStatus::Active) {
        auto r = mpc_step(state, seq, *gr.costmap, mpc, step_seed);
        u = r.applied;
        seq = std::move(r.next);
      } else if (spec.kind == AgentKind::Random && !provider) {
        u = random_policy();
      } else {
        const PredictionContext ctx{world, episode, state, global, local, obs, episode_id, step};
        const CostMap cmap = control_costmap(provider->predict(ctx), spec.theta_occ, spec.inflation);
        auto r = mpc_step(state, seq, cmap, mpc, step_seed);
        u = r.applied;
        seq = std::move(r.next);
      }
      const AgentState next = step_dynamics(world, state, u, episode.dt);
      res.path_length += std::hypot(next.x - state.x, next.y - state.y);
      res.history.push_back({next.v, next.omega});
      state = next;
      res.trajectory.push_back(state);
      ++res.steps;
    } catch (const std::exception& e) {
      res.failed = true;
      res.failure_reason = e.what();
    }
  }
  res.final_pose = state;
  res.final_distance = geodesic_at(*target_dist, world, state);
  res.dts = std::max(res.final_distance - episode.success_distance, 0.0);
  res.success = res.declared_done && res.final_distance <= episode.success_distance;
  return res;
}

// ---------------------------------------------------------------------------
// Episode sampling
// ---------------------------------------------------------------------------

struct EpisodeSampling {
  double min_start_distance = 1.5;  // m, geodesic to the success boundary
  double start_clearance = 0.25;    // m from any obstacle
  int max_steps = 500;
  double dt = 0.1;
  double success_distance = 1.0;
  int max_tries = 2000;
  std::optional<CellClass> target;  // fixed target instead of a random one
};

/// Draws a target present in `world` and a reachable start pose, deterministic
/// in `seed`.
inline EpisodeConfig sample_episode(const WorldGrid& world, std::uint64_t seed, const EpisodeSampling& p = {}) {
  Rng rng = make_rng(seed);
  std::vector<CellClass> present;
  for (CellClass t : kTargetCategories)
    if (std::find(world.cells.values().begin(), world.cells.values().end(), t) != world.cells.values().end())
      present.push_back(t);
  if (present.empty()) throw Error("world has no target category");
  std::uniform_int_distribution<std::size_t> pick(0, present.size() - 1);
  CellClass target = present[pick(rng)];
  if (p.target) {
    if (std::find(present.begin(), present.end(), *p.target) == present.end())
      throw UnreachableGoalError("world has no '" + std::string(to_string(*p.target)) + "'");
    target = *p.target;
  }

  const Grid<double> dist = target_distance(world, target);
  const OccupancyGrid clear =
      inflate(world.occupancy(), static_cast<int>(std::ceil(p.start_clearance / world.resolution)));
  std::uniform_int_distribution<int> xs(0, world.width() - 1);
  std::uniform_int_distribution<int> ys(0, world.height() - 1);
  std::uniform_real_distribution<double> heading(-std::numbers::pi, std::numbers::pi);
  for (int i = 0; i < p.max_tries; ++i) {
    const Cell c{xs(rng), ys(rng)};
    const double th = heading(rng);
    if (clear[c] || !std::isfinite(dist[c])) continue;
    if (dist[c] - p.success_distance < p.min_start_distance) continue;
    EpisodeConfig e;
    e.world_seed = world.seed;
    const auto [x, y] = world.center_of(c);
    e.start = {x, y, normalize_angle(th), 0.0, 0.0};
    e.target = target;
    e.max_steps = p.max_steps;
    e.dt = p.dt;
    e.success_distance = p.success_distance;
    return e;
  }
  throw Error("could not sample a start pose for world seed " + std::to_string(world.seed));
}

}  // namespace objnav
