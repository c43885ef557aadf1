#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "objnav/costfield.hpp"
#include "objnav/fmm.hpp"
#include "objnav/mapping.hpp"
#include "objnav/rng.hpp"
#include "objnav/world.hpp"

namespace objnav {

/// How rollouts are charged for entering occupied cells.
enum class CollisionPricing {
  /// Every pose pays the fused cost of its cell.
  PerPose,
  /// Once a rollout moves from free space into an occupied cell it is treated as
  /// crashed: that pose and every later one pays the obstacle cost. A rollout that
  /// starts inside an occupied cell pays per pose until it first leaves it.
  Absorbing,
};

struct MpcConfig {
  int horizon = 50;
  int samples = 256;
  double sigma = 0.35;
  double mu = 0.0;
  double lambda = 0.5;
  double q_v = 0.1;
  double q_omega = 0.05;
  double dt = 0.1;
  VelocityLimits limits{};
  CollisionPricing collision = CollisionPricing::Absorbing;
  /// Replace the last sample with a rollout that follows the cost map downhill.
  bool descent_sample = true;

  void validate() const {
    if (horizon < 1) throw Error("MpcConfig: horizon must be >= 1");
    if (samples < 1) throw Error("MpcConfig: samples must be >= 1");
    if (!(sigma > 0.0)) throw Error("MpcConfig: sigma must be > 0");
    if (!(lambda > 0.0)) throw Error("MpcConfig: lambda must be > 0");
    if (q_v < 0.0 || q_omega < 0.0) throw Error("MpcConfig: Q entries must be >= 0");
    if (!(dt > 0.0)) throw Error("MpcConfig: dt must be > 0");
  }
};

/// (samples x horizon) control perturbations, sample-major.
struct PerturbationBatch {
  int samples = 0;
  int horizon = 0;
  std::vector<Control> eps;

  [[nodiscard]] const Control& at(int k, int t) const noexcept {
    return eps[static_cast<std::size_t>(k) * static_cast<std::size_t>(horizon) + static_cast<std::size_t>(t)];
  }
  Control& at(int k, int t) noexcept {
    return eps[static_cast<std::size_t>(k) * static_cast<std::size_t>(horizon) + static_cast<std::size_t>(t)];
  }
};

struct ControlSequence {
  std::vector<Control> controls;
  PerturbationBatch perturbations;
  std::vector<double> costs;
  std::vector<double> weights;

  static ControlSequence zeros(int horizon) {
    ControlSequence s;
    s.controls.assign(static_cast<std::size_t>(horizon), Control{});
    return s;
  }
};

inline PerturbationBatch sample_perturbations(const MpcConfig& cfg, std::uint64_t rng_seed) {
  Rng rng = make_rng(rng_seed);
  std::normal_distribution<double> noise(cfg.mu, cfg.sigma);
  PerturbationBatch b{cfg.samples, cfg.horizon, {}};
  b.eps.resize(static_cast<std::size_t>(cfg.samples) * static_cast<std::size_t>(cfg.horizon));
  for (auto& e : b.eps) {
    e.v = noise(rng);
    e.omega = noise(rng);
  }
  return b;
}

/// Poses x_1..x_H from iterating the unicycle model; no collision handling.
inline std::vector<AgentState> rollout(const AgentState& s0, std::span<const Control> controls, double dt) {
  std::vector<AgentState> poses;
  poses.reserve(controls.size());
  AgentState s = s0;
  for (const Control& u : controls) {
    s = step_dynamics(s, u, dt);
    poses.push_back(s);
  }
  return poses;
}

/// S = sum_t [C(x_t) + u_t^T Q u_t] with nearest-cell lookup; poses outside the
/// window pay the obstacle cost.
inline double trajectory_cost(std::span<const AgentState> poses, std::span<const Control> controls,
                              const CostMap& cmap, const MpcConfig& cfg,
                              const std::optional<AgentState>& start = std::nullopt) {
  auto occupied_at = [&](Cell c) {
    return cmap.fused.contains(c) && cmap.occ[c] >= cmap.theta_occ;
  };
  bool inside = start ? occupied_at(cmap.cell_at(start->x, start->y)) : false;
  bool crashed = false;
  double s = 0.0;
  const std::size_t n = std::min(poses.size(), controls.size());
  for (std::size_t t = 0; t < n; ++t) {
    const Control& u = controls[t];
    s += cfg.q_v * u.v * u.v + cfg.q_omega * u.omega * u.omega;
    const Cell c = cmap.cell_at(poses[t].x, poses[t].y);
    if (cfg.collision == CollisionPricing::Absorbing) {
      const bool occ = occupied_at(c);
      if (occ && !inside) crashed = true;
      inside = occ;
    }
    if (crashed || !cmap.fused.contains(c))
      s += cmap.obstacle_cost;
    else
      s += cmap.fused[c];
  }
  return s;
}

class WeightError : public Error {
 public:
  using Error::Error;
};

/// w_k = exp(-(S_k - beta) / lambda) / eta with beta = min_k S_k. Non-finite
/// costs get weight 0.
inline std::vector<double> importance_weights(std::span<const double> costs, double lambda) {
  if (!(lambda > 0.0)) throw WeightError("importance_weights: lambda must be > 0");
  double beta = std::numeric_limits<double>::infinity();
  for (double c : costs)
    if (std::isfinite(c)) beta = std::min(beta, c);
  if (!std::isfinite(beta)) throw WeightError("importance_weights: every cost is non-finite");
  std::vector<double> w(costs.size(), 0.0);
  double eta = 0.0;
  for (std::size_t k = 0; k < costs.size(); ++k) {
    if (!std::isfinite(costs[k])) continue;
    w[k] = std::exp(-(costs[k] - beta) / lambda);
    eta += w[k];
  }
  for (double& x : w) x /= eta;
  return w;
}

/// u_t <- clamp(u_t + sum_k w_k eps_t^k).
inline std::vector<Control> update_controls(std::span<const Control> controls, std::span<const double> weights,
                                            const PerturbationBatch& eps, const VelocityLimits& limits) {
  if (static_cast<int>(weights.size()) != eps.samples)
    throw Error("update_controls: weight count does not match the perturbation batch");
  if (static_cast<int>(controls.size()) != eps.horizon)
    throw Error("update_controls: horizon does not match the perturbation batch");
  std::vector<Control> out(controls.begin(), controls.end());
  for (int t = 0; t < eps.horizon; ++t) {
    double dv = 0.0;
    double dw = 0.0;
    for (int k = 0; k < eps.samples; ++k) {
      const double wk = weights[static_cast<std::size_t>(k)];
      if (wk == 0.0) continue;
      dv += wk * eps.at(k, t).v;
      dw += wk * eps.at(k, t).omega;
    }
    auto& u = out[static_cast<std::size_t>(t)];
    u = limits.clamp({u.v + dv, u.omega + dw});
  }
  return out;
}

/// Drops u_0 and repeats the last control.
inline std::vector<Control> shift_controls(std::span<const Control> controls) {
  std::vector<Control> out;
  if (controls.empty()) return out;
  out.assign(controls.begin() + 1, controls.end());
  out.push_back(controls.back());
  return out;
}

/// Controls that steer toward the cheapest point on a circle of radius
/// `lookahead` around the predicted pose whose straight three-cell-wide lane is
/// free, turning in place when it lies far off the heading. Holds still once no
/// such point is cheaper than the current cell.
inline std::vector<Control> descent_controls(const AgentState& s0, const CostMap& cmap, const MpcConfig& cfg,
                                             double lookahead = 0.4, int directions = 32) {
  std::vector<Control> out;
  out.reserve(static_cast<std::size_t>(cfg.horizon));
  AgentState s = s0;
  const double step = cmap.resolution / 2.0;
  for (int t = 0; t < cfg.horizon; ++t) {
    double best = std::numeric_limits<double>::infinity();
    double best_angle = s.theta;
    for (int i = 0; i < directions; ++i) {
      const double a = 2.0 * std::numbers::pi * i / directions;
      bool clear = true;
      const double ca = std::cos(a);
      const double sa = std::sin(a);
      for (double d = step; clear && d <= lookahead + 1e-9; d += step) {
        for (double off : {-cmap.resolution, 0.0, cmap.resolution}) {
          const Cell q = cmap.cell_at(s.x + d * ca - off * sa, s.y + d * sa + off * ca);
          clear = clear && cmap.fused.contains(q) && cmap.occ[q] < cmap.theta_occ;
        }
      }
      if (!clear) continue;
      const Cell c = cmap.cell_at(s.x + lookahead * ca, s.y + lookahead * sa);
      if (cmap.fused[c] < best) {
        best = cmap.fused[c];
        best_angle = a;
      }
    }
    const Cell here = cmap.cell_at(s.x, s.y);
    const double here_cost = cmap.fused.contains(here) ? cmap.fused[here] : cmap.obstacle_cost;
    Control u{};
    if (best < here_cost) {
      const double err = normalize_angle(best_angle - s.theta);
      u = cfg.limits.clamp(
          {cfg.limits.v_max * std::max(0.0, 1.0 - std::abs(err) / (std::numbers::pi / 6.0)), 2.0 * err});
    }
    out.push_back(u);
    s = step_dynamics(s, u, cfg.dt);
  }
  return out;
}

struct MpcStepResult {
  Control applied;
  ControlSequence next;  // receding-horizon sequence for the following step
};

/// One IT-MPC iteration: perturb, roll out, price, weight, update, apply u_0.
inline MpcStepResult mpc_step(const AgentState& state, const ControlSequence& seq, const CostMap& cmap,
                              const MpcConfig& cfg, std::uint64_t rng_seed) {
  cfg.validate();
  std::vector<Control> nominal = seq.controls;
  nominal.resize(static_cast<std::size_t>(cfg.horizon), nominal.empty() ? Control{} : nominal.back());

  MpcStepResult r;
  r.next.perturbations = sample_perturbations(cfg, rng_seed);
  if (cfg.descent_sample) {
    const auto guide = descent_controls(state, cmap, cfg);
    for (int t = 0; t < cfg.horizon; ++t) {
      const auto ti = static_cast<std::size_t>(t);
      r.next.perturbations.at(cfg.samples - 1, t) = {guide[ti].v - nominal[ti].v, guide[ti].omega - nominal[ti].omega};
    }
  }
  const auto& eps = r.next.perturbations;
  r.next.costs.resize(static_cast<std::size_t>(cfg.samples));
  std::vector<Control> noisy(static_cast<std::size_t>(cfg.horizon));
  std::vector<AgentState> poses(static_cast<std::size_t>(cfg.horizon));
  for (int k = 0; k < cfg.samples; ++k) {
    AgentState s = state;
    for (int t = 0; t < cfg.horizon; ++t) {
      const auto ti = static_cast<std::size_t>(t);
      const Control& e = eps.at(k, t);
      noisy[ti] = cfg.limits.clamp({nominal[ti].v + e.v, nominal[ti].omega + e.omega});
      s = step_dynamics(s, noisy[ti], cfg.dt);
      poses[ti] = s;
    }
    r.next.costs[static_cast<std::size_t>(k)] = trajectory_cost(poses, noisy, cmap, cfg, state);
  }
  r.next.weights = importance_weights(r.next.costs, cfg.lambda);
  const auto updated = update_controls(nominal, r.next.weights, eps, cfg.limits);
  r.applied = updated.front();
  r.next.controls = shift_controls(updated);
  return r;
}

// ---------------------------------------------------------------------------
// Goal reacher
// ---------------------------------------------------------------------------

struct GoalReacherConfig {
  double theta_cost = 0.2;
  int min_region = 4;
  /// Length (m) that maps goal distance onto the scale theta_cost is compared on.
  double done_scale = 4.0;
  double inflation = 0.1;  // m
  double theta_occ = 0.5;
};

enum class GoalStatus { Inactive, Active, Done };

struct GoalReacherResult {
  GoalStatus status = GoalStatus::Inactive;
  std::optional<CostMap> costmap;  // set when Active or Done
  double agent_cost = std::numeric_limits<double>::infinity();  // meters to the goal mask
  int goal_cells = 0;
};

/// Occupancy of a local map for driving: mapped obstacles grown by the
/// robot's inflation radius.
inline Grid<double> control_occupancy(const SemanticMapStack& local, double inflation) {
  const int n = local.size();
  OccupancyGrid occ(n, n, 0);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) occ(x, y) = local.at(kObstacleChannel, x, y) > 0.5f;
  const int r = static_cast<int>(std::lround(inflation / local.resolution()));
  return map_grid<double>(inflate(occ, r), [](std::uint8_t v) { return static_cast<double>(v); });
}

/// Goal reacher on an agent-centered local map. Inactive while the target has
/// not been seen or the goal is unreachable through mapped obstacles (unexplored
/// cells count as traversable); Done once the geodesic distance from the agent
/// to the goal mask, divided by `done_scale`, is at most theta_cost.
inline GoalReacherResult goal_reacher_update_local(const SemanticMapStack& local, CellClass target,
                                                   const AgentState& state, const GoalReacherConfig& cfg = {}) {
  GoalReacherResult r;
  const GoalMask gm = goal_mask(local, target, cfg.min_region);
  r.goal_cells = gm.count;
  if (gm.count == 0) return r;

  const int n = local.size();
  OccupancyGrid occ(n, n, 0);
  std::vector<Cell> seeds;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      if (gm.mask(x, y)) {
        seeds.push_back({x, y});
      } else {
        occ(x, y) = local.at(kObstacleChannel, x, y) > 0.5f;
      }
    }
  }
  const Grid<double> dist = fmm_distance(occ, seeds, local.resolution());
  const Cell a = local.map_cell(state.x, state.y);
  r.agent_cost = local.contains(a.x, a.y) ? dist[a] : std::numeric_limits<double>::infinity();
  if (!std::isfinite(r.agent_cost)) return r;

  r.costmap = make_costmap(normalize_costs(dist), control_occupancy(local, cfg.inflation), local.origin(),
                           local.resolution(), cfg.theta_occ);
  r.status = r.agent_cost / cfg.done_scale <= cfg.theta_cost ? GoalStatus::Done : GoalStatus::Active;
  return r;
}

inline GoalReacherResult goal_reacher_update(const SemanticMapStack& map, CellClass target,
                                             const AgentState& state, const GoalReacherConfig& cfg = {}) {
  return goal_reacher_update_local(extract_local(map, state), target, state, cfg);
}

// ---------------------------------------------------------------------------
// Privileged random baseline
// ---------------------------------------------------------------------------

/// Uniform draws over the velocity box; "privileged" because the episode loop
/// still hands control to the goal reacher once the target is in view.
class PrivilegedRandomPolicy {
 public:
  explicit PrivilegedRandomPolicy(std::uint64_t rng_seed, VelocityLimits limits = {})
      : rng_(make_rng(rng_seed)), limits_(limits) {}

  Control operator()() {
    std::uniform_real_distribution<double> v(limits_.v_min, limits_.v_max);
    std::uniform_real_distribution<double> w(limits_.omega_min, limits_.omega_max);
    const double a = v(rng_);
    const double b = w(rng_);
    return limits_.clamp({a, b});
  }

 private:
  Rng rng_;
  VelocityLimits limits_;
};

inline Control privileged_random_policy(std::uint64_t rng_seed, const VelocityLimits& limits = {}) {
  return PrivilegedRandomPolicy(rng_seed, limits)();
}

}  // namespace objnav
