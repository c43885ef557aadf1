#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "objnav/fmm.hpp"
#include "objnav/grid.hpp"

namespace objnav {

/// A cost map over a window of world cells. `nav` is the navigation cost, `occ`
/// the occupancy probability and `fused` the cost actually driven on.
struct CostMap {
  Grid<double> nav;
  Grid<double> occ;
  Grid<double> fused;
  bool normalized = true;
  Cell origin{};              // world cell of window cell (0, 0)
  double resolution = 0.05;   // meters per cell
  double obstacle_cost = 1.0;
  double theta_occ = 0.5;

  [[nodiscard]] int width() const noexcept { return fused.width(); }
  [[nodiscard]] int height() const noexcept { return fused.height(); }

  /// Window cell containing the world point (x, y); may be outside the window.
  [[nodiscard]] Cell cell_at(double x, double y) const noexcept {
    return {static_cast<int>(std::floor(x / resolution)) - origin.x,
            static_cast<int>(std::floor(y / resolution)) - origin.y};
  }
};

struct LossWeights {
  double occ = 1.0;
  double cost = 1.5;
  double dir = 1.0;
};

struct LossTerms {
  double occ = 0.0;
  double cost = 0.0;
  double dir = 0.0;
};

// ---------------------------------------------------------------------------
// Cost-map construction
// ---------------------------------------------------------------------------

/// Divides finite costs by the largest finite cost; non-finite cells become 1.
inline Grid<double> normalize_costs(const Grid<double>& meters) {
  double max_finite = 0.0;
  for (double v : meters.values())
    if (std::isfinite(v)) max_finite = std::max(max_finite, v);
  return map_grid<double>(meters, [max_finite](double v) {
    if (!std::isfinite(v)) return 1.0;
    return max_finite > 0.0 ? v / max_finite : 0.0;
  });
}

/// fused = 1 where occ >= theta_occ, nav elsewhere.
inline Grid<double> fuse_costmap(const Grid<double>& occ_pred, const Grid<double>& nav_pred,
                                 double theta_occ = 0.5, double obstacle_cost = 1.0) {
  require_same_shape(occ_pred, nav_pred, "fuse_costmap");
  Grid<double> out(nav_pred.width(), nav_pred.height());
  auto o = occ_pred.values();
  auto n = nav_pred.values();
  auto f = out.values();
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = o[i] >= theta_occ ? obstacle_cost : n[i];
  return out;
}

/// Builds a normalized CostMap; `occ` is also the mask overlaid on `nav`.
inline CostMap make_costmap(Grid<double> nav, Grid<double> occ, Cell origin, double resolution,
                            double theta_occ = 0.5) {
  CostMap m;
  m.fused = fuse_costmap(occ, nav, theta_occ);
  m.nav = std::move(nav);
  m.occ = std::move(occ);
  m.origin = origin;
  m.resolution = resolution;
  m.theta_occ = theta_occ;
  return m;
}

// ---------------------------------------------------------------------------
// Training losses
// ---------------------------------------------------------------------------

/// Mean binary cross-entropy, predictions clamped to [1e-7, 1 - 1e-7].
template <typename T>
double occupancy_loss(const Grid<T>& gt, const Grid<T>& pred) {
  require_same_shape(gt, pred, "occupancy_loss");
  constexpr double eps = 1e-7;
  auto g = gt.values();
  auto p = pred.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double c = static_cast<double>(g[i]);
    const double q = std::clamp(static_cast<double>(p[i]), eps, 1.0 - eps);
    sum += -(c * std::log(q) + (1.0 - c) * std::log(1.0 - q));
  }
  return g.empty() ? 0.0 : sum / static_cast<double>(g.size());
}

/// L1 navigation-cost error over free cells, divided by the full cell count H*W.
template <typename T>
double costmap_loss(const Grid<T>& gt_nav, const Grid<T>& pred_nav, const Grid<T>& gt_occ) {
  require_same_shape(gt_nav, pred_nav, "costmap_loss");
  require_same_shape(gt_nav, gt_occ, "costmap_loss");
  auto g = gt_nav.values();
  auto p = pred_nav.values();
  auto o = gt_occ.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double free = 1.0 - static_cast<double>(o[i]);
    if (free == 0.0) continue;
    sum += std::abs(static_cast<double>(g[i]) - static_cast<double>(p[i])) * free;
  }
  return g.empty() ? 0.0 : sum / static_cast<double>(g.size());
}

struct GradientField {
  Grid<std::array<double, 2>> grad;  // (d/dx, d/dy) in cost per cell
  Grid<std::uint8_t> valid;
};

/// Central differences on the 4-neighbourhood, one-sided at the map border. A
/// cell is invalid when any cell of its stencil is occupied (occ >= 0.5) or
/// holds a non-finite cost.
template <typename T>
GradientField gradient_field(const Grid<T>& cost, const Grid<T>& occ) {
  require_same_shape(cost, occ, "gradient_field");
  if (cost.width() < 3 || cost.height() < 3) throw ShapeError("gradient_field needs at least 3x3");
  const int w = cost.width();
  const int h = cost.height();
  GradientField f{Grid<std::array<double, 2>>(w, h, {0.0, 0.0}), Grid<std::uint8_t>(w, h, 0)};
  auto usable = [&](int x, int y) {
    return static_cast<double>(occ(x, y)) < 0.5 && std::isfinite(static_cast<double>(cost(x, y)));
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int xl = x > 0 ? x - 1 : x;
      const int xr = x < w - 1 ? x + 1 : x;
      const int yd = y > 0 ? y - 1 : y;
      const int yu = y < h - 1 ? y + 1 : y;
      if (!usable(x, y) || !usable(xl, y) || !usable(xr, y) || !usable(x, yd) || !usable(x, yu))
        continue;
      const double gx = (static_cast<double>(cost(xr, y)) - static_cast<double>(cost(xl, y))) / (xr - xl);
      const double gy = (static_cast<double>(cost(x, yu)) - static_cast<double>(cost(x, yd))) / (yu - yd);
      f.grad(x, y) = {gx, gy};
      f.valid(x, y) = 1;
    }
  }
  return f;
}

/// 1 - cos of the angle between two gradients; 0 when either is shorter than 1e-8.
inline double direction_term(std::array<double, 2> g, std::array<double, 2> p) noexcept {
  const double ng = std::hypot(g[0], g[1]);
  const double np = std::hypot(p[0], p[1]);
  if (ng < 1e-8 || np < 1e-8 || g == p) return 0.0;
  const double cosine = (g[0] * p[0] + g[1] * p[1]) / (ng * np);
  return 1.0 - std::clamp(cosine, -1.0, 1.0);
}

/// Mean over H*W of the gradient direction mismatch on free cells whose stencil
/// (judged by gt_occ) is valid.
template <typename T>
double gradient_direction_loss(const Grid<T>& gt_nav, const Grid<T>& pred_nav, const Grid<T>& gt_occ) {
  require_same_shape(gt_nav, pred_nav, "gradient_direction_loss");
  require_same_shape(gt_nav, gt_occ, "gradient_direction_loss");
  const auto g = gradient_field(gt_nav, gt_occ);
  const auto p = gradient_field(pred_nav, gt_occ);
  double sum = 0.0;
  for (std::size_t i = 0; i < g.valid.size(); ++i) {
    if (!g.valid.values()[i] || !p.valid.values()[i]) continue;
    const double free = 1.0 - static_cast<double>(gt_occ.values()[i]);
    sum += direction_term(g.grad.values()[i], p.grad.values()[i]) * free;
  }
  return sum / static_cast<double>(gt_nav.size());
}

inline double total_loss(const LossTerms& t, const LossWeights& w = {}) noexcept {
  return w.occ * t.occ + w.cost * t.cost + w.dir * t.dir;
}

template <typename T>
LossTerms loss_terms(const Grid<T>& gt_nav, const Grid<T>& gt_occ, const Grid<T>& pred_nav,
                     const Grid<T>& pred_occ) {
  return {occupancy_loss(gt_occ, pred_occ), costmap_loss(gt_nav, pred_nav, gt_occ),
          gradient_direction_loss(gt_nav, pred_nav, gt_occ)};
}

template <typename T>
double total_loss(const Grid<T>& gt_nav, const Grid<T>& gt_occ, const Grid<T>& pred_nav,
                  const Grid<T>& pred_occ, const LossWeights& w = {}) {
  return total_loss(loss_terms(gt_nav, gt_occ, pred_nav, pred_occ), w);
}

// ---------------------------------------------------------------------------
// Prediction metrics
// ---------------------------------------------------------------------------

/// Local actions in tie-break order: stay, E, N, W, S, NE, NW, SW, SE.
inline constexpr std::array<Cell, 9> kLocalActions = {
    Cell{0, 0}, Cell{1, 0}, Cell{0, 1}, Cell{-1, 0}, Cell{0, -1},
    Cell{1, 1}, Cell{-1, 1}, Cell{-1, -1}, Cell{1, -1}};

/// Index into kLocalActions of the cheapest neighbour (first wins on ties).
template <typename T>
int best_action(const Grid<T>& cost, int x, int y, int neighborhood) {
  int best = 0;
  double best_cost = static_cast<double>(cost(x, y));
  for (int a = 1; a < neighborhood; ++a) {
    const int nx = x + kLocalActions[static_cast<std::size_t>(a)].x;
    const int ny = y + kLocalActions[static_cast<std::size_t>(a)].y;
    if (!cost.contains(nx, ny)) continue;
    const double c = static_cast<double>(cost(nx, ny));
    if (c < best_cost) {
      best_cost = c;
      best = a;
    }
  }
  return best;
}

/// Percentage of navigable cells where gt and pred pick the same cheapest local
/// action (aAP5 with neighborhood 5, aAP9 with 9).
template <typename T>
double action_prediction_accuracy(const Grid<T>& gt_cost, const Grid<T>& pred_cost,
                                  const Grid<std::uint8_t>& navigable, int neighborhood) {
  require_same_shape(gt_cost, pred_cost, "action_prediction_accuracy");
  require_same_shape(gt_cost, navigable, "action_prediction_accuracy");
  if (neighborhood != 5 && neighborhood != 9) throw Error("neighborhood must be 5 or 9");
  std::size_t total = 0;
  std::size_t correct = 0;
  for (int y = 0; y < gt_cost.height(); ++y) {
    for (int x = 0; x < gt_cost.width(); ++x) {
      if (!navigable(x, y)) continue;
      ++total;
      if (best_action(gt_cost, x, y, neighborhood) == best_action(pred_cost, x, y, neighborhood))
        ++correct;
    }
  }
  if (total == 0) throw Error("action_prediction_accuracy: no navigable cells");
  return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

/// aAP on fused costs; navigable cells are those the ground truth marks free.
inline double action_prediction_accuracy(const CostMap& gt, const CostMap& pred, int neighborhood,
                                         double theta_occ = 0.5) {
  auto navigable = map_grid<std::uint8_t>(gt.occ, [theta_occ](double o) -> std::uint8_t {
    return o < theta_occ;
  });
  return action_prediction_accuracy(gt.fused, pred.fused, navigable, neighborhood);
}

struct OccupancyMetrics {
  // Per-class values, index 0 = occupied, 1 = free; all in percent.
  std::array<double, 2> accuracy{};
  std::array<double, 2> f1{};
  std::array<double, 2> iou{};
  double mpa = 0.0;
  double mf1 = 0.0;
  double miou = 0.0;
};

/// Two-class (occupied/free) segmentation scores. A class absent from both gt
/// and pred scores 100 on every measure.
inline OccupancyMetrics occupancy_metrics(const Grid<std::uint8_t>& gt, const Grid<std::uint8_t>& pred) {
  require_same_shape(gt, pred, "occupancy_metrics");
  OccupancyMetrics m;
  for (int cls = 0; cls < 2; ++cls) {
    const std::uint8_t label = cls == 0 ? 1 : 0;
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      const bool g = (gt.values()[i] != 0) == (label != 0);
      const bool p = (pred.values()[i] != 0) == (label != 0);
      tp += g && p;
      fp += !g && p;
      fn += g && !p;
    }
    const auto k = static_cast<std::size_t>(cls);
    if (tp + fp + fn == 0) {
      m.accuracy[k] = m.f1[k] = m.iou[k] = 100.0;
      continue;
    }
    m.accuracy[k] = tp + fn > 0 ? 100.0 * tp / (tp + fn) : 0.0;
    m.f1[k] = 100.0 * 2.0 * tp / (2.0 * tp + fp + fn);
    m.iou[k] = 100.0 * tp / (tp + fp + fn);
  }
  m.mpa = 0.5 * (m.accuracy[0] + m.accuracy[1]);
  m.mf1 = 0.5 * (m.f1[0] + m.f1[1]);
  m.miou = 0.5 * (m.iou[0] + m.iou[1]);
  return m;
}

}  // namespace objnav
