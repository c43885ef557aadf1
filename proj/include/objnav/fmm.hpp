#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <queue>
#include <span>
#include <utility>
#include <vector>

#include "objnav/grid.hpp"

namespace objnav {

class UnreachableGoalError : public Error {
 public:
  using Error::Error;
};

/// Binary occupancy: nonzero cells block travel.
using OccupancyGrid = Grid<std::uint8_t>;

namespace detail {

/// First-order upwind solution of |grad T| = 1 from two orthogonal neighbours
/// `a` and `b` at spacing `h`.
inline double eikonal_update(double a, double b, double h) noexcept {
  if (a > b) std::swap(a, b);
  if (!std::isfinite(a)) return std::numeric_limits<double>::infinity();
  if (!std::isfinite(b) || b - a >= h) return a + h;
  const double d = a - b;
  return 0.5 * (a + b + std::sqrt(2.0 * h * h - d * d));
}

}  // namespace detail

/// Geodesic distance (meters) from `seeds` over the free cells of `occ`.
///
/// Fast marching with a binary-heap narrow band and two first-order stencils:
/// the axis-aligned one and the one rotated by 45 degrees (spacing h*sqrt(2)),
/// keeping the smaller of the two solutions. The diagonal stencil never cuts a
/// corner: a diagonal neighbour only contributes when both cells sharing its
/// edges with the updated cell are free. Occupied and unreachable cells are +inf.
inline Grid<double> fmm_distance(const OccupancyGrid& occ, std::span<const Cell> seeds,
                                 double resolution) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (seeds.empty()) throw UnreachableGoalError("unreachable goal set: no seeds given");
  if (!(resolution > 0.0)) throw Error("fmm_distance: resolution must be positive");

  const int w = occ.width();
  const int h = occ.height();
  // Padded by one cell on every side so neighbour lookups need no bounds checks.
  const int pw = w + 2;
  const auto pidx = [pw](int x, int y) { return static_cast<std::size_t>(y + 1) * pw + static_cast<std::size_t>(x + 1); };
  const std::size_t padded = static_cast<std::size_t>(pw) * static_cast<std::size_t>(h + 2);
  std::vector<std::uint8_t> free_cell(padded, 0);
  std::vector<double> tentative(padded, inf);
  std::vector<double> accepted(padded, inf);  // inf until the cell is known
  std::vector<std::uint8_t> known(padded, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) free_cell[pidx(x, y)] = occ(x, y) == 0;

  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> band;
  bool any = false;
  for (Cell s : seeds) {
    if (!occ.contains(s)) throw Error("fmm_distance: seed outside the grid");
    if (occ[s] != 0) continue;
    tentative[pidx(s.x, s.y)] = 0.0;
    band.emplace(0.0, pidx(s.x, s.y));
    any = true;
  }
  if (!any) throw UnreachableGoalError("unreachable goal set: every seed is occupied");

  const double hd = resolution * std::numbers::sqrt2;
  const auto row = static_cast<std::ptrdiff_t>(pw);
  // Diagonal neighbour value, usable only when both side cells are free.
  auto diag = [&](std::size_t i, std::ptrdiff_t dx, std::ptrdiff_t dy) {
    if (!free_cell[i + dx] || !free_cell[i + dy * row]) return inf;
    return accepted[i + dx + dy * row];
  };
  auto solve = [&](std::size_t i) {
    const double ax = std::min(accepted[i - 1], accepted[i + 1]);
    const double ay = std::min(accepted[i - row], accepted[i + row]);
    const double d1 = std::min(diag(i, 1, 1), diag(i, -1, -1));
    const double d2 = std::min(diag(i, 1, -1), diag(i, -1, 1));
    return std::min(detail::eikonal_update(ax, ay, resolution), detail::eikonal_update(d1, d2, hd));
  };
  const std::ptrdiff_t offsets[8] = {-row - 1, -row, -row + 1, -1, 1, row - 1, row, row + 1};

  while (!band.empty()) {
    const auto [t, idx] = band.top();
    band.pop();
    if (known[idx] || t > tentative[idx]) continue;
    known[idx] = 1;
    accepted[idx] = t;
    for (std::ptrdiff_t off : offsets) {
      const std::size_t n = idx + off;
      if (!free_cell[n] || known[n]) continue;
      const double cand = solve(n);
      if (cand < tentative[n]) {
        tentative[n] = cand;
        band.emplace(cand, n);
      }
    }
  }

  Grid<double> dist(w, h, inf);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) dist(x, y) = accepted[pidx(x, y)];
  return dist;
}

/// Marks every cell within `radius` cells (Euclidean) of an occupied cell.
inline OccupancyGrid inflate(const OccupancyGrid& occ, int radius) {
  if (radius <= 0) return occ;
  OccupancyGrid out = occ;
  std::vector<Cell> disk;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      if (dx * dx + dy * dy <= radius * radius) disk.push_back({dx, dy});
  for (int y = 0; y < occ.height(); ++y) {
    for (int x = 0; x < occ.width(); ++x) {
      if (!occ(x, y)) continue;
      for (Cell d : disk) {
        const int nx = x + d.x;
        const int ny = y + d.y;
        if (out.contains(nx, ny)) out(nx, ny) = 1;
      }
    }
  }
  return out;
}

}  // namespace objnav
