#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "objnav/grid.hpp"
#include "objnav/rng.hpp"

namespace objnav {

// ---------------------------------------------------------------------------
// Cell classes
// ---------------------------------------------------------------------------

inline constexpr int kSemanticClassCount = 16;

enum class CellClass : std::uint8_t {
  Free = 0,
  Obstacle = 1,
  Bed = 2,
  Chair,
  Sink,
  Plant,
  Couch,
  Table,
  Tv,
  Toilet,
  Bathtub,
  Cabinet,
  Shelf,
  Desk,
  Stove,
  Fridge,
  Counter,
  Wardrobe,  // = 2 + kSemanticClassCount - 1
};

inline constexpr int kCellClassCount = 2 + kSemanticClassCount;

constexpr bool is_semantic(CellClass c) noexcept {
  return static_cast<int>(c) >= 2 && static_cast<int>(c) < kCellClassCount;
}
constexpr bool is_free(CellClass c) noexcept { return c == CellClass::Free; }

/// Index of a semantic class among the K semantic channels.
constexpr int semantic_index(CellClass c) noexcept { return static_cast<int>(c) - 2; }
constexpr CellClass semantic_class(int index) noexcept {
  return static_cast<CellClass>(index + 2);
}

inline constexpr std::array<std::string_view, kCellClassCount> kCellClassNames = {
    "free",    "obstacle", "bed",   "chair",   "sink",  "plant",  "couch",   "table",   "tv",
    "toilet",  "bathtub",  "cabinet", "shelf", "desk",  "stove",  "fridge",  "counter", "wardrobe"};

inline std::string_view to_string(CellClass c) {
  return kCellClassNames.at(static_cast<std::size_t>(c));
}

/// The object categories an episode can ask for.
inline constexpr std::array<CellClass, 5> kTargetCategories = {
    CellClass::Bed, CellClass::Chair, CellClass::Sink, CellClass::Plant, CellClass::Couch};

constexpr bool is_target_category(CellClass c) noexcept {
  for (auto t : kTargetCategories)
    if (t == c) return true;
  return false;
}

/// Position of `c` in kTargetCategories, or -1.
constexpr int target_id(CellClass c) noexcept {
  for (std::size_t i = 0; i < kTargetCategories.size(); ++i)
    if (kTargetCategories[i] == c) return static_cast<int>(i);
  return -1;
}

inline CellClass parse_target(std::string_view name) {
  for (auto t : kTargetCategories)
    if (to_string(t) == name) return t;
  throw Error("unknown target category '" + std::string(name) +
              "' (expected bed, chair, sink, plant or couch)");
}

// ---------------------------------------------------------------------------
// World grid
// ---------------------------------------------------------------------------

class GenerationError : public Error {
 public:
  using Error::Error;
};

struct WorldGrid {
  Grid<CellClass> cells;
  double resolution = 0.05;  // meters per cell
  std::uint64_t seed = 0;

  [[nodiscard]] int width() const noexcept { return cells.width(); }
  [[nodiscard]] int height() const noexcept { return cells.height(); }

  /// Cell containing the world point (x, y); may lie outside the grid.
  [[nodiscard]] Cell cell_at(double x, double y) const noexcept {
    return {static_cast<int>(std::floor(x / resolution)),
            static_cast<int>(std::floor(y / resolution))};
  }
  [[nodiscard]] std::pair<double, double> center_of(Cell c) const noexcept {
    return {(c.x + 0.5) * resolution, (c.y + 0.5) * resolution};
  }
  /// Space outside the grid is treated as open floor.
  [[nodiscard]] CellClass class_of(Cell c) const noexcept {
    return cells.value_or(c.x, c.y, CellClass::Free);
  }
  [[nodiscard]] bool free_at(double x, double y) const noexcept {
    return is_free(class_of(cell_at(x, y)));
  }

  /// True where a cell blocks motion.
  [[nodiscard]] Grid<std::uint8_t> occupancy() const {
    return map_grid<std::uint8_t>(cells, [](CellClass c) -> std::uint8_t { return !is_free(c); });
  }

  friend bool operator==(const WorldGrid&, const WorldGrid&) = default;
};

struct WorldGenParams {
  int width = 200;
  int height = 200;
  double resolution = 0.05;
  int room_count = 4;
  double object_density = 0.6;  // fraction of each room's furniture capacity
  double wall_thickness = 0.2;  // m
  double door_width = 1.0;      // m
  double min_room_size = 2.4;   // m, interior side length
  double object_clearance = 0.45;
  /// Probability that a target category missing after furnishing is added.
  double target_coverage = 1.0;
  int max_retries = 32;
};

namespace detail {

struct Rect {
  int x0, y0, x1, y1;  // half-open [x0,x1) x [y0,y1)
  [[nodiscard]] int w() const { return x1 - x0; }
  [[nodiscard]] int h() const { return y1 - y0; }
  [[nodiscard]] bool intersects(const Rect& o) const {
    return x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1;
  }
  [[nodiscard]] bool inside(const Rect& o) const {
    return x0 >= o.x0 && y0 >= o.y0 && x1 <= o.x1 && y1 <= o.y1;
  }
  [[nodiscard]] Rect grown(int m) const { return {x0 - m, y0 - m, x1 + m, y1 + m}; }
};

inline void paint(Grid<CellClass>& g, const Rect& r, CellClass c) {
  for (int y = std::max(0, r.y0); y < std::min(g.height(), r.y1); ++y)
    for (int x = std::max(0, r.x0); x < std::min(g.width(), r.x1); ++x) g(x, y) = c;
}

/// Number of 4-connected components of free cells.
inline int free_components(const Grid<CellClass>& g) {
  Grid<std::uint8_t> seen(g.width(), g.height(), 0);
  std::vector<Cell> stack;
  int components = 0;
  for (int y = 0; y < g.height(); ++y) {
    for (int x = 0; x < g.width(); ++x) {
      if (!is_free(g(x, y)) || seen(x, y)) continue;
      ++components;
      stack.push_back({x, y});
      seen(x, y) = 1;
      while (!stack.empty()) {
        Cell c = stack.back();
        stack.pop_back();
        constexpr int dx[4] = {1, -1, 0, 0};
        constexpr int dy[4] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          Cell n{c.x + dx[k], c.y + dy[k]};
          if (g.contains(n) && !seen[n] && is_free(g[n])) {
            seen[n] = 1;
            stack.push_back(n);
          }
        }
      }
    }
  }
  return components;
}

enum class RoomType { Bedroom, Living, Kitchen, Bathroom };

inline const std::vector<CellClass>& furniture_for(RoomType t) {
  using C = CellClass;
  static const std::vector<C> bedroom{C::Bed, C::Wardrobe, C::Desk, C::Chair, C::Plant, C::Shelf};
  static const std::vector<C> living{C::Couch, C::Tv, C::Table, C::Chair, C::Plant, C::Shelf,
                                     C::Cabinet};
  static const std::vector<C> kitchen{C::Sink, C::Stove, C::Fridge, C::Counter, C::Table,
                                      C::Chair, C::Plant};
  static const std::vector<C> bathroom{C::Toilet, C::Sink, C::Bathtub, C::Cabinet, C::Plant};
  switch (t) {
    case RoomType::Bedroom: return bedroom;
    case RoomType::Living: return living;
    case RoomType::Kitchen: return kitchen;
    case RoomType::Bathroom: return bathroom;
  }
  return living;
}

/// Footprint range in meters: (along-wall min, along-wall max, depth min, depth max).
inline std::array<double, 4> footprint(CellClass c) {
  using C = CellClass;
  switch (c) {
    case C::Bed: return {1.0, 1.3, 1.2, 1.6};
    case C::Couch: return {1.2, 1.8, 0.6, 0.8};
    case C::Chair: return {0.4, 0.5, 0.4, 0.5};
    case C::Plant: return {0.3, 0.4, 0.3, 0.4};
    case C::Sink: return {0.5, 0.7, 0.4, 0.5};
    case C::Table: return {0.8, 1.2, 0.6, 0.8};
    case C::Tv: return {0.8, 1.2, 0.2, 0.3};
    case C::Toilet: return {0.4, 0.5, 0.6, 0.7};
    case C::Bathtub: return {1.4, 1.7, 0.7, 0.8};
    case C::Cabinet: return {0.5, 0.9, 0.4, 0.5};
    case C::Shelf: return {0.6, 1.0, 0.3, 0.4};
    case C::Desk: return {0.9, 1.2, 0.5, 0.6};
    case C::Stove: return {0.5, 0.6, 0.5, 0.6};
    case C::Fridge: return {0.6, 0.7, 0.6, 0.7};
    case C::Counter: return {1.0, 1.6, 0.5, 0.6};
    case C::Wardrobe: return {0.9, 1.4, 0.5, 0.6};
    default: return {0.5, 0.5, 0.5, 0.5};
  }
}

struct Layout {
  Grid<CellClass> grid;
  std::vector<Rect> rooms;     // interiors
  std::vector<Rect> doorways;  // carved openings
};

inline std::optional<Layout> build_rooms(const WorldGenParams& p, Rng& rng) {
  const double res = p.resolution;
  const int wall = std::max(1, static_cast<int>(std::lround(p.wall_thickness / res)));
  const int door = std::max(1, static_cast<int>(std::lround(p.door_width / res)));
  const int min_room = std::max(3, static_cast<int>(std::lround(p.min_room_size / res)));

  Layout out{Grid<CellClass>(p.width, p.height, CellClass::Free), {}, {}};
  paint(out.grid, {0, 0, p.width, wall}, CellClass::Obstacle);
  paint(out.grid, {0, p.height - wall, p.width, p.height}, CellClass::Obstacle);
  paint(out.grid, {0, 0, wall, p.height}, CellClass::Obstacle);
  paint(out.grid, {p.width - wall, 0, p.width, p.height}, CellClass::Obstacle);

  struct Split {
    Rect wall_rect;
    bool vertical;
  };
  std::vector<Rect> rooms{{wall, wall, p.width - wall, p.height - wall}};
  if (rooms[0].w() < min_room || rooms[0].h() < min_room) return std::nullopt;
  std::vector<Split> splits;
  std::uniform_real_distribution<double> frac(0.35, 0.65);

  while (static_cast<int>(rooms.size()) < p.room_count) {
    // Split the largest room that can still host two rooms.
    std::sort(rooms.begin(), rooms.end(), [](const Rect& a, const Rect& b) {
      return a.w() * a.h() > b.w() * b.h();
    });
    bool done = false;
    for (std::size_t i = 0; i < rooms.size() && !done; ++i) {
      const Rect r = rooms[i];
      const bool can_v = r.w() >= 2 * min_room + wall;
      const bool can_h = r.h() >= 2 * min_room + wall;
      if (!can_v && !can_h) continue;
      const bool vertical = can_v && (!can_h || r.w() >= r.h());
      const int span = vertical ? r.w() : r.h();
      int cut = static_cast<int>(frac(rng) * span);
      cut = std::clamp(cut, min_room, span - min_room - wall);
      Rect a, b, w;
      if (vertical) {
        a = {r.x0, r.y0, r.x0 + cut, r.y1};
        w = {r.x0 + cut, r.y0, r.x0 + cut + wall, r.y1};
        b = {r.x0 + cut + wall, r.y0, r.x1, r.y1};
      } else {
        a = {r.x0, r.y0, r.x1, r.y0 + cut};
        w = {r.x0, r.y0 + cut, r.x1, r.y0 + cut + wall};
        b = {r.x0, r.y0 + cut + wall, r.x1, r.y1};
      }
      rooms.erase(rooms.begin() + static_cast<std::ptrdiff_t>(i));
      rooms.push_back(a);
      rooms.push_back(b);
      splits.push_back({w, vertical});
      done = true;
    }
    if (!done) return std::nullopt;
  }
  for (const auto& s : splits) paint(out.grid, s.wall_rect, CellClass::Obstacle);

  // One door per split wall, placed where the opening meets free space on both sides.
  for (const auto& s : splits) {
    const Rect& w = s.wall_rect;
    const int len = s.vertical ? w.h() : w.w();
    if (len < door + 2) return std::nullopt;
    bool carved = false;
    for (int attempt = 0; attempt < 64 && !carved; ++attempt) {
      std::uniform_int_distribution<int> pos(1, len - door - 1);
      const int o = pos(rng);
      Rect d = s.vertical ? Rect{w.x0, w.y0 + o, w.x1, w.y0 + o + door}
                          : Rect{w.x0 + o, w.y0, w.x0 + o + door, w.y1};
      // Both sides of the opening must be room interior, not a crossing wall.
      Rect side_a = s.vertical ? Rect{d.x0 - 1, d.y0, d.x0, d.y1} : Rect{d.x0, d.y0 - 1, d.x1, d.y0};
      Rect side_b = s.vertical ? Rect{d.x1, d.y0, d.x1 + 1, d.y1} : Rect{d.x0, d.y1, d.x1, d.y1 + 1};
      auto all_free = [&](const Rect& r) {
        for (int y = r.y0; y < r.y1; ++y)
          for (int x = r.x0; x < r.x1; ++x)
            if (!out.grid.contains(x, y) || !is_free(out.grid(x, y))) return false;
        return true;
      };
      if (!all_free(side_a) || !all_free(side_b)) continue;
      paint(out.grid, d, CellClass::Free);
      out.doorways.push_back(d);
      carved = true;
    }
    if (!carved) return std::nullopt;
  }
  if (free_components(out.grid) != 1) return std::nullopt;
  out.rooms = rooms;
  return out;
}

inline bool try_place(Layout& lay, std::vector<Rect>& placed, const Rect& room, CellClass cls,
                      const WorldGenParams& p, Rng& rng) {
  const double res = p.resolution;
  const int clearance = static_cast<int>(std::lround(p.object_clearance / res));
  const auto fp = footprint(cls);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> side_dist(0, 3);
  for (int attempt = 0; attempt < 40; ++attempt) {
    const int along = std::max(1, static_cast<int>(std::lround((fp[0] + u01(rng) * (fp[1] - fp[0])) / res)));
    const int depth = std::max(1, static_cast<int>(std::lround((fp[2] + u01(rng) * (fp[3] - fp[2])) / res)));
    const int side = side_dist(rng);
    const bool horizontal_wall = (side == 0 || side == 2);  // south / north
    const int span = horizontal_wall ? room.w() : room.h();
    if (along >= span) continue;
    std::uniform_int_distribution<int> off_dist(0, span - along);
    const int off = off_dist(rng);
    Rect r{};
    switch (side) {
      case 0: r = {room.x0 + off, room.y0, room.x0 + off + along, room.y0 + depth}; break;
      case 1: r = {room.x1 - depth, room.y0 + off, room.x1, room.y0 + off + along}; break;
      case 2: r = {room.x0 + off, room.y1 - depth, room.x0 + off + along, room.y1}; break;
      default: r = {room.x0, room.y0 + off, room.x0 + depth, room.y0 + off + along}; break;
    }
    if (!r.inside(room)) continue;
    // Leave walkable space around the object and in front of each doorway.
    if (room.h() - (horizontal_wall ? depth : 0) < 2 * clearance) continue;
    if (room.w() - (horizontal_wall ? 0 : depth) < 2 * clearance) continue;
    const Rect halo = r.grown(clearance);
    bool ok = true;
    for (const auto& o : placed)
      if (halo.intersects(o)) ok = false;
    for (const auto& d : lay.doorways)
      if (d.grown(clearance + static_cast<int>(std::lround(0.2 / res))).intersects(r)) ok = false;
    if (!ok) continue;
    paint(lay.grid, r, cls);
    if (free_components(lay.grid) != 1) {
      paint(lay.grid, r, CellClass::Free);
      continue;
    }
    placed.push_back(r);
    return true;
  }
  return false;
}

}  // namespace detail

/// Procedural floor plan: rectangular rooms joined by doorways, furniture of the
/// semantic classes placed against room walls according to room type.
/// Deterministic in (seed, params).
inline WorldGrid generate_world(std::uint64_t seed, const WorldGenParams& params = {}) {
  if (params.width < 64 || params.height < 64)
    throw GenerationError("world must be at least 64x64 cells");
  if (params.room_count < 2) throw GenerationError("room_count must be at least 2");
  if (params.object_density < 0.0) throw GenerationError("object_density must be >= 0");
  if (params.resolution <= 0.0) throw GenerationError("resolution must be positive");

  using detail::RoomType;
  for (int attempt = 0; attempt < params.max_retries; ++attempt) {
    Rng rng = make_rng(derive_seed({seed, static_cast<std::uint64_t>(attempt)}));
    auto layout = detail::build_rooms(params, rng);
    if (!layout) continue;

    std::vector<RoomType> types{RoomType::Bedroom, RoomType::Living, RoomType::Kitchen,
                                RoomType::Bathroom};
    std::shuffle(types.begin(), types.end(), rng);
    std::vector<RoomType> room_types;
    std::uniform_int_distribution<int> any_type(0, 3);
    for (std::size_t i = 0; i < layout->rooms.size(); ++i)
      room_types.push_back(i < types.size() ? types[i] : static_cast<RoomType>(any_type(rng)));

    std::vector<detail::Rect> placed;
    if (params.object_density > 0.0) {
      for (std::size_t i = 0; i < layout->rooms.size(); ++i) {
        const auto& room = layout->rooms[i];
        const double area = room.w() * room.h() * params.resolution * params.resolution;
        const int capacity = std::max(1, static_cast<int>(area / 3.0));
        const int count = std::max(1, static_cast<int>(std::lround(params.object_density * capacity)));
        auto menu = detail::furniture_for(room_types[i]);
        std::shuffle(menu.begin(), menu.end(), rng);
        for (int k = 0; k < count; ++k) {
          const CellClass cls = menu[static_cast<std::size_t>(k) % menu.size()];
          detail::try_place(*layout, placed, room, cls, params, rng);
        }
      }
      std::uniform_real_distribution<double> u01(0.0, 1.0);
      for (CellClass target : kTargetCategories) {
        bool present = false;
        for (auto c : layout->grid.values()) present = present || c == target;
        if (present || u01(rng) >= params.target_coverage) continue;
        std::vector<std::size_t> order(layout->rooms.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::shuffle(order.begin(), order.end(), rng);
        // Prefer rooms whose type normally holds this category.
        std::stable_partition(order.begin(), order.end(), [&](std::size_t i) {
          const auto& m = detail::furniture_for(room_types[i]);
          return std::find(m.begin(), m.end(), target) != m.end();
        });
        for (auto i : order)
          if (detail::try_place(*layout, placed, layout->rooms[i], target, params, rng)) break;
      }
    }
    if (detail::free_components(layout->grid) != 1) continue;
    return WorldGrid{std::move(layout->grid), params.resolution, seed};
  }
  throw GenerationError("world generation failed after " + std::to_string(params.max_retries) +
                        " attempts (seed " + std::to_string(seed) + ")");
}

// ---------------------------------------------------------------------------
// Agent state and differential-drive dynamics
// ---------------------------------------------------------------------------

/// Wraps an angle into [-pi, pi).
inline double normalize_angle(double a) noexcept {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(a + std::numbers::pi, two_pi);
  if (r < 0.0) r += two_pi;
  r -= std::numbers::pi;
  if (r >= std::numbers::pi) r -= two_pi;
  return r;
}

struct AgentState {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  double v = 0.0;
  double omega = 0.0;

  friend bool operator==(const AgentState&, const AgentState&) = default;
};

struct Control {
  double v = 0.0;
  double omega = 0.0;

  friend bool operator==(const Control&, const Control&) = default;
};

struct VelocityLimits {
  double v_min = 0.0;
  double v_max = 1.0;
  double omega_min = -1.0;
  double omega_max = 1.0;

  [[nodiscard]] Control clamp(Control u) const noexcept {
    return {std::clamp(u.v, v_min, v_max), std::clamp(u.omega, omega_min, omega_max)};
  }
};

/// Exact constant-velocity unicycle integration over `dt`, no collisions.
inline AgentState step_dynamics(const AgentState& s, Control u, double dt) noexcept {
  AgentState n = s;
  if (std::abs(u.omega) < 1e-9) {
    n.x = s.x + u.v * std::cos(s.theta) * dt;
    n.y = s.y + u.v * std::sin(s.theta) * dt;
    n.theta = normalize_angle(s.theta + u.omega * dt);
  } else {
    const double r = u.v / u.omega;
    const double th1 = s.theta + u.omega * dt;
    n.x = s.x + r * (std::sin(th1) - std::sin(s.theta));
    n.y = s.y - r * (std::cos(th1) - std::cos(s.theta));
    n.theta = normalize_angle(th1);
  }
  n.v = u.v;
  n.omega = u.omega;
  return n;
}

/// Same integration, but motion stops at the last collision-free point along the
/// arc (the agent is a point; blocking cells are every non-Free cell). A blocked
/// step keeps its rotation and zeroes v.
inline AgentState step_dynamics(const WorldGrid& world, const AgentState& s, Control u, double dt) {
  const AgentState full = step_dynamics(s, u, dt);
  const double arc = std::abs(u.v) * dt;
  const int substeps = std::max(1, static_cast<int>(std::ceil(arc / (world.resolution * 0.25))));
  if (arc == 0.0) return full;
  AgentState last_free = s;
  for (int i = 1; i <= substeps; ++i) {
    const AgentState p =
        i == substeps ? full : step_dynamics(s, u, dt * static_cast<double>(i) / substeps);
    if (!world.free_at(p.x, p.y)) {
      AgentState out = last_free;
      out.theta = full.theta;
      out.v = 0.0;
      out.omega = u.omega;
      return out;
    }
    last_free = p;
  }
  return full;
}

// ---------------------------------------------------------------------------
// Raycast sensor
// ---------------------------------------------------------------------------

struct SensorParams {
  double fov = std::numbers::pi / 2.0;
  int ray_count = 120;
  double max_range = 5.0;
};

struct Ray {
  double angle = 0.0;                         // world frame
  double hit_distance = 0.0;                  // meters; max_range when nothing was hit
  std::optional<CellClass> hit_class;         // absent when nothing was hit
  std::optional<Cell> hit_cell;
  std::vector<Cell> swept;                    // free cells crossed before the hit, in order
};

struct Observation {
  AgentState pose;
  double max_range = 0.0;
  std::vector<Ray> rays;
};

class InvalidStateError : public Error {
 public:
  using Error::Error;
};

/// Amanatides-Woo traversal along one ray; stops at the first non-Free cell or at
/// max_range.
inline Ray cast_ray(const WorldGrid& w, double ox, double oy, double angle, double max_range) {
  Ray ray;
  ray.angle = angle;
  const double dx = std::cos(angle);
  const double dy = std::sin(angle);
  const double res = w.resolution;
  Cell c = w.cell_at(ox, oy);
  const int step_x = dx > 0 ? 1 : -1;
  const int step_y = dy > 0 ? 1 : -1;
  constexpr double inf = std::numeric_limits<double>::infinity();
  const double t_delta_x = std::abs(dx) < 1e-15 ? inf : res / std::abs(dx);
  const double t_delta_y = std::abs(dy) < 1e-15 ? inf : res / std::abs(dy);
  const double next_x = (dx > 0 ? c.x + 1 : c.x) * res;
  const double next_y = (dy > 0 ? c.y + 1 : c.y) * res;
  double t_max_x = std::abs(dx) < 1e-15 ? inf : (next_x - ox) / dx;
  double t_max_y = std::abs(dy) < 1e-15 ? inf : (next_y - oy) / dy;
  double t_entry = 0.0;
  for (;;) {
    const CellClass cls = w.class_of(c);
    if (!is_free(cls)) {
      ray.hit_distance = std::max(t_entry, 1e-9);
      ray.hit_class = cls;
      ray.hit_cell = c;
      return ray;
    }
    ray.swept.push_back(c);
    if (t_max_x < t_max_y) {
      t_entry = t_max_x;
      t_max_x += t_delta_x;
      c.x += step_x;
    } else {
      t_entry = t_max_y;
      t_max_y += t_delta_y;
      c.y += step_y;
    }
    if (t_entry >= max_range) break;
  }
  ray.hit_distance = max_range;
  return ray;
}

inline Observation raycast_observe(const WorldGrid& w, const AgentState& s,
                                   const SensorParams& sp = {}) {
  if (!w.free_at(s.x, s.y)) throw InvalidStateError("agent is inside an obstacle");
  if (sp.ray_count < 1 || sp.max_range <= 0.0) throw Error("invalid sensor parameters");
  Observation o;
  o.pose = s;
  o.max_range = sp.max_range;
  o.rays.reserve(static_cast<std::size_t>(sp.ray_count));
  for (int i = 0; i < sp.ray_count; ++i) {
    const double a = s.theta - sp.fov / 2.0 + sp.fov * (i + 0.5) / sp.ray_count;
    o.rays.push_back(cast_ray(w, s.x, s.y, a, sp.max_range));
  }
  return o;
}

// ---------------------------------------------------------------------------
// Episode configuration
// ---------------------------------------------------------------------------

struct EpisodeConfig {
  std::uint64_t world_seed = 0;
  AgentState start;
  CellClass target = CellClass::Bed;
  int max_steps = 500;
  double dt = 0.1;
  double success_distance = 1.0;
};

// ---------------------------------------------------------------------------
// World file I/O
// ---------------------------------------------------------------------------

inline nlohmann::json world_to_json(const WorldGrid& w) {
  std::vector<int> cells;
  cells.reserve(w.cells.size());
  for (auto c : w.cells.values()) cells.push_back(static_cast<int>(c));
  return {{"version", 1},          {"width", w.width()}, {"height", w.height()},
          {"resolution", w.resolution}, {"seed", w.seed},   {"cells", std::move(cells)}};
}

inline WorldGrid world_from_json(const nlohmann::json& j) {
  if (j.value("version", 0) != 1) throw Error("unsupported world file version");
  const int width = j.at("width").get<int>();
  const int height = j.at("height").get<int>();
  const auto& cells = j.at("cells");
  if (!cells.is_array() ||
      cells.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
    throw Error("world cell array does not match width*height");
  std::vector<CellClass> data;
  data.reserve(cells.size());
  for (const auto& c : cells) {
    const int v = c.get<int>();
    if (v < 0 || v >= kCellClassCount) throw Error("world cell class out of range");
    data.push_back(static_cast<CellClass>(v));
  }
  return WorldGrid{Grid<CellClass>(width, height, std::move(data)), j.at("resolution").get<double>(),
                   j.at("seed").get<std::uint64_t>()};
}

inline void save_world(const WorldGrid& w, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot open " + path + " for writing");
  f << world_to_json(w).dump() << '\n';
}

inline WorldGrid load_world(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open " + path);
  return world_from_json(nlohmann::json::parse(f));
}

}  // namespace objnav
