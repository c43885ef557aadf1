#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "objnav/grid.hpp"
#include "objnav/world.hpp"

namespace objnav {

inline constexpr int kObstacleChannel = 0;
inline constexpr int kExploredChannel = 1;
inline constexpr int kMapChannels = 2 + kSemanticClassCount;  // 18
inline constexpr int kLocalMapSize = 140;
inline constexpr int kGlobalMapSize = 420;
inline constexpr int kPoolFactor = kGlobalMapSize / kLocalMapSize;

constexpr int semantic_channel(CellClass c) noexcept { return 2 + semantic_index(c); }

namespace detail {
constexpr int floor_div(int a, int b) noexcept { return a >= 0 ? a / b : -((-a + b - 1) / b); }
}  // namespace detail

/// Channel-major (C, N, N) top-down map: obstacle mask, explored mask and one
/// evidence channel per semantic class. Map cell (x, y) covers `cell_size`
/// world cells starting at world cell origin + cell_size * (x, y).
class SemanticMapStack {
 public:
  SemanticMapStack() = default;
  SemanticMapStack(int size, Cell origin, double resolution, int cell_size = 1)
      : size_(size), origin_(origin), resolution_(resolution), cell_size_(cell_size),
        data_(static_cast<std::size_t>(kMapChannels) * static_cast<std::size_t>(size) *
                  static_cast<std::size_t>(size),
              0.0f) {}

  /// 420x420 map anchored so that the start cell sits at its center.
  static SemanticMapStack global_for(const AgentState& start, double resolution) {
    const Cell c{static_cast<int>(std::floor(start.x / resolution)),
                 static_cast<int>(std::floor(start.y / resolution))};
    return {kGlobalMapSize, {c.x - kGlobalMapSize / 2, c.y - kGlobalMapSize / 2}, resolution};
  }

  [[nodiscard]] int size() const noexcept { return size_; }
  [[nodiscard]] int channels() const noexcept { return kMapChannels; }
  [[nodiscard]] Cell origin() const noexcept { return origin_; }
  [[nodiscard]] double resolution() const noexcept { return resolution_; }
  [[nodiscard]] int cell_size() const noexcept { return cell_size_; }

  [[nodiscard]] bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < size_ && y < size_;
  }
  /// Map cell holding world cell `w`.
  [[nodiscard]] Cell map_cell(Cell w) const noexcept {
    return {detail::floor_div(w.x - origin_.x, cell_size_),
            detail::floor_div(w.y - origin_.y, cell_size_)};
  }
  [[nodiscard]] Cell map_cell(double x, double y) const noexcept {
    return map_cell(Cell{static_cast<int>(std::floor(x / resolution_)),
                         static_cast<int>(std::floor(y / resolution_))});
  }

  float& at(int c, int x, int y) noexcept { return data_[offset(c, x, y)]; }
  [[nodiscard]] float at(int c, int x, int y) const noexcept { return data_[offset(c, x, y)]; }

  [[nodiscard]] std::span<float> channel(int c) noexcept {
    return {data_.data() + offset(c, 0, 0), plane()};
  }
  [[nodiscard]] std::span<const float> channel(int c) const noexcept {
    return {data_.data() + offset(c, 0, 0), plane()};
  }
  [[nodiscard]] Grid<float> channel_grid(int c) const {
    auto ch = channel(c);
    return Grid<float>(size_, size_, std::vector<float>(ch.begin(), ch.end()));
  }
  [[nodiscard]] std::span<float> values() noexcept { return data_; }
  [[nodiscard]] std::span<const float> values() const noexcept { return data_; }

  [[nodiscard]] std::size_t explored_count() const noexcept {
    auto e = channel(kExploredChannel);
    return static_cast<std::size_t>(std::count_if(e.begin(), e.end(), [](float v) { return v > 0.5f; }));
  }

  friend bool operator==(const SemanticMapStack&, const SemanticMapStack&) = default;

 private:
  [[nodiscard]] std::size_t plane() const noexcept {
    return static_cast<std::size_t>(size_) * static_cast<std::size_t>(size_);
  }
  [[nodiscard]] std::size_t offset(int c, int x, int y) const noexcept {
    return static_cast<std::size_t>(c) * plane() +
           static_cast<std::size_t>(y) * static_cast<std::size_t>(size_) + static_cast<std::size_t>(x);
  }

  int size_ = 0;
  Cell origin_{};
  double resolution_ = 0.05;
  int cell_size_ = 1;
  std::vector<float> data_;
};

/// Fuses one observation into `m` in place. Swept cells become explored; hit
/// cells become explored obstacles and raise their class channel by running
/// max. Returns the number of cells dropped for falling outside the map.
inline std::size_t integrate_observation_inplace(SemanticMapStack& m, const Observation& o) {
  const Cell agent = m.map_cell(o.pose.x, o.pose.y);
  if (!m.contains(agent.x, agent.y)) throw Error("integrate_observation: pose outside the map");
  std::size_t dropped = 0;
  for (const Ray& ray : o.rays) {
    for (Cell w : ray.swept) {
      const Cell c = m.map_cell(w);
      if (!m.contains(c.x, c.y)) {
        ++dropped;
        continue;
      }
      m.at(kExploredChannel, c.x, c.y) = 1.0f;
    }
    if (ray.hit_cell) {
      const Cell c = m.map_cell(*ray.hit_cell);
      if (!m.contains(c.x, c.y)) {
        ++dropped;
        continue;
      }
      m.at(kExploredChannel, c.x, c.y) = 1.0f;
      m.at(kObstacleChannel, c.x, c.y) = 1.0f;
      if (ray.hit_class && is_semantic(*ray.hit_class)) {
        float& e = m.at(semantic_channel(*ray.hit_class), c.x, c.y);
        e = std::max(e, 1.0f);
      }
    }
  }
  return dropped;
}

inline SemanticMapStack integrate_observation(SemanticMapStack m, const Observation& o) {
  integrate_observation_inplace(m, o);
  return m;
}

/// N x N window centered on the agent's cell, translation only; cells outside
/// the source map are zero.
inline SemanticMapStack extract_local(const SemanticMapStack& m, const AgentState& pose,
                                      int n = kLocalMapSize) {
  const Cell a = m.map_cell(pose.x, pose.y);
  const Cell corner{a.x - n / 2, a.y - n / 2};
  SemanticMapStack out(n, {m.origin().x + corner.x * m.cell_size(), m.origin().y + corner.y * m.cell_size()},
                       m.resolution(), m.cell_size());
  const int x_lo = std::max(0, -corner.x);
  const int x_hi = std::min(n, m.size() - corner.x);
  for (int c = 0; c < kMapChannels; ++c) {
    for (int y = 0; y < n; ++y) {
      const int sy = corner.y + y;
      if (sy < 0 || sy >= m.size() || x_lo >= x_hi) continue;
      const float* src = &m.channel(c)[static_cast<std::size_t>(sy) * static_cast<std::size_t>(m.size())];
      float* dst = &out.channel(c)[static_cast<std::size_t>(y) * static_cast<std::size_t>(n)];
      std::copy(src + corner.x + x_lo, src + corner.x + x_hi, dst + x_lo);
    }
  }
  return out;
}

/// 3x3 mean pooling of the 420x420 global map down to 140x140.
inline SemanticMapStack pool_global(const SemanticMapStack& m) {
  if (m.size() != kGlobalMapSize) throw ShapeError("pool_global expects a 420x420 map");
  SemanticMapStack out(kLocalMapSize, m.origin(), m.resolution(), m.cell_size() * kPoolFactor);
  for (int c = 0; c < kMapChannels; ++c) {
    for (int y = 0; y < kLocalMapSize; ++y) {
      for (int x = 0; x < kLocalMapSize; ++x) {
        double sum = 0.0;  // exact for 9 floats, so constants pool to themselves
        for (int dy = 0; dy < kPoolFactor; ++dy)
          for (int dx = 0; dx < kPoolFactor; ++dx)
            sum += m.at(c, x * kPoolFactor + dx, y * kPoolFactor + dy);
        out.at(c, x, y) = static_cast<float>(sum / (kPoolFactor * kPoolFactor));
      }
    }
  }
  return out;
}

struct GoalMask {
  Grid<std::uint8_t> mask;
  int count = 0;
};

/// Cells whose strongest semantic channel (evidence > 0.5) is `target`, with
/// 8-connected components smaller than `min_region` removed.
inline GoalMask goal_mask(const SemanticMapStack& local, CellClass target, int min_region = 4) {
  if (!is_target_category(target)) throw Error("goal_mask: target is not a goal category");
  const int n = local.size();
  GoalMask g{Grid<std::uint8_t>(n, n, 0), 0};
  const int want = semantic_channel(target);
  const std::size_t cells = static_cast<std::size_t>(n) * static_cast<std::size_t>(n);
  std::vector<float> best_v(cells, 0.5f);
  std::vector<int> best(cells, -1);
  for (int c = 2; c < kMapChannels; ++c) {
    const auto ch = local.channel(c);
    for (std::size_t i = 0; i < cells; ++i) {
      if (ch[i] > best_v[i]) {
        best_v[i] = ch[i];
        best[i] = c;
      }
    }
  }
  const auto explored = local.channel(kExploredChannel);
  for (std::size_t i = 0; i < cells; ++i)
    if (best[i] == want && explored[i] >= 0.5f) g.mask.values()[i] = 1;
  Grid<std::uint8_t> seen(n, n, 0);
  std::vector<Cell> component;
  std::vector<Cell> stack;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      if (!g.mask(x, y) || seen(x, y)) continue;
      component.clear();
      stack.push_back({x, y});
      seen(x, y) = 1;
      while (!stack.empty()) {
        const Cell c = stack.back();
        stack.pop_back();
        component.push_back(c);
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const Cell nb{c.x + dx, c.y + dy};
            if (g.mask.contains(nb) && g.mask[nb] && !seen[nb]) {
              seen[nb] = 1;
              stack.push_back(nb);
            }
          }
      }
      if (static_cast<int>(component.size()) < min_region)
        for (Cell c : component) g.mask[c] = 0;
      else
        g.count += static_cast<int>(component.size());
    }
  }
  return g;
}

}  // namespace objnav
