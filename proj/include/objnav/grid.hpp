#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace objnav {

/// Base class of every error thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when two grids that must agree in size do not.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Integer cell coordinate. x is the column, y the row; +y is north.
struct Cell {
  int x = 0;
  int y = 0;

  friend constexpr bool operator==(Cell, Cell) = default;
  friend constexpr auto operator<=>(Cell, Cell) = default;
};

/// Dense row-major 2D grid.
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : width_(width), height_(height) {
    if (width < 0 || height < 0) {
      throw ShapeError("grid dimensions must be non-negative");
    }
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }
  Grid(int width, int height, std::vector<T> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (width < 0 || height < 0 ||
        data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
      throw ShapeError("grid data does not match " + std::to_string(width) + "x" +
                       std::to_string(height));
    }
  }

  [[nodiscard]] int width() const noexcept { return width_; }
  [[nodiscard]] int height() const noexcept { return height_; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  [[nodiscard]] bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }
  [[nodiscard]] bool contains(Cell c) const noexcept { return contains(c.x, c.y); }

  [[nodiscard]] std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }
  [[nodiscard]] Cell cell_of(std::size_t i) const noexcept {
    return {static_cast<int>(i % static_cast<std::size_t>(width_)),
            static_cast<int>(i / static_cast<std::size_t>(width_))};
  }

  T& operator()(int x, int y) noexcept { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const noexcept { return data_[index(x, y)]; }
  T& operator[](Cell c) noexcept { return data_[index(c.x, c.y)]; }
  const T& operator[](Cell c) const noexcept { return data_[index(c.x, c.y)]; }

  T& at(int x, int y) {
    if (!contains(x, y)) throw std::out_of_range("grid cell out of range");
    return data_[index(x, y)];
  }
  const T& at(int x, int y) const {
    if (!contains(x, y)) throw std::out_of_range("grid cell out of range");
    return data_[index(x, y)];
  }

  /// Value at (x, y), or `fallback` outside the grid.
  [[nodiscard]] T value_or(int x, int y, T fallback) const noexcept {
    return contains(x, y) ? data_[index(x, y)] : fallback;
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  [[nodiscard]] std::span<T> values() noexcept { return data_; }
  [[nodiscard]] std::span<const T> values() const noexcept { return data_; }
  [[nodiscard]] const std::vector<T>& data() const noexcept { return data_; }

  template <typename U>
  [[nodiscard]] bool same_shape(const Grid<U>& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

template <typename A, typename B>
void require_same_shape(const Grid<A>& a, const Grid<B>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch (" + std::to_string(a.width()) + "x" +
                     std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                     std::to_string(b.height()) + ")");
  }
}

/// Elementwise conversion between grid value types.
template <typename To, typename From, typename Fn>
Grid<To> map_grid(const Grid<From>& g, Fn&& fn) {
  Grid<To> out(g.width(), g.height());
  auto src = g.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = fn(src[i]);
  return out;
}

/// Copies the `w`x`h` window whose lower-left corner is (x0, y0); cells outside
/// the source take `pad`.
template <typename T>
Grid<T> crop(const Grid<T>& g, int x0, int y0, int w, int h, T pad) {
  Grid<T> out(w, h, pad);
  for (int y = 0; y < h; ++y) {
    const int sy = y0 + y;
    if (sy < 0 || sy >= g.height()) continue;
    for (int x = 0; x < w; ++x) {
      const int sx = x0 + x;
      if (sx >= 0 && sx < g.width()) out(x, y) = g(sx, sy);
    }
  }
  return out;
}

}  // namespace objnav
