#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "objnav/grid.hpp"

namespace objnav {

/// Row-major float32 tensor.
struct Tensor {
  std::vector<std::uint32_t> shape;
  std::vector<float> data;

  [[nodiscard]] static std::size_t element_count(const std::vector<std::uint32_t>& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Errors raised while decoding SMT files.
class FormatError : public Error {
 public:
  using Error::Error;
};
class BadMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};
class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};
class DimensionOverflowError : public FormatError {
 public:
  using FormatError::FormatError;
};

namespace detail {

inline void put_u32le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}
inline std::uint32_t get_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

/// Little-endian float32 payload of `values`.
inline std::string f32le_bytes(std::span<const float> values) {
  std::string out;
  out.reserve(values.size() * 4);
  for (float f : values) detail::put_u32le(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

inline std::vector<float> f32le_values(std::string_view bytes) {
  if (bytes.size() % 4 != 0) throw TruncatedError("float32 payload length is not a multiple of 4");
  std::vector<float> out(bytes.size() / 4);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::bit_cast<float>(detail::get_u32le(p + 4 * i));
  return out;
}

/// SMT layout: "SMT1" | u8 ndim | ndim x u32 LE dims | prod(dims) x f32 LE.
inline std::string encode_smt(const Tensor& t) {
  if (t.shape.size() > 255) throw DimensionOverflowError("SMT supports at most 255 dimensions");
  if (Tensor::element_count(t.shape) != t.data.size()) throw ShapeError("tensor data does not match its shape");
  std::string out = "SMT1";
  out.push_back(static_cast<char>(t.shape.size()));
  for (auto d : t.shape) detail::put_u32le(out, d);
  out += f32le_bytes(t.data);
  return out;
}

inline Tensor decode_smt(std::string_view bytes) {
  if (bytes.size() < 5) throw TruncatedError("SMT header truncated");
  if (bytes.substr(0, 4) != "SMT1") throw BadMagicError("bad SMT magic '" + std::string(bytes.substr(0, 4)) + "'");
  const auto ndim = static_cast<unsigned char>(bytes[4]);
  if (bytes.size() < 5 + 4 * static_cast<std::size_t>(ndim)) throw TruncatedError("SMT dims truncated");
  Tensor t;
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + 5;
  std::uint64_t count = 1;
  for (unsigned i = 0; i < ndim; ++i) {
    const std::uint32_t d = detail::get_u32le(p + 4 * i);
    t.shape.push_back(d);
    if (d != 0 && count > std::numeric_limits<std::uint64_t>::max() / 4 / d)
      throw DimensionOverflowError("SMT element count overflows");
    count *= d;
  }
  const std::size_t header = 5 + 4 * static_cast<std::size_t>(ndim);
  const std::uint64_t payload = bytes.size() - header;
  if (payload < count * 4) throw TruncatedError("SMT payload truncated");
  if (payload > count * 4) throw FormatError("SMT file has trailing bytes");
  t.data = f32le_values(bytes.substr(header));
  return t;
}

inline void write_tensor(const std::string& path, const Tensor& t) {
  const std::string bytes = encode_smt(t);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("write failed: " + path);
}

inline Tensor read_tensor(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path);
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_smt(bytes);
}

template <typename T>
Tensor grid_tensor(const Grid<T>& g) {
  Tensor t{{1, static_cast<std::uint32_t>(g.height()), static_cast<std::uint32_t>(g.width())}, {}};
  t.data.reserve(g.size());
  for (const T& v : g.values()) t.data.push_back(static_cast<float>(v));
  return t;
}

/// Interprets a [1,h,w] or [h,w] tensor as a grid.
inline Grid<double> tensor_grid(const Tensor& t) {
  if (t.shape.size() == 3 && t.shape[0] == 1) {
    return Grid<double>(static_cast<int>(t.shape[2]), static_cast<int>(t.shape[1]),
                        std::vector<double>(t.data.begin(), t.data.end()));
  }
  if (t.shape.size() == 2) {
    return Grid<double>(static_cast<int>(t.shape[1]), static_cast<int>(t.shape[0]),
                        std::vector<double>(t.data.begin(), t.data.end()));
  }
  throw ShapeError("tensor is not a single-channel map");
}

}  // namespace objnav
