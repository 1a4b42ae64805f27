#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace segfuse {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// 2-D row-major raster. SegMap = Grid<float>, Mask = Grid<uint8_t>,
// label maps = Grid<int32_t>.
template <class T>
struct Grid {
  int h = 0;
  int w = 0;
  std::vector<T> v;

  Grid() = default;
  Grid(int h_, int w_, T fill = T{}) : h(h_), w(w_), v(size_t(h_) * size_t(w_), fill) {}

  T& at(int r, int c) { return v[size_t(r) * w + c]; }
  const T& at(int r, int c) const { return v[size_t(r) * w + c]; }
  size_t size() const { return v.size(); }
  bool same_shape(const Grid& o) const { return h == o.h && w == o.w; }

  bool operator==(const Grid& o) const { return h == o.h && w == o.w && v == o.v; }
};

// 3-D channel-major raster (C x H x W), row-major within a channel.
template <class T>
struct Stack {
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<T> v;

  Stack() = default;
  Stack(int c_, int h_, int w_, T fill = T{})
      : c(c_), h(h_), w(w_), v(size_t(c_) * size_t(h_) * size_t(w_), fill) {}

  T& at(int ch, int r, int col) { return v[(size_t(ch) * h + r) * w + col]; }
  const T& at(int ch, int r, int col) const { return v[(size_t(ch) * h + r) * w + col]; }
  size_t size() const { return v.size(); }
  size_t plane() const { return size_t(h) * size_t(w); }

  T* channel(int ch) { return v.data() + size_t(ch) * plane(); }
  const T* channel(int ch) const { return v.data() + size_t(ch) * plane(); }

  bool operator==(const Stack& o) const {
    return c == o.c && h == o.h && w == o.w && v == o.v;
  }
};

using SegMap = Grid<float>;
using Mask = Grid<uint8_t>;

inline int foreground_count(const Mask& m) {
  int n = 0;
  for (uint8_t p : m.v) n += (p != 0);
  return n;
}

inline Grid<float> mask_to_float(const Mask& m) {
  Grid<float> out(m.h, m.w);
  for (size_t i = 0; i < m.v.size(); ++i) out.v[i] = m.v[i] ? 1.0f : 0.0f;
  return out;
}

}  // namespace segfuse
