#include <doctest.h>

#include <algorithm>

#include "segfuse/geometry.hpp"
#include "segfuse/grid.hpp"

using namespace segfuse;

namespace {

Ring rect(double x0, double y0, double x1, double y1) {
  return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, y0}};
}

size_t count_set(const Mask& m) {
  size_t n = 0;
  for (auto v : m.v) n += v;
  return n;
}

}  // namespace

TEST_CASE("ring closure and signed area") {
  Ring r = rect(0, 0, 1, 1);  // clockwise in image coordinates (y down)
  CHECK(ring_closed(r));
  CHECK(ring_signed_area(r) == doctest::Approx(1.0));
  CHECK(ring_abs_area(r) == doctest::Approx(1.0));

  Ring ccw = {{0, 0}, {0, 1}, {1, 1}, {1, 0}, {0, 0}};
  CHECK(ring_signed_area(ccw) == doctest::Approx(-1.0));
  CHECK(ring_abs_area(ccw) == doctest::Approx(1.0));

  Ring open = {{0, 0}, {1, 0}, {1, 1}};
  CHECK(!ring_closed(open));
}

TEST_CASE("rectangle rasterizes to exactly its pixels") {
  Mask m = rasterize_rings({rect(1, 1, 3, 4)}, 6, 6);
  CHECK(count_set(m) == 6);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 6; ++c) {
      bool inside = r >= 1 && r < 4 && c >= 1 && c < 3;
      CHECK(m.at(r, c) == (inside ? 1 : 0));
    }
}

TEST_CASE("even-odd rule carves holes regardless of orientation") {
  Ring outer = rect(0, 0, 4, 4);
  Ring hole = rect(1, 1, 3, 3);
  Mask m = rasterize_rings({outer, hole}, 4, 4);
  CHECK(count_set(m) == 12);  // 16 - 4 hole pixels
  CHECK(m.at(0, 0) == 1);
  CHECK(m.at(1, 1) == 0);
  CHECK(m.at(2, 2) == 0);
  CHECK(m.at(3, 3) == 1);

  std::reverse(hole.begin(), hole.end());
  Mask m2 = rasterize_rings({outer, hole}, 4, 4);
  CHECK(m.v == m2.v);
}

TEST_CASE("rasterization clips to the grid") {
  Mask m = rasterize_rings({rect(-2, -2, 2, 2)}, 4, 4);
  CHECK(count_set(m) == 4);
  CHECK(m.at(0, 0) == 1);
  CHECK(m.at(1, 1) == 1);
  CHECK(m.at(2, 2) == 0);

  Mask far = rasterize_rings({rect(10, 10, 12, 12)}, 4, 4);
  CHECK(count_set(far) == 0);
}

TEST_CASE("non-axis-aligned ring covers the pixels whose centers it contains") {
  // Right triangle (0,0)-(4,0)-(0,4): pixel centers (c+0.5, r+0.5) below the
  // diagonal x + y = 4.
  Ring tri = {{0, 0}, {4, 0}, {0, 4}, {0, 0}};
  Mask m = rasterize_rings({tri}, 4, 4);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      bool inside = (c + 0.5) + (r + 0.5) < 4.0;
      CHECK(m.at(r, c) == (inside ? 1 : 0));
    }
}

TEST_CASE("rasterize_into ors onto the target") {
  Mask m(4, 4);
  rasterize_into(m, rect(0, 0, 2, 2), {});
  rasterize_into(m, rect(2, 2, 4, 4), {});
  CHECK(count_set(m) == 8);
  CHECK(m.at(0, 0) == 1);
  CHECK(m.at(3, 3) == 1);
  CHECK(m.at(0, 3) == 0);

  Mask holed(4, 4);
  rasterize_into(holed, rect(0, 0, 4, 4), {rect(1, 1, 3, 3)});
  CHECK(count_set(holed) == 12);
}

TEST_CASE("rasterize_union merges overlapping footprints") {
  Mask m = rasterize_union({rect(0, 0, 3, 3), rect(2, 2, 4, 4)}, 4, 4);
  CHECK(count_set(m) == 12);  // 9 + 4 - 1 shared pixel
}
