#include "segfuse/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace segfuse {

bool ring_closed(const Ring& ring) {
  if (ring.size() < 4) return false;
  return ring.front().x == ring.back().x && ring.front().y == ring.back().y;
}

double ring_signed_area(const Ring& ring) {
  double twice = 0.0;
  for (size_t i = 0; i + 1 < ring.size(); ++i) {
    twice += ring[i].x * ring[i + 1].y - ring[i + 1].x * ring[i].y;
  }
  return 0.5 * twice;
}

double ring_abs_area(const Ring& ring) { return std::fabs(ring_signed_area(ring)); }

namespace {

// Scanline crossings at y for one ring; half-open rule min(y) <= y < max(y)
// keeps shared vertices from double counting.
void collect_crossings(const Ring& ring, double y, std::vector<double>& xs) {
  for (size_t i = 0; i + 1 < ring.size(); ++i) {
    double y1 = ring[i].y, y2 = ring[i + 1].y;
    if (y1 == y2) continue;
    double lo = std::min(y1, y2), hi = std::max(y1, y2);
    if (y < lo || y >= hi) continue;
    double t = (y - y1) / (y2 - y1);
    xs.push_back(ring[i].x + t * (ring[i + 1].x - ring[i].x));
  }
}

void fill_even_odd(Mask& mask, const std::vector<Ring>& rings) {
  std::vector<double> xs;
  for (int r = 0; r < mask.h; ++r) {
    double y = r + 0.5;
    xs.clear();
    for (const Ring& ring : rings) collect_crossings(ring, y, xs);
    if (xs.empty()) continue;
    std::sort(xs.begin(), xs.end());
    for (size_t i = 0; i + 1 < xs.size(); i += 2) {
      // centers c + 0.5 in [xs[i], xs[i+1])
      int c0 = int(std::ceil(xs[i] - 0.5));
      int c1 = int(std::ceil(xs[i + 1] - 0.5));  // exclusive
      c0 = std::max(c0, 0);
      c1 = std::min(c1, mask.w);
      for (int c = c0; c < c1; ++c) mask.at(r, c) = 1;
    }
  }
}

}  // namespace

Mask rasterize_rings(const std::vector<Ring>& rings, int height, int width) {
  Mask mask(height, width, 0);
  fill_even_odd(mask, rings);
  return mask;
}

void rasterize_into(Mask& mask, const Ring& outer, const std::vector<Ring>& holes) {
  std::vector<Ring> rings;
  rings.reserve(1 + holes.size());
  rings.push_back(outer);
  for (const Ring& h : holes) rings.push_back(h);
  Mask one(mask.h, mask.w, 0);
  fill_even_odd(one, rings);
  for (size_t i = 0; i < mask.v.size(); ++i) mask.v[i] |= one.v[i];
}

Mask rasterize_union(const std::vector<Ring>& rings, int height, int width) {
  Mask mask(height, width, 0);
  for (const Ring& ring : rings) rasterize_into(mask, ring, {});
  return mask;
}

}  // namespace segfuse
