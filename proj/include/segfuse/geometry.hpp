#pragma once

#include <vector>

#include "segfuse/grid.hpp"

namespace segfuse {

// Polygon vertex in pixel-corner coordinates: x runs along columns in
// [0, W], y along rows in [0, H]. Pixel (r, c) spans [c, c+1] x [r, r+1]
// and has its center at (c + 0.5, r + 0.5).
struct Point {
  double x = 0.0;
  double y = 0.0;
};

using Ring = std::vector<Point>;  // closed: front() == back()

bool ring_closed(const Ring& ring);

// Signed shoelace area; positive for rings wound clockwise in image
// coordinates (y grows downward).
double ring_signed_area(const Ring& ring);

double ring_abs_area(const Ring& ring);

// Center-of-pixel coverage under the even-odd rule, taken over all edges of
// all given rings together (so a hole ring cancels the region of its outer
// ring). Pixels outside [0,w)x[0,h) are clipped away.
Mask rasterize_rings(const std::vector<Ring>& rings, int height, int width);

// OR a single polygon (outer ring minus its holes) into an existing mask.
void rasterize_into(Mask& mask, const Ring& outer, const std::vector<Ring>& holes);

// Union of independently filled polygons. Overlapping polygons OR together
// rather than cancelling.
Mask rasterize_union(const std::vector<Ring>& rings, int height, int width);

}  // namespace segfuse
