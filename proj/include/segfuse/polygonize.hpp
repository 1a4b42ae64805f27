#pragma once

#include <filesystem>
#include <vector>

#include "segfuse/geometry.hpp"
#include "segfuse/grid.hpp"

namespace segfuse {

Mask binarize(const SegMap& prob, float threshold);

struct Labeling {
  Grid<int32_t> labels;  // 0 = background, components numbered 1..count
  int count = 0;
};

// 8-connected components, labeled densely in raster-scan discovery order.
Labeling label_components(const Mask& mask);

// One building footprint. The outer ring runs clockwise in image coordinates
// (positive signed area, y down); hole rings run the other way. Area is the
// component's pixel count, score the mean probability over those pixels.
struct Polygon {
  Ring ring;
  std::vector<Ring> holes;
  int component_id = 0;
  int area = 0;
  double score = 0.0;
};

// Vertices lie on the pixel-corner lattice; collinear runs are merged. A
// component that is only diagonally connected still yields a single outer
// ring (weakly simple: it touches itself at the pinch corners). Rasterizing
// ring+holes even-odd reproduces the component's pixels exactly.
std::vector<Polygon> polygons_from_labels(const Labeling& lab);

std::vector<Polygon> extract_polygons(const SegMap& prob, float threshold, int min_area = 0);
std::vector<Polygon> polygons_from_mask(const Mask& mask, int min_area = 0);

// Outer contour of a mask holding exactly one component; throws otherwise.
Ring trace_contour(const Mask& mask);

Mask rasterize_polygon(const Polygon& poly, int h, int w);

struct PolygonSet {
  int height = 0;
  int width = 0;
  std::vector<Polygon> polys;
};

void save_polygons(const PolygonSet& set, const std::filesystem::path& file);
PolygonSet load_polygons(const std::filesystem::path& file);

}  // namespace segfuse
