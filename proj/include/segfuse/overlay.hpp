#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "segfuse/polygonize.hpp"
#include "segfuse/scorer.hpp"

namespace segfuse {

struct Image8 {
  int h = 0, w = 0;
  std::vector<uint8_t> rgb;  // h*w*3, row-major

  Image8() = default;
  Image8(int h_, int w_) : h(h_), w(w_), rgb(size_t(h_) * size_t(w_) * 3, 0) {}
  uint8_t* px(int r, int c) { return rgb.data() + (size_t(r) * w + c) * 3; }
};

using Color = std::array<uint8_t, 3>;

inline constexpr Color kMatchedColor{255, 255, 255};  // white: matched predictions
inline constexpr Color kFalsePosColor{255, 255, 0};   // yellow: unmatched predictions
inline constexpr Color kMissedColor{0, 64, 255};      // blue: missed ground truth

// Per-band min-max stretch of three channels into an RGB backdrop.
Image8 render_bands(const Stack<float>& channels, std::array<int, 3> bands);

// Paint the polygon's one-pixel-wide boundary (pixels of the footprint with a
// 4-neighbour outside it) in the given color.
void draw_outline(Image8& img, const Polygon& poly, Color color);

// Review image for one tile: imagery backdrop, then missed ground truth,
// false positives, and matched predictions outlined in that order.
Image8 render_overlay(const Stack<float>& channels, std::array<int, 3> bands,
                      const std::vector<Polygon>& preds, const std::vector<Polygon>& gts,
                      const MatchReport& match);

// Binary PPM (P6); identical inputs produce identical bytes.
void write_ppm(const Image8& img, const std::filesystem::path& file);

}  // namespace segfuse
