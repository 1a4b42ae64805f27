#include "segfuse/overlay.hpp"

#include <cmath>
#include <fstream>

namespace segfuse {

Image8 render_bands(const Stack<float>& channels, std::array<int, 3> bands) {
  for (int b : bands)
    if (b < 0 || b >= channels.c)
      throw Error("overlay: band " + std::to_string(b) + " out of range, stack has " +
                  std::to_string(channels.c) + " channels");
  Image8 img(channels.h, channels.w);
  for (int k = 0; k < 3; ++k) {
    const float* plane = channels.channel(bands[size_t(k)]);
    float lo = plane[0], hi = plane[0];
    for (size_t i = 0; i < channels.plane(); ++i) {
      lo = std::min(lo, plane[i]);
      hi = std::max(hi, plane[i]);
    }
    float span = hi - lo;
    for (size_t i = 0; i < channels.plane(); ++i) {
      float v = span > 0.0f ? (plane[i] - lo) / span : 0.0f;
      img.rgb[i * 3 + size_t(k)] = uint8_t(std::lround(v * 255.0f));
    }
  }
  return img;
}

void draw_outline(Image8& img, const Polygon& poly, Color color) {
  Mask m = rasterize_polygon(poly, img.h, img.w);
  for (int r = 0; r < img.h; ++r) {
    for (int c = 0; c < img.w; ++c) {
      if (!m.at(r, c)) continue;
      bool edge = r == 0 || r == img.h - 1 || c == 0 || c == img.w - 1 || !m.at(r - 1, c) ||
                  !m.at(r + 1, c) || !m.at(r, c - 1) || !m.at(r, c + 1);
      if (!edge) continue;
      uint8_t* px = img.px(r, c);
      px[0] = color[0];
      px[1] = color[1];
      px[2] = color[2];
    }
  }
}

Image8 render_overlay(const Stack<float>& channels, std::array<int, 3> bands,
                      const std::vector<Polygon>& preds, const std::vector<Polygon>& gts,
                      const MatchReport& match) {
  Image8 img = render_bands(channels, bands);
  for (int g : match.unmatched_gt) draw_outline(img, gts[size_t(g)], kMissedColor);
  for (int p : match.unmatched_pred) draw_outline(img, preds[size_t(p)], kFalsePosColor);
  for (const MatchPair& pair : match.pairs)
    draw_outline(img, preds[size_t(pair.pred)], kMatchedColor);
  return img;
}

void write_ppm(const Image8& img, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error("overlay: cannot write " + file.string());
  out << "P6\n" << img.w << " " << img.h << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.rgb.data()), std::streamsize(img.rgb.size()));
  if (!out) throw Error("overlay: short write to " + file.string());
}

}  // namespace segfuse
