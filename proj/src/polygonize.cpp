#include "segfuse/polygonize.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

namespace segfuse {

using nlohmann::json;

Mask binarize(const SegMap& prob, float threshold) {
  Mask out(prob.h, prob.w);
  for (size_t i = 0; i < prob.v.size(); ++i) out.v[i] = prob.v[i] >= threshold ? 1 : 0;
  return out;
}

Labeling label_components(const Mask& mask) {
  Labeling lab;
  lab.labels = Grid<int32_t>(mask.h, mask.w, 0);
  std::vector<size_t> stack;
  for (int r = 0; r < mask.h; ++r) {
    for (int c = 0; c < mask.w; ++c) {
      if (!mask.at(r, c) || lab.labels.at(r, c)) continue;
      int32_t id = ++lab.count;
      stack.push_back(size_t(r) * mask.w + c);
      lab.labels.v[stack.back()] = id;
      while (!stack.empty()) {
        size_t p = stack.back();
        stack.pop_back();
        int pr = int(p / size_t(mask.w)), pc = int(p % size_t(mask.w));
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            if (!dr && !dc) continue;
            int nr = pr + dr, nc = pc + dc;
            if (nr < 0 || nr >= mask.h || nc < 0 || nc >= mask.w) continue;
            if (!mask.at(nr, nc) || lab.labels.at(nr, nc)) continue;
            lab.labels.at(nr, nc) = id;
            stack.push_back(size_t(nr) * mask.w + nc);
          }
        }
      }
    }
  }
  return lab;
}

namespace {

struct BoundaryEdge {
  int from, to;   // vertex ids on the (w+1) x (h+1) corner lattice
  int owner;      // linear index of the pixel this edge borders
};

// Drop intermediate vertices of straight runs; keep the ring closed.
Ring compact_ring(const std::vector<int>& verts, int vw) {
  auto pt = [vw](int v) { return Point{double(v % vw), double(v / vw)}; };
  size_t n = verts.size() - 1;  // verts is closed; work on the open cycle
  Ring out;
  for (size_t i = 0; i < n; ++i) {
    int prev = verts[(i + n - 1) % n], cur = verts[i], next = verts[(i + 1) % n];
    Point a = pt(prev), b = pt(cur), c = pt(next);
    double cross = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x);
    if (cross != 0.0) out.push_back(b);
  }
  out.push_back(out.front());
  return out;
}

}  // namespace

std::vector<Polygon> polygons_from_labels(const Labeling& lab) {
  const Grid<int32_t>& L = lab.labels;
  const int h = L.h, w = L.w, vw = w + 1;
  auto diff = [&](int r, int c, int32_t id) {
    return r < 0 || r >= h || c < 0 || c >= w || L.at(r, c) != id;
  };

  // Directed boundary edges per component, generated in raster-scan order so
  // each walk starts from the component's top-left boundary corner.
  std::vector<std::vector<BoundaryEdge>> edges(size_t(lab.count) + 1);
  std::vector<int> area(size_t(lab.count) + 1, 0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      int32_t id = L.at(r, c);
      if (!id) continue;
      ++area[size_t(id)];
      int owner = r * w + c;
      int tl = r * vw + c, tr = tl + 1, bl = tl + vw, br = bl + 1;
      auto& e = edges[size_t(id)];
      if (diff(r - 1, c, id)) e.push_back({tl, tr, owner});
      if (diff(r, c + 1, id)) e.push_back({tr, br, owner});
      if (diff(r + 1, c, id)) e.push_back({br, bl, owner});
      if (diff(r, c - 1, id)) e.push_back({bl, tl, owner});
    }
  }

  std::vector<Polygon> polys;
  for (int32_t id = 1; id <= lab.count; ++id) {
    auto& e = edges[size_t(id)];
    // vertex -> up to two outgoing edge indices (two only at pinch corners)
    std::unordered_map<int, std::pair<int, int>> outgoing;
    outgoing.reserve(e.size() * 2);
    for (int i = 0; i < int(e.size()); ++i) {
      auto [it, fresh] = outgoing.try_emplace(e[size_t(i)].from, i, -1);
      if (!fresh) it->second.second = i;
    }
    std::vector<char> used(e.size(), 0);
    Polygon poly;
    poly.component_id = id;
    poly.area = area[size_t(id)];
    for (int start = 0; start < int(e.size()); ++start) {
      if (used[size_t(start)]) continue;
      std::vector<int> verts{e[size_t(start)].from};
      int cur = start;
      for (;;) {
        used[size_t(cur)] = 1;
        int v = e[size_t(cur)].to;
        verts.push_back(v);
        if (v == verts.front()) break;
        auto [a, b] = outgoing.at(v);
        int next = -1;
        if (a >= 0 && !used[size_t(a)]) next = a;
        if (b >= 0 && !used[size_t(b)]) {
          // pinch corner: stay with the ring owned by the other pixel, which
          // stitches diagonally-touching pixels into one outer ring
          if (next < 0 || e[size_t(b)].owner != e[size_t(cur)].owner) next = b;
        }
        if (next < 0) throw Error("polygonize: boundary walk dead-ends (corrupt labeling)");
        cur = next;
      }
      Ring ring = compact_ring(verts, vw);
      if (ring_signed_area(ring) > 0.0) {
        if (!poly.ring.empty())
          throw Error("polygonize: component " + std::to_string(id) + " produced two outer rings");
        poly.ring = std::move(ring);
      } else {
        poly.holes.push_back(std::move(ring));
      }
    }
    if (poly.ring.empty())
      throw Error("polygonize: component " + std::to_string(id) + " has no outer ring");
    polys.push_back(std::move(poly));
  }
  return polys;
}

std::vector<Polygon> extract_polygons(const SegMap& prob, float threshold, int min_area) {
  Mask mask = binarize(prob, threshold);
  Labeling lab = label_components(mask);
  std::vector<Polygon> polys = polygons_from_labels(lab);

  std::vector<double> sums(size_t(lab.count) + 1, 0.0);
  for (size_t i = 0; i < prob.v.size(); ++i)
    if (lab.labels.v[i]) sums[size_t(lab.labels.v[i])] += double(prob.v[i]);
  for (Polygon& p : polys) p.score = sums[size_t(p.component_id)] / double(p.area);

  if (min_area > 0) {
    std::erase_if(polys, [min_area](const Polygon& p) { return p.area < min_area; });
  }
  return polys;
}

std::vector<Polygon> polygons_from_mask(const Mask& mask, int min_area) {
  return extract_polygons(mask_to_float(mask), 0.5f, min_area);
}

Ring trace_contour(const Mask& mask) {
  Labeling lab = label_components(mask);
  if (lab.count != 1)
    throw Error("trace_contour: expected one component, found " + std::to_string(lab.count));
  return polygons_from_labels(lab)[0].ring;
}

Mask rasterize_polygon(const Polygon& poly, int h, int w) {
  std::vector<Ring> rings{poly.ring};
  rings.insert(rings.end(), poly.holes.begin(), poly.holes.end());
  return rasterize_rings(rings, h, w);
}

static json ring_to_json(const Ring& ring) {
  json arr = json::array();
  for (const Point& p : ring) arr.push_back({p.x, p.y});
  return arr;
}

static Ring ring_from_json(const json& arr, const std::string& where) {
  Ring ring;
  for (const json& p : arr) {
    if (!p.is_array() || p.size() != 2)
      throw Error("polygon set: malformed vertex in " + where);
    ring.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  if (!ring_closed(ring)) throw Error("polygon set: unclosed ring in " + where);
  return ring;
}

void save_polygons(const PolygonSet& set, const std::filesystem::path& file) {
  json polys = json::array();
  for (const Polygon& p : set.polys) {
    json entry{{"component_id", p.component_id},
               {"area", p.area},
               {"score", p.score},
               {"ring", ring_to_json(p.ring)}};
    if (!p.holes.empty()) {
      json holes = json::array();
      for (const Ring& hole : p.holes) holes.push_back(ring_to_json(hole));
      entry["holes"] = holes;
    }
    polys.push_back(std::move(entry));
  }
  json doc{{"schema_version", 1},
           {"height", set.height},
           {"width", set.width},
           {"polygons", polys}};
  std::ofstream out(file);
  if (!out) throw Error("polygon set: cannot write " + file.string());
  out << doc.dump(2) << "\n";
}

PolygonSet load_polygons(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error("polygon set: cannot open " + file.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw Error("polygon set: bad json in " + file.string() + ": " + e.what());
  }
  if (doc.value("schema_version", 0) != 1)
    throw Error("polygon set: unsupported schema_version in " + file.string());
  PolygonSet set;
  set.height = doc.at("height").get<int>();
  set.width = doc.at("width").get<int>();
  for (const json& entry : doc.at("polygons")) {
    Polygon p;
    p.component_id = entry.at("component_id").get<int>();
    p.area = entry.at("area").get<int>();
    p.score = entry.at("score").get<double>();
    p.ring = ring_from_json(entry.at("ring"), file.string());
    if (entry.contains("holes"))
      for (const json& hole : entry.at("holes"))
        p.holes.push_back(ring_from_json(hole, file.string()));
    set.polys.push_back(std::move(p));
  }
  return set;
}

}  // namespace segfuse
