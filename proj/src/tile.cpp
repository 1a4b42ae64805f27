#include "segfuse/tile.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "segfuse/rng.hpp"

namespace segfuse {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Per-channel palette (building value, background value). The first triple
// has strong contrast, the middle one moderate, the last two are weak; base
// models trained on different channel subsets therefore differ in quality.
constexpr int kPaletteSize = 8;
constexpr double kBuilding[kPaletteSize] = {0.78, 0.72, 0.25, 0.62, 0.38, 0.60, 0.55, 0.44};
constexpr double kBackground[kPaletteSize] = {0.25, 0.22, 0.75, 0.40, 0.58, 0.42, 0.47, 0.52};

double building_value(int c) { return kBuilding[c % kPaletteSize]; }
double background_value(int c) { return kBackground[c % kPaletteSize]; }

struct IntRect {  // pixel rectangle [x0, x1) x [y0, y1)
  int x0, y0, x1, y1;
};

Ring rect_ring(const IntRect& r) {
  return Ring{{double(r.x0), double(r.y0)},
              {double(r.x1), double(r.y0)},
              {double(r.x1), double(r.y1)},
              {double(r.x0), double(r.y1)},
              {double(r.x0), double(r.y0)}};
}

std::vector<std::pair<int, int>> mask_pixels(const Mask& m) {
  std::vector<std::pair<int, int>> px;
  for (int r = 0; r < m.h; ++r)
    for (int c = 0; c < m.w; ++c)
      if (m.at(r, c)) px.emplace_back(r, c);
  return px;
}

bool eight_connected(const Mask& m) {
  auto px = mask_pixels(m);
  if (px.empty()) return false;
  Mask seen(m.h, m.w, 0);
  std::vector<std::pair<int, int>> stack = {px[0]};
  seen.at(px[0].first, px[0].second) = 1;
  size_t count = 0;
  while (!stack.empty()) {
    auto [r, c] = stack.back();
    stack.pop_back();
    ++count;
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) {
        int rr = r + dr, cc = c + dc;
        if (rr < 0 || rr >= m.h || cc < 0 || cc >= m.w) continue;
        if (m.at(rr, cc) && !seen.at(rr, cc)) {
          seen.at(rr, cc) = 1;
          stack.emplace_back(rr, cc);
        }
      }
  }
  return count == px.size();
}

// Candidate pixels may touch `occupied` only if allow_touch; they must never
// overlap it. Free placements additionally keep a one-pixel gap so that
// accidental adjacency never happens -- adjacency is controlled exclusively
// by adjacency_prob.
bool placement_ok(const Mask& candidate, const Mask& occupied, bool allow_touch) {
  for (int r = 0; r < candidate.h; ++r)
    for (int c = 0; c < candidate.w; ++c) {
      if (!candidate.at(r, c)) continue;
      if (occupied.at(r, c)) return false;
      if (!allow_touch) {
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            int rr = r + dr, cc = c + dc;
            if (rr < 0 || rr >= candidate.h || cc < 0 || cc >= candidate.w) continue;
            if (occupied.at(rr, cc)) return false;
          }
      }
    }
  return true;
}

void commit(Mask& occupied, Grid<int32_t>& owner, const Mask& candidate, int building) {
  for (size_t i = 0; i < occupied.v.size(); ++i)
    if (candidate.v[i]) {
      occupied.v[i] = 1;
      owner.v[i] = building + 1;
    }
}

}  // namespace

void validate_scene_spec(const SceneSpec& spec) {
  std::ostringstream why;
  if (spec.width < 32 || spec.height < 32)
    why << "width and height must be >= 32 (got " << spec.width << "x" << spec.height << ")";
  else if (spec.size_min < 2)
    why << "size_range.min must be >= 2 (got " << spec.size_min << ")";
  else if (spec.size_max < spec.size_min)
    why << "size_range.max < size_range.min";
  else if (spec.adjacency_prob < 0.0 || spec.adjacency_prob > 1.0)
    why << "adjacency_prob must be in [0,1] (got " << spec.adjacency_prob << ")";
  else if (spec.channel_noise < 0.0)
    why << "channel_noise must be >= 0";
  else if (spec.channel_dropout < 0.0 || spec.channel_dropout > 1.0)
    why << "channel_dropout must be in [0,1] (got " << spec.channel_dropout << ")";
  else if (spec.n_buildings < 0)
    why << "n_buildings must be >= 0";
  else if (spec.n_channels < 1)
    why << "n_channels must be >= 1";
  if (!why.str().empty()) throw Error("generate_scene: invalid spec: " + why.str());
}

Tile generate_scene(const SceneSpec& spec) {
  validate_scene_spec(spec);
  const int W = spec.width, H = spec.height;
  Rng rng(spec.seed);

  Mask occupied(H, W, 0);
  Grid<int32_t> owner(H, W, 0);  // building index + 1 per foreground pixel
  std::vector<Ring> polygons;
  std::vector<IntRect> anchors;  // axis-aligned buildings usable for adjacency

  constexpr int kMaxAttempts = 200;
  for (int b = 0; b < spec.n_buildings; ++b) {
    bool want_adjacent = b > 0 && !anchors.empty() && rng.uniform() < spec.adjacency_prob;
    bool placed = false;

    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      if (want_adjacent) {
        const IntRect& host = anchors[rng.below(anchors.size())];
        int bw = rng.range(spec.size_min, spec.size_max);
        int bh = rng.range(spec.size_min, spec.size_max);
        int side = rng.range(0, 3);  // 0=E 1=W 2=S 3=N
        IntRect r{};
        if (side == 0) r = {host.x1, 0, host.x1 + bw, 0};
        if (side == 1) r = {host.x0 - bw, 0, host.x0, 0};
        if (side <= 1) {
          // shared vertical edge-run of >= 2 pixels
          int lo = host.y0 - bh + 2, hi = host.y1 - 2;
          if (hi < lo) continue;
          r.y0 = rng.range(lo, hi);
          r.y1 = r.y0 + bh;
        } else {
          if (side == 2) r = {0, host.y1, 0, host.y1 + bh};
          if (side == 3) r = {0, host.y0 - bh, 0, host.y0};
          int lo = host.x0 - bw + 2, hi = host.x1 - 2;
          if (hi < lo) continue;
          r.x0 = rng.range(lo, hi);
          r.x1 = r.x0 + bw;
        }
        if (r.x0 < 0 || r.y0 < 0 || r.x1 > W || r.y1 > H) continue;
        Ring ring = rect_ring(r);
        Mask cand = rasterize_rings({ring}, H, W);
        if (!placement_ok(cand, occupied, /*allow_touch=*/true)) continue;
        commit(occupied, owner, cand, b);
        polygons.push_back(std::move(ring));
        anchors.push_back(r);
        placed = true;
      } else {
        int bw = rng.range(spec.size_min, spec.size_max);
        int bh = rng.range(spec.size_min, spec.size_max);
        bool rotated = rng.below(2) == 1;
        if (!rotated) {
          if (W - bw < 0 || H - bh < 0) continue;
          IntRect r{0, 0, 0, 0};
          r.x0 = rng.range(0, W - bw);
          r.y0 = rng.range(0, H - bh);
          r.x1 = r.x0 + bw;
          r.y1 = r.y0 + bh;
          Ring ring = rect_ring(r);
          Mask cand = rasterize_rings({ring}, H, W);
          if (!placement_ok(cand, occupied, /*allow_touch=*/false)) continue;
          commit(occupied, owner, cand, b);
          polygons.push_back(std::move(ring));
          anchors.push_back(r);
          placed = true;
        } else {
          double angle = 15.0 * rng.range(1, 5) * 0.017453292519943295;
          double hw = 0.5 * bw, hh = 0.5 * bh;
          double radius = std::sqrt(hw * hw + hh * hh);
          if (2.0 * radius >= std::min(W, H)) continue;
          double cx = rng.uniform(radius, W - radius);
          double cy = rng.uniform(radius, H - radius);
          double ca = std::cos(angle), sa = std::sin(angle);
          auto corner = [&](double dx, double dy) {
            return Point{cx + dx * ca - dy * sa, cy + dx * sa + dy * ca};
          };
          Ring ring{corner(-hw, -hh), corner(hw, -hh), corner(hw, hh), corner(-hw, hh),
                    corner(-hw, -hh)};
          bool in_bounds = true;
          for (const Point& p : ring)
            if (p.x < 0 || p.x > W || p.y < 0 || p.y > H) in_bounds = false;
          if (!in_bounds) continue;
          Mask cand = rasterize_rings({ring}, H, W);
          if (foreground_count(cand) < 2 || !eight_connected(cand)) continue;
          if (!placement_ok(cand, occupied, /*allow_touch=*/false)) continue;
          commit(occupied, owner, cand, b);
          polygons.push_back(std::move(ring));
          placed = true;
        }
      }
    }
    if (!placed) {
      std::ostringstream msg;
      msg << "generate_scene: could not place building " << (b + 1) << " of "
          << spec.n_buildings << " after " << kMaxAttempts << " attempts ("
          << W << "x" << H << ", sizes " << spec.size_min << ".." << spec.size_max
          << (want_adjacent ? ", adjacent mode" : "") << ")";
      throw Error(msg.str());
    }
  }

  Tile tile;
  {
    std::ostringstream id;
    id << "scene-" << std::hex << spec.seed;
    tile.id = id.str();
  }
  tile.mask = occupied;
  tile.polygons = std::move(polygons);

  // Per-building channel response: a building may sit at the background value
  // in some channels, so no single channel subset sees every building.
  std::vector<uint8_t> responds(size_t(spec.n_buildings) * size_t(spec.n_channels), 1);
  for (int b = 0; b < spec.n_buildings; ++b)
    for (int c = 0; c < spec.n_channels; ++c)
      responds[size_t(b) * size_t(spec.n_channels) + size_t(c)] =
          rng.uniform() >= spec.channel_dropout ? 1 : 0;

  tile.channels = Stack<float>(spec.n_channels, H, W);
  tile.channel_names.reserve(spec.n_channels);
  for (int c = 0; c < spec.n_channels; ++c) {
    tile.channel_names.push_back("band" + std::to_string(c));
    float* plane = tile.channels.channel(c);
    const double fg = building_value(c), bg = background_value(c);
    for (int r = 0; r < H; ++r)
      for (int col = 0; col < W; ++col) {
        int32_t own = owner.at(r, col);
        bool lit = own > 0 && responds[size_t(own - 1) * size_t(spec.n_channels) + size_t(c)];
        double value = (lit ? fg : bg) + spec.channel_noise * rng.normal();
        plane[size_t(r) * W + col] = float(std::clamp(value, 0.0, 1.0));
      }
  }
  return tile;
}

void validate_tile(const Tile& tile) {
  const int H = tile.mask.h, W = tile.mask.w;
  if (tile.channels.h != H || tile.channels.w != W)
    throw Error("tile " + tile.id + ": channel shape " + std::to_string(tile.channels.h) +
                "x" + std::to_string(tile.channels.w) + " does not match mask " +
                std::to_string(H) + "x" + std::to_string(W));
  if (int(tile.channel_names.size()) != tile.channels.c)
    throw Error("tile " + tile.id + ": channel_names length does not match channel count");
  for (float x : tile.channels.v)
    if (!std::isfinite(x) || x < 0.0f || x > 1.0f)
      throw Error("tile " + tile.id + ": channel value out of [0,1] or non-finite");
  for (uint8_t m : tile.mask.v)
    if (m > 1) throw Error("tile " + tile.id + ": mask value not in {0,1}");
  for (const Ring& ring : tile.polygons) {
    if (!ring_closed(ring)) throw Error("tile " + tile.id + ": polygon ring not closed");
    for (const Point& p : ring)
      if (p.x < 0 || p.x > W || p.y < 0 || p.y > H)
        throw Error("tile " + tile.id + ": polygon vertex outside [0,W]x[0,H]");
  }
  Mask rast = rasterize_union(tile.polygons, H, W);
  if (!(rast == tile.mask))
    throw Error("tile " + tile.id + ": rasterized polygons do not reproduce mask");
}

template <class T>
Grid<T> transform_grid(const Grid<T>& g, Transform t) {
  if (t == Transform::Identity) return g;
  const int n = g.h;
  Grid<T> out(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      switch (t) {
        case Transform::Rot90: out.at(r, c) = g.at(c, n - 1 - r); break;
        case Transform::Rot180: out.at(r, c) = g.at(n - 1 - r, n - 1 - c); break;
        case Transform::Rot270: out.at(r, c) = g.at(n - 1 - c, r); break;
        case Transform::FlipH: out.at(r, c) = g.at(r, n - 1 - c); break;
        case Transform::FlipV: out.at(r, c) = g.at(n - 1 - r, c); break;
        case Transform::Identity: break;
      }
    }
  return out;
}

template Grid<uint8_t> transform_grid(const Grid<uint8_t>&, Transform);
template Grid<float> transform_grid(const Grid<float>&, Transform);
template Grid<int32_t> transform_grid(const Grid<int32_t>&, Transform);

Stack<float> transform_stack(const Stack<float>& s, Transform t) {
  if (t == Transform::Identity) return s;
  Stack<float> out(s.c, s.h, s.w);
  for (int c = 0; c < s.c; ++c) {
    Grid<float> plane(s.h, s.w);
    std::memcpy(plane.v.data(), s.channel(c), sizeof(float) * s.plane());
    plane = transform_grid(plane, t);
    std::memcpy(out.channel(c), plane.v.data(), sizeof(float) * s.plane());
  }
  return out;
}

Point transform_point(Point p, Transform t, int n) {
  switch (t) {
    case Transform::Identity: return p;
    case Transform::Rot90: return {p.y, double(n) - p.x};
    case Transform::Rot180: return {double(n) - p.x, double(n) - p.y};
    case Transform::Rot270: return {double(n) - p.y, p.x};
    case Transform::FlipH: return {double(n) - p.x, p.y};
    case Transform::FlipV: return {p.x, double(n) - p.y};
  }
  return p;
}

namespace {
const char* transform_suffix(Transform t) {
  switch (t) {
    case Transform::Identity: return "";
    case Transform::Rot90: return ".rot90";
    case Transform::Rot180: return ".rot180";
    case Transform::Rot270: return ".rot270";
    case Transform::FlipH: return ".fliph";
    case Transform::FlipV: return ".flipv";
  }
  return "";
}
}  // namespace

Tile transform_tile(const Tile& tile, Transform t) {
  if (tile.height() != tile.width())
    throw Error("augment: tile " + tile.id + " is not square (" +
                std::to_string(tile.height()) + "x" + std::to_string(tile.width()) + ")");
  Tile out;
  out.id = tile.id + transform_suffix(t);
  out.channel_names = tile.channel_names;
  out.channels = transform_stack(tile.channels, t);
  out.mask = transform_grid(tile.mask, t);
  out.polygons.reserve(tile.polygons.size());
  const int n = tile.height();
  for (const Ring& ring : tile.polygons) {
    Ring moved;
    moved.reserve(ring.size());
    for (const Point& p : ring) moved.push_back(transform_point(p, t, n));
    out.polygons.push_back(std::move(moved));
  }
  return out;
}

std::vector<Tile> augment(const Tile& tile) {
  std::vector<Tile> out;
  out.reserve(kAllTransforms.size());
  for (Transform t : kAllTransforms) out.push_back(transform_tile(tile, t));
  return out;
}

namespace {

void write_bytes(const fs::path& file, const void* data, size_t n) {
  std::ofstream f(file, std::ios::binary);
  if (!f) throw Error("cannot open for write: " + file.string());
  f.write(static_cast<const char*>(data), std::streamsize(n));
  if (!f) throw Error("write failed: " + file.string());
}

std::vector<char> read_bytes(const fs::path& file) {
  std::ifstream f(file, std::ios::binary | std::ios::ate);
  if (!f) throw Error("cannot open: " + file.string());
  std::streamsize n = f.tellg();
  f.seekg(0);
  std::vector<char> buf(static_cast<size_t>(n));
  f.read(buf.data(), n);
  if (!f) throw Error("read failed: " + file.string());
  return buf;
}

json load_json(const fs::path& file) {
  std::ifstream f(file);
  if (!f) throw Error("cannot open: " + file.string());
  json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw Error("corrupt JSON in " + file.string() + ": " + e.what());
  }
  return j;
}

void write_json(const json& j, const fs::path& file) {
  std::ofstream f(file);
  if (!f) throw Error("cannot open for write: " + file.string());
  f << j.dump(2) << "\n";
}

json rings_to_json(const std::vector<Ring>& rings) {
  json arr = json::array();
  for (const Ring& ring : rings) {
    json r = json::array();
    for (const Point& p : ring) r.push_back({p.x, p.y});
    arr.push_back(std::move(r));
  }
  return arr;
}

std::vector<Ring> rings_from_json(const json& arr, const std::string& where) {
  std::vector<Ring> rings;
  for (const auto& r : arr) {
    Ring ring;
    for (const auto& p : r) ring.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    if (!ring_closed(ring)) throw Error(where + ": ring not closed (first != last)");
    rings.push_back(std::move(ring));
  }
  return rings;
}

}  // namespace

void save_rings(const std::vector<Ring>& rings, const fs::path& file) {
  write_json(rings_to_json(rings), file);
}

std::vector<Ring> load_rings(const fs::path& file) {
  return rings_from_json(load_json(file), file.string());
}

void save_tile(const Tile& tile, const fs::path& dir) {
  fs::create_directories(dir);
  json manifest = {
      {"schema_version", 1},
      {"id", tile.id},
      {"height", tile.mask.h},
      {"width", tile.mask.w},
      {"channels", tile.channels.c},
      {"channel_names", tile.channel_names},
      {"dtype", "float32"},
      {"byte_order", "little-endian"},
      {"layout", "channel-major"},
  };
  write_json(manifest, dir / "manifest.json");
  write_bytes(dir / "channels.bin", tile.channels.v.data(),
              tile.channels.v.size() * sizeof(float));
  write_bytes(dir / "mask.bin", tile.mask.v.data(), tile.mask.v.size());
  save_rings(tile.polygons, dir / "polygons.json");
}

Tile load_tile(const fs::path& dir) {
  json manifest = load_json(dir / "manifest.json");
  Tile tile;
  try {
    if (manifest.at("schema_version").get<int>() != 1)
      throw Error("unsupported schema_version");
    if (manifest.at("dtype").get<std::string>() != "float32")
      throw Error("unsupported dtype");
    if (manifest.at("byte_order").get<std::string>() != "little-endian")
      throw Error("unsupported byte_order");
    if (manifest.at("layout").get<std::string>() != "channel-major")
      throw Error("unsupported layout");
    tile.id = manifest.at("id").get<std::string>();
    int H = manifest.at("height").get<int>();
    int W = manifest.at("width").get<int>();
    int C = manifest.at("channels").get<int>();
    tile.channel_names = manifest.at("channel_names").get<std::vector<std::string>>();
    if (H <= 0 || W <= 0 || C <= 0) throw Error("non-positive dimensions");

    std::vector<char> ch = read_bytes(dir / "channels.bin");
    size_t expect = size_t(C) * H * W * sizeof(float);
    if (ch.size() != expect) {
      std::ostringstream msg;
      msg << "channels.bin has " << ch.size() << " bytes, manifest expects " << expect
          << " (C=" << C << " H=" << H << " W=" << W << ")";
      throw Error(msg.str());
    }
    tile.channels = Stack<float>(C, H, W);
    std::memcpy(tile.channels.v.data(), ch.data(), expect);

    std::vector<char> mk = read_bytes(dir / "mask.bin");
    if (mk.size() != size_t(H) * W) {
      std::ostringstream msg;
      msg << "mask.bin has " << mk.size() << " bytes, manifest expects " << size_t(H) * W;
      throw Error(msg.str());
    }
    tile.mask = Mask(H, W);
    std::memcpy(tile.mask.v.data(), mk.data(), mk.size());

    tile.polygons = load_rings(dir / "polygons.json");
  } catch (const json::exception& e) {
    throw Error("load_tile " + dir.string() + ": bad manifest: " + e.what());
  } catch (const Error& e) {
    throw Error("load_tile " + dir.string() + ": " + e.what());
  }
  validate_tile(tile);
  return tile;
}

DatasetSplit split_dataset(const std::vector<std::string>& ids, SplitRatios ratios,
                           uint64_t seed) {
  if (ids.empty()) throw Error("split_dataset: empty id list");
  double sum = ratios.train + ratios.val + ratios.test;
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 || std::fabs(sum - 1.0) > 1e-9) {
    std::ostringstream msg;
    msg << "split_dataset: ratios (" << ratios.train << ", " << ratios.val << ", "
        << ratios.test << ") must be non-negative and sum to 1";
    throw Error(msg.str());
  }

  std::vector<std::string> shuffled = ids;
  Rng rng(seed);
  rng.shuffle(shuffled);

  const size_t n = shuffled.size();
  const double r[3] = {ratios.train, ratios.val, ratios.test};
  size_t count[3];
  double frac[3];
  size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    double exact = double(n) * r[i];
    count[i] = size_t(std::floor(exact));
    frac[i] = exact - double(count[i]);
    assigned += count[i];
  }
  while (assigned < n) {  // largest remainder takes the leftover slot
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (frac[i] > frac[best]) best = i;
    ++count[best];
    frac[best] = -1.0;
    ++assigned;
  }

  DatasetSplit split;
  auto it = shuffled.begin();
  split.train_ids.assign(it, it + count[0]);
  it += count[0];
  split.val_ids.assign(it, it + count[1]);
  it += count[1];
  split.test_ids.assign(it, it + count[2]);
  return split;
}

}  // namespace segfuse
