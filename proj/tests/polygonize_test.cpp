#include <doctest.h>

#include <filesystem>

#include "oracles.hpp"
#include "segfuse/polygonize.hpp"
#include "segfuse/rng.hpp"

using namespace segfuse;

namespace {

Mask from_rows(std::initializer_list<const char*> rows) {
  int h = int(rows.size()), w = int(std::string(*rows.begin()).size());
  Mask m(h, w);
  int r = 0;
  for (const char* row : rows) {
    for (int c = 0; c < w; ++c) m.at(r, c) = row[c] == '#' ? 1 : 0;
    ++r;
  }
  return m;
}

Mask union_of(const std::vector<Polygon>& polys, int h, int w) {
  Mask out(h, w);
  for (const auto& p : polys) {
    Mask one = rasterize_polygon(p, h, w);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] |= one.v[i];
  }
  return out;
}

}  // namespace

TEST_CASE("binarize uses a closed lower bound") {
  SegMap p(1, 3);
  p.v = {0.49f, 0.5f, 0.51f};
  Mask m = binarize(p, 0.5f);
  CHECK(m.v == std::vector<uint8_t>{0, 1, 1});
}

TEST_CASE("labels agree with the union-find oracle on random masks") {
  Rng rng(314);
  for (int trial = 0; trial < 200; ++trial) {
    double density = 0.2 + 0.6 * rng.uniform();
    Mask m(16, 16);
    for (auto& v : m.v) v = rng.uniform() < density ? 1 : 0;
    Labeling lab = label_components(m);
    int oracle_count = 0;
    Grid<int32_t> expect = oracle::union_find_labels(m, &oracle_count);
    CHECK(lab.count == oracle_count);
    CHECK(lab.labels.v == expect.v);
  }
}

TEST_CASE("single pixel yields a unit square") {
  Mask m = from_rows({"...", ".#.", "..."});
  auto polys = polygons_from_mask(m);
  REQUIRE(polys.size() == 1);
  const Polygon& p = polys[0];
  CHECK(p.component_id == 1);
  CHECK(p.area == 1);
  CHECK(p.holes.empty());
  REQUIRE(p.ring.size() == 5);
  CHECK(ring_closed(p.ring));
  CHECK(ring_signed_area(p.ring) == doctest::Approx(1.0));
  CHECK(rasterize_polygon(p, 3, 3).v == m.v);
}

TEST_CASE("collinear lattice points are merged away") {
  Mask m = from_rows({"###"});
  auto polys = polygons_from_mask(m);
  REQUIRE(polys.size() == 1);
  CHECK(polys[0].ring.size() == 5);  // a 3x1 bar is still just a rectangle
  CHECK(polys[0].area == 3);
  CHECK(ring_signed_area(polys[0].ring) == doctest::Approx(3.0));

  Mask rect = from_rows({"####", "####", "####"});
  auto rp = polygons_from_mask(rect);
  REQUIRE(rp.size() == 1);
  CHECK(rp[0].ring.size() == 5);  // 4 corners plus closure
  CHECK(rp[0].area == 12);
}

TEST_CASE("a one-pixel bridge fuses two buildings into one polygon") {
  Mask apart = from_rows({"##.##",
                          "##.##"});
  CHECK(polygons_from_mask(apart).size() == 2);
  Mask bridged = apart;
  bridged.at(1, 2) = 1;
  auto polys = polygons_from_mask(bridged);
  CHECK(polys.size() == 1);
  CHECK(polys[0].area == 9);
}

TEST_CASE("raising the threshold never grows the foreground") {
  Rng rng(555);
  SegMap p(12, 12);
  for (auto& v : p.v) v = float(rng.uniform());
  size_t prev = p.v.size() + 1;
  for (float thr : {0.1f, 0.3f, 0.5f, 0.7f, 0.9f}) {
    size_t fg = foreground_count(binarize(p, thr));
    CHECK(fg <= prev);
    prev = fg;
  }
}

TEST_CASE("diagonal pair becomes one weakly simple ring") {
  Mask m = from_rows({"#.", ".#"});
  Labeling lab = label_components(m);
  CHECK(lab.count == 1);
  auto polys = polygons_from_labels(lab);
  REQUIRE(polys.size() == 1);
  CHECK(polys[0].area == 2);
  CHECK(polys[0].holes.empty());
  CHECK(polys[0].ring.size() == 9);  // 8 corners, the pinch visited twice
  CHECK(ring_signed_area(polys[0].ring) == doctest::Approx(2.0));
  CHECK(rasterize_polygon(polys[0], 2, 2).v == m.v);
}

TEST_CASE("checkerboard cross merges into one polygon") {
  Mask m = from_rows({"#.#", ".#.", "#.#"});
  auto polys = polygons_from_mask(m);
  REQUIRE(polys.size() == 1);
  CHECK(polys[0].area == 5);
  CHECK(polys[0].holes.empty());
  CHECK(rasterize_polygon(polys[0], 3, 3).v == m.v);
}

TEST_CASE("donut keeps its hole") {
  Mask m = from_rows({".....", ".###.", ".#.#.", ".###.", "....."});
  auto polys = polygons_from_mask(m);
  REQUIRE(polys.size() == 1);
  CHECK(polys[0].area == 8);
  REQUIRE(polys[0].holes.size() == 1);
  CHECK(ring_abs_area(polys[0].holes[0]) == doctest::Approx(1.0));
  CHECK(ring_signed_area(polys[0].ring) == doctest::Approx(9.0));  // outer boundary
  CHECK(rasterize_polygon(polys[0], 5, 5).v == m.v);
}

TEST_CASE("two components stay separate and keep discovery order") {
  Mask m = from_rows({"##..", "##..", "....", "..##"});
  auto polys = polygons_from_mask(m);
  REQUIRE(polys.size() == 2);
  CHECK(polys[0].component_id == 1);
  CHECK(polys[0].area == 4);
  CHECK(polys[1].component_id == 2);
  CHECK(polys[1].area == 2);
  CHECK(union_of(polys, 4, 4).v == m.v);
}

TEST_CASE("random masks round trip exactly through polygons") {
  Rng rng(2718);
  for (int trial = 0; trial < 100; ++trial) {
    int h = 4 + int(rng.below(13)), w = 4 + int(rng.below(13));
    double density = 0.15 + 0.7 * rng.uniform();
    Mask m(h, w);
    for (auto& v : m.v) v = rng.uniform() < density ? 1 : 0;

    auto polys = polygons_from_mask(m);
    CHECK(union_of(polys, h, w).v == m.v);

    Labeling lab = label_components(m);
    size_t area_sum = 0;
    for (const auto& p : polys) {
      area_sum += size_t(p.area);
      CHECK(ring_closed(p.ring));
      CHECK(ring_signed_area(p.ring) > 0.0);
      // shoelace accounting: outer ring minus holes is the pixel count
      double net = ring_signed_area(p.ring);
      for (const auto& hole : p.holes) {
        CHECK(ring_closed(hole));
        net -= ring_abs_area(hole);
      }
      CHECK(net == doctest::Approx(double(p.area)));
      // each polygon reproduces exactly its own component's pixels
      Mask own = rasterize_polygon(p, h, w);
      for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
          CHECK((own.at(r, c) == 1) == (lab.labels.at(r, c) == p.component_id));
    }
    CHECK(area_sum == foreground_count(m));
  }
}

TEST_CASE("extract_polygons thresholds, scores and filters") {
  SegMap p(3, 4);
  p.v = {0.9f, 0.8f, 0.1f, 0.2f,
         0.7f, 0.6f, 0.1f, 0.9f,
         0.1f, 0.2f, 0.1f, 0.2f};
  auto polys = extract_polygons(p, 0.5f);
  REQUIRE(polys.size() == 2);
  CHECK(polys[0].area == 4);
  CHECK(polys[0].score == doctest::Approx((0.9 + 0.8 + 0.7 + 0.6) / 4.0));
  CHECK(polys[1].area == 1);
  CHECK(polys[1].score == doctest::Approx(0.9));

  auto filtered = extract_polygons(p, 0.5f, 2);
  REQUIRE(filtered.size() == 1);
  CHECK(filtered[0].area == 4);
}

TEST_CASE("empty map produces no polygons") {
  CHECK(polygons_from_mask(Mask(4, 4)).empty());
  CHECK(extract_polygons(SegMap(4, 4, 0.1f), 0.5f).empty());
}

TEST_CASE("trace_contour wants exactly one component") {
  Mask one = from_rows({".##", ".##"});
  Ring ring = trace_contour(one);
  CHECK(ring_closed(ring));
  CHECK(ring_signed_area(ring) == doctest::Approx(4.0));

  CHECK_THROWS_AS(trace_contour(Mask(3, 3)), Error);
  CHECK_THROWS_AS(trace_contour(from_rows({"#.#"})), Error);
}

TEST_CASE("polygon sets survive the json round trip") {
  Mask m = from_rows({"###..", "#.#..", "###.#"});
  PolygonSet set;
  set.height = 3;
  set.width = 5;
  set.polys = polygons_from_mask(m);
  REQUIRE(set.polys.size() == 2);

  auto file = std::filesystem::temp_directory_path() / "segfuse_polys.json";
  save_polygons(set, file);
  PolygonSet back = load_polygons(file);
  std::filesystem::remove(file);

  CHECK(back.height == 3);
  CHECK(back.width == 5);
  REQUIRE(back.polys.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    CHECK(back.polys[i].area == set.polys[i].area);
    CHECK(back.polys[i].score == set.polys[i].score);
    CHECK(back.polys[i].component_id == set.polys[i].component_id);
    CHECK(back.polys[i].holes.size() == set.polys[i].holes.size());
    REQUIRE(back.polys[i].ring.size() == set.polys[i].ring.size());
    for (size_t j = 0; j < set.polys[i].ring.size(); ++j) {
      CHECK(back.polys[i].ring[j].x == set.polys[i].ring[j].x);
      CHECK(back.polys[i].ring[j].y == set.polys[i].ring[j].y);
    }
  }
  CHECK(union_of(back.polys, 3, 5).v == m.v);
}
