#include "segfuse/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "segfuse/jaccard.hpp"

namespace segfuse {

using nlohmann::json;

// holes sit inside the outer ring, so the outer ring alone bounds the polygon
static void bbox_of(const Polygon& p, double& x0, double& y0, double& x1, double& y1) {
  for (const Point& pt : p.ring) {
    x0 = std::min(x0, pt.x);
    y0 = std::min(y0, pt.y);
    x1 = std::max(x1, pt.x);
    y1 = std::max(y1, pt.y);
  }
}

static Mask raster_local(const Polygon& p, double ox, double oy, int h, int w) {
  std::vector<Ring> rings;
  rings.reserve(1 + p.holes.size());
  auto shift = [ox, oy](const Ring& ring) {
    Ring out;
    out.reserve(ring.size());
    for (const Point& pt : ring) out.push_back({pt.x - ox, pt.y - oy});
    return out;
  };
  rings.push_back(shift(p.ring));
  for (const Ring& hole : p.holes) rings.push_back(shift(hole));
  return rasterize_rings(rings, h, w);
}

double polygon_iou(const Polygon& a, const Polygon& b) {
  if (a.ring.size() < 4 || b.ring.size() < 4)
    throw Error("polygon_iou: degenerate ring (fewer than three vertices)");
  double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
  bbox_of(a, x0, y0, x1, y1);
  bbox_of(b, x0, y0, x1, y1);
  double ox = std::floor(x0), oy = std::floor(y0);
  int w = int(std::ceil(x1) - ox), h = int(std::ceil(y1) - oy);
  if (w < 1 || h < 1) throw Error("polygon_iou: empty bounding box");
  Mask ma = raster_local(a, ox, oy, h, w);
  Mask mb = raster_local(b, ox, oy, h, w);
  long inter = 0, uni = 0, na = 0, nb = 0;
  for (size_t i = 0; i < ma.v.size(); ++i) {
    na += ma.v[i];
    nb += mb.v[i];
    inter += ma.v[i] & mb.v[i];
    uni += ma.v[i] | mb.v[i];
  }
  if (na == 0 || nb == 0)
    throw Error("polygon_iou: polygon rasterizes to no pixels");
  return double(inter) / double(uni);
}

MatchReport match_polygons(const std::vector<Polygon>& preds, const std::vector<Polygon>& gts,
                           double iou_threshold, const std::string& order) {
  if (order != "iou" && order != "score")
    throw Error("match_polygons: unknown order '" + order + "'");

  struct Cand {
    int pred, gt;
    double iou;
  };
  std::vector<Cand> cands;
  for (int p = 0; p < int(preds.size()); ++p)
    for (int g = 0; g < int(gts.size()); ++g) {
      double iou = polygon_iou(preds[size_t(p)], gts[size_t(g)]);
      if (iou > iou_threshold) cands.push_back({p, g, iou});
    }

  if (order == "iou") {
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.iou != b.iou) return a.iou > b.iou;
      if (a.pred != b.pred) return a.pred < b.pred;
      return a.gt < b.gt;
    });
  } else {
    std::sort(cands.begin(), cands.end(), [&preds](const Cand& a, const Cand& b) {
      double sa = preds[size_t(a.pred)].score, sb = preds[size_t(b.pred)].score;
      if (sa != sb) return sa > sb;
      if (a.pred != b.pred) return a.pred < b.pred;
      if (a.iou != b.iou) return a.iou > b.iou;
      return a.gt < b.gt;
    });
  }

  MatchReport report;
  std::vector<char> pred_used(preds.size(), 0), gt_used(gts.size(), 0);
  for (const Cand& c : cands) {
    if (pred_used[size_t(c.pred)] || gt_used[size_t(c.gt)]) continue;
    pred_used[size_t(c.pred)] = gt_used[size_t(c.gt)] = 1;
    report.pairs.push_back({c.pred, c.gt, c.iou});
  }
  for (int p = 0; p < int(preds.size()); ++p)
    if (!pred_used[size_t(p)]) report.unmatched_pred.push_back(p);
  for (int g = 0; g < int(gts.size()); ++g)
    if (!gt_used[size_t(g)]) report.unmatched_gt.push_back(g);
  return report;
}

RunScore score_run(const std::vector<TileCounts>& tiles) {
  RunScore s;
  for (const TileCounts& t : tiles) {
    if (t.tp < 0 || t.fp < 0 || t.fn < 0) throw Error("score_run: negative count");
    s.tp += t.tp;
    s.fp += t.fp;
    s.fn += t.fn;
  }
  if (s.tp + s.fp + s.fn == 0) {
    s.precision = s.recall = s.f_score = 1.0;  // nothing to find, nothing claimed
    return s;
  }
  s.precision = s.tp + s.fp > 0 ? double(s.tp) / double(s.tp + s.fp) : 0.0;
  s.recall = s.tp + s.fn > 0 ? double(s.tp) / double(s.tp + s.fn) : 0.0;
  double pr = s.precision + s.recall;
  s.f_score = pr > 0.0 ? 2.0 * s.precision * s.recall / pr : 0.0;
  return s;
}

std::vector<Polygon> gt_polygons(const Tile& tile) {
  std::vector<Polygon> polys;
  for (size_t i = 0; i < tile.polygons.size(); ++i) {
    Polygon p;
    p.ring = tile.polygons[i];
    p.component_id = int(i) + 1;
    Mask m = rasterize_rings({p.ring}, tile.mask.h, tile.mask.w);
    p.area = foreground_count(m);
    p.score = 1.0;
    if (p.area == 0)
      throw Error("gt_polygons: annotation " + std::to_string(i) + " of tile '" + tile.id +
                  "' covers no pixels");
    polys.push_back(std::move(p));
  }
  return polys;
}

static std::string format_gain(double new_f, double base_f, bool is_baseline) {
  if (is_baseline || base_f <= 0.0) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.2f%%", gain(new_f, base_f) * 100.0);
  return buf;
}

std::string format_score_table(const std::vector<StrategyScore>& rows,
                               const std::string& baseline_name) {
  if (rows.empty()) throw Error("score table: no rows");
  const StrategyScore* base = nullptr;
  for (const StrategyScore& r : rows)
    if (r.name == baseline_name) base = &r;
  if (!base) throw Error("score table: baseline '" + baseline_name + "' not among rows");

  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %6s %6s %6s %10s %8s %9s %9s\n", "strategy", "tp",
                "fp", "fn", "precision", "recall", "f_score", "gain");
  out += line;
  for (const StrategyScore& r : rows) {
    std::snprintf(line, sizeof line, "%-10s %6d %6d %6d %10.4f %8.4f %9.4f %9s\n",
                  r.name.c_str(), r.score.tp, r.score.fp, r.score.fn, r.score.precision,
                  r.score.recall, r.score.f_score,
                  format_gain(r.score.f_score, base->score.f_score, &r == base).c_str());
    out += line;
  }
  return out;
}

void save_scores(const std::vector<StrategyScore>& rows, const std::string& baseline_name,
                 const std::filesystem::path& json_file) {
  const StrategyScore* base = nullptr;
  for (const StrategyScore& r : rows)
    if (r.name == baseline_name) base = &r;
  if (!base) throw Error("score table: baseline '" + baseline_name + "' not among rows");
  json strategies = json::array();
  for (const StrategyScore& r : rows) {
    json entry{{"name", r.name},         {"tp", r.score.tp},
               {"fp", r.score.fp},       {"fn", r.score.fn},
               {"precision", r.score.precision}, {"recall", r.score.recall},
               {"f_score", r.score.f_score}};
    if (&r != base && base->score.f_score > 0.0)
      entry["gain"] = gain(r.score.f_score, base->score.f_score);
    else
      entry["gain"] = nullptr;
    strategies.push_back(std::move(entry));
  }
  json doc{{"schema_version", 1}, {"baseline", baseline_name}, {"strategies", strategies}};
  std::ofstream out(json_file);
  if (!out) throw Error("score table: cannot write " + json_file.string());
  out << doc.dump(2) << "\n";
}

}  // namespace segfuse
