#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "segfuse/polygonize.hpp"
#include "segfuse/tile.hpp"

namespace segfuse {

// Pixel IoU of two polygons, rasterized over their joint bounding box.
// Throws if either polygon covers no pixel centers (degenerate geometry).
double polygon_iou(const Polygon& a, const Polygon& b);

struct MatchPair {
  int pred = 0;
  int gt = 0;
  double iou = 0.0;
};

struct MatchReport {
  std::vector<MatchPair> pairs;            // accepted matches
  std::vector<int> unmatched_pred;         // false positives
  std::vector<int> unmatched_gt;           // false negatives
  int tp() const { return int(pairs.size()); }
};

// Greedy one-to-one matching over candidate pairs with IoU strictly above the
// threshold. order "iou" ranks candidates by IoU, order "score" by the
// prediction's confidence; ties fall back to lower pred then gt index, so the
// result is deterministic.
MatchReport match_polygons(const std::vector<Polygon>& preds, const std::vector<Polygon>& gts,
                           double iou_threshold = 0.5, const std::string& order = "iou");

struct TileCounts {
  int tp = 0, fp = 0, fn = 0;
};

struct RunScore {
  int tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f_score = 0.0;
};

// Micro-average across tiles. F is 0 when precision + recall is 0, except the
// fully empty run (nothing predicted, nothing to find) which scores 1.
RunScore score_run(const std::vector<TileCounts>& tiles);

// Each annotated building as its own ground-truth polygon, even when
// neighbours touch; merged predictions then cost recall, like they should.
std::vector<Polygon> gt_polygons(const Tile& tile);

struct StrategyScore {
  std::string name;
  RunScore score;
};

// Fixed-width table with a gain column relative to the named baseline row.
// Formatting is pinned so identical runs yield byte-identical tables.
std::string format_score_table(const std::vector<StrategyScore>& rows,
                               const std::string& baseline_name);

void save_scores(const std::vector<StrategyScore>& rows, const std::string& baseline_name,
                 const std::filesystem::path& json_file);

}  // namespace segfuse
