#include "segfuse/commands.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>

#include <json.hpp>

#include "segfuse/overlay.hpp"
#include "segfuse/scorer.hpp"

namespace segfuse {

using nlohmann::json;

std::vector<std::string> strategy_names(const RunConfig& cfg) {
  std::vector<std::string> names;
  for (size_t i = 0; i < cfg.members.size(); ++i) names.push_back("base" + std::to_string(i));
  names.insert(names.end(), cfg.fusion.begin(), cfg.fusion.end());
  return names;
}

void cmd_generate(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.data_dir / "tiles");
  std::vector<std::string> ids;
  std::set<std::string> seen;
  for (int i = 0; i < cfg.dataset.n_tiles; ++i) {
    SceneSpec spec = cfg.scene;
    spec.seed = derive_seed(cfg.seed, "tile", uint64_t(i));
    Tile tile = generate_scene(spec);
    validate_tile(tile);
    if (!seen.insert(tile.id).second)
      throw Error("generate: duplicate tile id '" + tile.id + "'");
    save_tile(tile, cfg.data_dir / "tiles" / tile.id);
    ids.push_back(tile.id);
  }
  DatasetSplit split = split_dataset(ids, cfg.dataset.ratios, derive_seed(cfg.seed, "split", 0));
  json doc{{"schema_version", 1},
           {"tile_ids", ids},
           {"split",
            {{"train", split.train_ids}, {"val", split.val_ids}, {"test", split.test_ids}}}};
  std::ofstream out(cfg.data_dir / "dataset.json");
  if (!out) throw Error("generate: cannot write " + (cfg.data_dir / "dataset.json").string());
  out << doc.dump(2) << "\n";
  std::cout << "generated " << ids.size() << " tiles (train/val/test = "
            << split.train_ids.size() << "/" << split.val_ids.size() << "/"
            << split.test_ids.size() << ") under " << cfg.data_dir.string() << "\n";
}

static std::vector<std::string> split_ids(const RunConfig& cfg, const std::string& split,
                                          const std::string& stage) {
  std::filesystem::path manifest = cfg.data_dir / "dataset.json";
  std::ifstream in(manifest);
  if (!in)
    throw Error(stage + ": dataset manifest " + manifest.string() +
                " not found - run generate first");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw Error(stage + ": bad dataset manifest: " + e.what());
  }
  if (split != "train" && split != "val" && split != "test")
    throw Error(stage + ": unknown split '" + split + "'");
  return doc.at("split").at(split).get<std::vector<std::string>>();
}

static std::vector<Tile> load_split(const RunConfig& cfg, const std::string& split,
                                    const std::string& stage) {
  std::vector<Tile> tiles;
  for (const std::string& id : split_ids(cfg, split, stage))
    tiles.push_back(load_tile(cfg.data_dir / "tiles" / id));
  if (tiles.empty()) throw Error(stage + ": split '" + split + "' holds no tiles");
  return tiles;
}

void cmd_train(const RunConfig& cfg) {
  std::vector<Tile> train_tiles = load_split(cfg, "train", "train");
  std::vector<Tile> val_tiles = load_split(cfg, "val", "train");
  PipelineConfig pipeline = pipeline_config(cfg);
  PipelineResult result = train_pipeline(train_tiles, val_tiles, pipeline, cfg.run_dir);

  json provenance{{"schema_version", 1},
                  {"config_hash", config_hash(cfg)},
                  {"config", run_config_json(cfg)},
                  {"ensemble", "ensemble.json"}};
  std::ofstream out(cfg.run_dir / "provenance.json");
  if (!out) throw Error("train: cannot write " + (cfg.run_dir / "provenance.json").string());
  out << provenance.dump(2) << "\n";

  for (size_t i = 0; i < result.member_logs.size(); ++i)
    std::cout << "base" << i << ": best epoch " << result.member_logs[i].best_epoch
              << ", val jaccard " << result.member_logs[i].best_val_jaccard << "\n";
  if (pipeline.train_linear)
    std::cout << "linear: best epoch " << result.linear_log.best_epoch << ", val jaccard "
              << result.linear_log.best_val_jaccard << "\n";
  if (pipeline.train_deep)
    std::cout << "deep: best epoch " << result.deep_log.best_epoch << ", val jaccard "
              << result.deep_log.best_val_jaccard << "\n";
}

void cmd_predict(const RunConfig& cfg, const std::string& split) {
  std::vector<Tile> tiles = load_split(cfg, split, "predict");
  if (!std::filesystem::exists(cfg.run_dir / "ensemble.json"))
    throw Error("predict: ensemble manifest " + (cfg.run_dir / "ensemble.json").string() +
                " not found - run train first");
  EnsembleModels ens = load_ensemble_models(cfg.run_dir);
  if (ens.members.size() != cfg.members.size())
    throw Error("predict: ensemble has " + std::to_string(ens.members.size()) +
                " members, config expects " + std::to_string(cfg.members.size()));

  std::set<std::string> fusion(cfg.fusion.begin(), cfg.fusion.end());
  if (fusion.count("linear") && !ens.linear)
    throw Error("predict: config asks for linear fusion but the ensemble has no linear combiner");
  if (fusion.count("deep") && !ens.deep)
    throw Error("predict: config asks for deep fusion but the ensemble has no deep combiner");

  size_t written = 0;
  for (const Tile& tile : tiles) {
    std::vector<SegMap> maps = member_maps(ens, tile.channels);
    std::vector<std::pair<std::string, SegMap>> outputs;
    for (size_t i = 0; i < maps.size(); ++i)
      outputs.emplace_back("base" + std::to_string(i), maps[i]);
    if (fusion.count("average")) outputs.emplace_back("average", fuse_average(maps));
    if (fusion.count("vote"))
      outputs.emplace_back("vote", fuse_vote(maps, cfg.scorer.prob_threshold).share);
    if (fusion.count("linear")) outputs.emplace_back("linear", ens.linear->forward(stack_maps(maps)));
    if (fusion.count("deep")) outputs.emplace_back("deep", fuse_deep(*ens.deep, maps, tile.channels));

    for (auto& [name, map] : outputs) {
      // the vote share is already a member fraction; majority means half
      float threshold = name == "vote" ? 0.5f : cfg.scorer.prob_threshold;
      PolygonSet set;
      set.height = map.h;
      set.width = map.w;
      set.polys = extract_polygons(map, threshold, cfg.scorer.min_area);
      std::filesystem::path dir = cfg.run_dir / "polygons" / split / name;
      std::filesystem::create_directories(dir);
      save_polygons(set, dir / (tile.id + ".json"));
      ++written;
    }
  }
  std::cout << "predicted " << tiles.size() << " tiles, " << written << " polygon sets under "
            << (cfg.run_dir / "polygons" / split).string() << "\n";
}

void cmd_score(const RunConfig& cfg, const std::string& split) {
  std::vector<Tile> tiles = load_split(cfg, split, "score");
  std::vector<StrategyScore> rows;
  for (const std::string& name : strategy_names(cfg)) {
    std::vector<TileCounts> counts;
    for (const Tile& tile : tiles) {
      std::filesystem::path file = cfg.run_dir / "polygons" / split / name / (tile.id + ".json");
      if (!std::filesystem::exists(file))
        throw Error("score: missing polygons " + file.string() + " - run predict first");
      PolygonSet set = load_polygons(file);
      MatchReport match = match_polygons(set.polys, gt_polygons(tile), cfg.scorer.iou_threshold,
                                         cfg.scorer.match_order);
      counts.push_back({match.tp(), int(match.unmatched_pred.size()),
                        int(match.unmatched_gt.size())});
    }
    rows.push_back({name, score_run(counts)});
  }
  std::string table = format_score_table(rows, cfg.baseline);
  std::filesystem::create_directories(cfg.run_dir);
  std::ofstream out(cfg.run_dir / ("scores-" + split + ".txt"), std::ios::binary);
  if (!out) throw Error("score: cannot write score table");
  out << table;
  out.close();
  save_scores(rows, cfg.baseline, cfg.run_dir / ("scores-" + split + ".json"));
  std::cout << table;
}

void cmd_visualize(const RunConfig& cfg, const std::string& split, const std::string& strategy) {
  std::vector<Tile> tiles = load_split(cfg, split, "visualize");
  std::vector<std::string> known = strategy_names(cfg);
  if (std::find(known.begin(), known.end(), strategy) == known.end())
    throw Error("visualize: unknown strategy '" + strategy + "'");
  std::filesystem::path dir = cfg.run_dir / "overlays" / split / strategy;
  std::filesystem::create_directories(dir);
  for (const Tile& tile : tiles) {
    std::filesystem::path file =
        cfg.run_dir / "polygons" / split / strategy / (tile.id + ".json");
    if (!std::filesystem::exists(file))
      throw Error("visualize: missing polygons " + file.string() + " - run predict first");
    PolygonSet set = load_polygons(file);
    std::vector<Polygon> gts = gt_polygons(tile);
    MatchReport match =
        match_polygons(set.polys, gts, cfg.scorer.iou_threshold, cfg.scorer.match_order);
    Image8 img = render_overlay(tile.channels, cfg.overlay_bands, set.polys, gts, match);
    write_ppm(img, dir / (tile.id + ".ppm"));
  }
  std::cout << "wrote " << tiles.size() << " overlays under " << dir.string() << "\n";
}

}  // namespace segfuse
