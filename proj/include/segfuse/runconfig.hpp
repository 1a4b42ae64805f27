#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "segfuse/tile.hpp"
#include "segfuse/trainer.hpp"

namespace segfuse {

struct ScorerConfig {
  float prob_threshold = 0.5f;  // binarization before polygon extraction
  double iou_threshold = 0.5;   // matches need IoU strictly above this
  int min_area = 0;             // drop predicted components smaller than this
  std::string match_order = "iou";
};

struct DatasetConfig {
  int n_tiles = 60;
  SplitRatios ratios;
};

// Everything one run needs. All per-stage seeds derive from the single root
// seed, so a config fixes the whole pipeline.
struct RunConfig {
  uint64_t seed = 1;
  std::filesystem::path data_dir = "data";
  std::filesystem::path run_dir = "run";
  SceneSpec scene;  // scene.seed is ignored; per-tile seeds derive from the root
  DatasetConfig dataset;
  std::vector<MemberSpec> members;  // member net in_channels is derived
  UNetConfig deep_net;              // in_channels derived: members + scene channels
  TrainConfig base_train;
  TrainConfig combiner_train;
  std::vector<std::string> fusion = {"average", "vote", "linear", "deep"};
  ScorerConfig scorer;
  std::array<int, 3> overlay_bands = {0, 1, 2};
  int workers = 1;
  std::string baseline = "average";
};

// Parse the file, apply dotted-path overrides ("base_train.epochs=3",
// "members.0.channels=[0,1]"; values parse as json, bare words as strings),
// then decode and validate. Unknown keys are rejected.
RunConfig load_run_config(const std::filesystem::path& file,
                          const std::vector<std::string>& overrides = {});

nlohmann::json run_config_json(const RunConfig& cfg);

// FNV-1a 64 over the canonical serialized config, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

PipelineConfig pipeline_config(const RunConfig& cfg);

}  // namespace segfuse
