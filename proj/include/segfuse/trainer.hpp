#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "segfuse/fusion.hpp"
#include "segfuse/grid.hpp"
#include "segfuse/net.hpp"
#include "segfuse/tile.hpp"

namespace segfuse {

struct TrainConfig {
  int epochs = 20;
  int batch_size = 1;
  double lr = 1e-3;
  std::string optimizer = "adam";
  uint64_t seed = 0;
  bool augment = true;  // six dihedral variants of every training sample
};

void validate_train_config(const TrainConfig& cfg);

struct Sample {
  Stack<float> x;
  Mask y;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_jaccard = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;  // epoch number whose weights the model ends up holding
  double best_val_jaccard = 0.0;
  size_t iterations = 0;  // optimizer steps taken
};

void write_train_log(const TrainLog& log, const std::filesystem::path& file);

struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long t = 0;
  std::vector<std::vector<float>> m, v;  // one slab per param view

  void init(const std::vector<ParamView<float>>& views);
  void step(const std::vector<ParamView<float>>& views);
};

// Mean image-wise Jaccard of the model's raw probabilities against the masks.
double evaluate(SegModel& model, const std::vector<Sample>& samples);

// Jaccard-loss training loop. Shuffles per epoch from cfg.seed, scores the
// un-augmented validation set after every epoch, and leaves the model holding
// the weights of the best validation epoch (earliest wins ties). When
// checkpoint_dir is non-empty the best weights are also persisted there.
// Throws on a non-finite loss (divergence) rather than training through it.
TrainLog train(SegModel& model, const std::vector<Sample>& train_set,
               const std::vector<Sample>& val_set, const TrainConfig& cfg,
               const std::filesystem::path& checkpoint_dir = {});

// Full ensemble recipe: base segmenters on their channel subsets, then the
// linear and deep combiners on the members' best-epoch outputs.
struct MemberSpec {
  UNetConfig net;
  std::vector<int> channels;
};

struct PipelineConfig {
  std::vector<MemberSpec> members;
  UNetConfig deep_net;  // in_channels must equal members + tile channels
  TrainConfig base_train;
  TrainConfig combiner_train;
  bool train_linear = true;
  bool train_deep = true;
  int workers = 1;  // member trainings run in parallel up to this many threads
};

struct PipelineResult {
  std::vector<TrainLog> member_logs;
  TrainLog linear_log, deep_log;
  EnsembleManifest manifest;  // dirs relative to out_dir; saved as ensemble.json
};

PipelineResult train_pipeline(const std::vector<Tile>& train_tiles,
                              const std::vector<Tile>& val_tiles, const PipelineConfig& cfg,
                              const std::filesystem::path& out_dir);

}  // namespace segfuse
