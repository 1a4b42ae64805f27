#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "segfuse/grid.hpp"
#include "segfuse/net.hpp"

namespace segfuse {

// All fusion entry points take member probability maps of identical shape.
// Maps must hold finite values in [0, 1]; anything else is a caller bug and throws.

SegMap fuse_average(const std::vector<SegMap>& maps);

struct VoteResult {
  SegMap share;        // fraction of members voting foreground at each pixel
  SegMap uncertainty;  // 1 - |2*share - 1|: 0 = unanimous, 1 = split
  bool even_members = false;  // ties possible; share == 0.5 binarizes to foreground
};

VoteResult fuse_vote(const std::vector<SegMap>& maps, float threshold = 0.5f);

// Learned per-pixel blend. The combiner must have been built for maps.size() members.
SegMap fuse_linear(LinearCombiner& model, const std::vector<SegMap>& maps);

// Deep combiner: member maps concatenated with the raw input channels feed a
// second segmentation net, so it can overrule members where the imagery says so.
SegMap fuse_deep(SegModel& model, const std::vector<SegMap>& maps, const Stack<float>& channels);

Stack<float> stack_maps(const std::vector<SegMap>& maps);
Stack<float> stack_maps_with_channels(const std::vector<SegMap>& maps, const Stack<float>& channels);

// View of a channel subset, used to feed each base model its own bands.
Stack<float> select_channels(const Stack<float>& x, const std::vector<int>& idx);

// On-disk description of a trained ensemble: member checkpoints with the
// channel subset each one consumes, plus optional combiner checkpoints.
struct EnsembleManifest {
  struct Member {
    std::string dir;
    std::vector<int> channels;
  };
  std::vector<Member> members;
  std::string linear_dir;  // empty when that combiner was not trained
  std::string deep_dir;
};

void save_ensemble(const EnsembleManifest& m, const std::filesystem::path& file);
EnsembleManifest load_ensemble(const std::filesystem::path& file);

// A manifest with its checkpoints loaded, ready to run on tiles.
struct EnsembleModels {
  std::vector<std::unique_ptr<SegModel>> members;
  std::vector<std::vector<int>> member_channels;
  std::unique_ptr<SegModel> linear;  // null when absent from the manifest
  std::unique_ptr<SegModel> deep;
};

// dir must contain ensemble.json; checkpoint dirs resolve relative to it.
EnsembleModels load_ensemble_models(const std::filesystem::path& dir);

// Runs every member on its channel subset of one tile's stack.
std::vector<SegMap> member_maps(EnsembleModels& ens, const Stack<float>& channels);

}  // namespace segfuse
