#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "segfuse/geometry.hpp"
#include "segfuse/grid.hpp"

namespace segfuse {

// Atomic dataset unit: a multichannel raster, its binary ground-truth mask,
// and the per-building polygon rings the mask was rasterized from.
struct Tile {
  std::string id;
  Stack<float> channels;        // C x H x W, values in [0, 1]
  Mask mask;                    // H x W, values in {0, 1}
  std::vector<Ring> polygons;   // closed rings in pixel-corner coordinates
  std::vector<std::string> channel_names;

  int height() const { return mask.h; }
  int width() const { return mask.w; }
};

struct SceneSpec {
  int width = 64;
  int height = 64;
  int n_buildings = 7;
  int size_min = 6;
  int size_max = 16;
  double adjacency_prob = 0.0;
  double channel_noise = 0.1;
  // Probability that a building takes the background value in a channel
  // (drawn per building and channel). Different channel subsets then miss
  // different buildings, which is what keeps an ensemble's members diverse.
  double channel_dropout = 0.5;
  int n_channels = 8;
  uint64_t seed = 0;
};

struct DatasetSplit {
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
  std::vector<std::string> test_ids;
};

void validate_scene_spec(const SceneSpec& spec);

// Deterministic synthetic building scene: axis-aligned or 15-degree-step
// rotated rectangles, per-channel building/background palettes plus seeded
// Gaussian noise. Same spec (seed included) reproduces the tile bit for bit.
Tile generate_scene(const SceneSpec& spec);

// Throws if any Tile invariant is violated (shape, value range, ring
// closure/bounds, mask == rasterized polygons).
void validate_tile(const Tile& tile);

// The six training variants: identity, rot90, rot180, rot270,
// horizontal flip, vertical flip. Requires a square tile.
std::vector<Tile> augment(const Tile& tile);

enum class Transform { Identity, Rot90, Rot180, Rot270, FlipH, FlipV };
inline constexpr std::array<Transform, 6> kAllTransforms = {
    Transform::Identity, Transform::Rot90,  Transform::Rot180,
    Transform::Rot270,   Transform::FlipH, Transform::FlipV};

template <class T>
Grid<T> transform_grid(const Grid<T>& g, Transform t);
Stack<float> transform_stack(const Stack<float>& s, Transform t);
Point transform_point(Point p, Transform t, int n);
Tile transform_tile(const Tile& tile, Transform t);

// Tile container directory: manifest.json + channels.bin (float32 LE,
// channel-major) + mask.bin (uint8) + polygons.json (list of closed rings).
void save_tile(const Tile& tile, const std::filesystem::path& dir);
Tile load_tile(const std::filesystem::path& dir);

std::vector<Ring> load_rings(const std::filesystem::path& file);
void save_rings(const std::vector<Ring>& rings, const std::filesystem::path& file);

struct SplitRatios {
  double train = 0.7;
  double val = 0.3;
  double test = 0.0;
};

// Deterministic disjoint partition covering all ids.
DatasetSplit split_dataset(const std::vector<std::string>& ids, SplitRatios ratios,
                           uint64_t seed);

}  // namespace segfuse
