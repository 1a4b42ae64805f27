#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "segfuse/fusion.hpp"
#include "segfuse/jaccard.hpp"
#include "segfuse/net.hpp"
#include "segfuse/tile.hpp"
#include "segfuse/trainer.hpp"

using namespace segfuse;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& leaf) {
  fs::path dir = fs::temp_directory_path() / "segfuse_trainer_test" / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// One tile a small net can memorize: a fat rectangle plus a stray pixel,
// with the mask and its complement as the two input bands.
Sample memorizable_sample() {
  const int n = 16;
  Mask y(n, n, 0);
  for (int r = 4; r <= 11; ++r)
    for (int c = 3; c <= 12; ++c) y.at(r, c) = 1;
  y.at(14, 14) = 1;
  Stack<float> x(2, n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      x.channel(0)[size_t(r) * n + c] = float(y.at(r, c));
      x.channel(1)[size_t(r) * n + c] = 1.0f - float(y.at(r, c));
    }
  return {std::move(x), std::move(y)};
}

UNetConfig tiny_unet() {
  UNetConfig cfg;
  cfg.in_channels = 2;
  cfg.depth = 1;
  cfg.base_width = 8;
  cfg.conv_per_block = 1;
  return cfg;
}

TrainConfig memorize_config() {
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 1;
  cfg.lr = 0.008;
  cfg.seed = 17;
  cfg.augment = false;
  return cfg;
}

std::vector<float> flat_weights(SegModel& model) {
  std::vector<float> flat;
  for (const auto& view : model.params())
    flat.insert(flat.end(), view.value, view.value + view.count);
  return flat;
}

}  // namespace

TEST_CASE("train config validation") {
  TrainConfig ok;
  validate_train_config(ok);  // defaults pass

  TrainConfig cfg = ok;
  cfg.epochs = 0;
  CHECK_THROWS_AS(validate_train_config(cfg), Error);
  cfg = ok;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(validate_train_config(cfg), Error);
  cfg = ok;
  cfg.lr = -1e-3;
  CHECK_THROWS_AS(validate_train_config(cfg), Error);
  cfg = ok;
  cfg.lr = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(validate_train_config(cfg), Error);
  cfg = ok;
  cfg.optimizer = "sgd";
  CHECK_THROWS_AS(validate_train_config(cfg), Error);
  cfg = ok;
  cfg.lr = 0.0;  // frozen weights are a legitimate request
  validate_train_config(cfg);
}

TEST_CASE("adam first step moves each weight by about lr") {
  float w[2] = {1.0f, -2.0f};
  float g[2] = {0.5f, -0.25f};
  std::vector<ParamView<float>> views{{"w", {2}, w, g, 2}};

  Adam adam;
  adam.lr = 0.1;
  CHECK_THROWS_AS(adam.step(views), Error);  // step before init

  adam.init(views);
  adam.step(views);
  // At t=1 the bias corrections cancel: update = lr * g / (|g| + eps).
  CHECK(w[0] == doctest::Approx(1.0 - 0.1 * (0.5 / (0.5 + 1e-8))).epsilon(1e-6));
  CHECK(w[1] == doctest::Approx(-2.0 + 0.1 * (0.25 / (0.25 + 1e-8))).epsilon(1e-6));

  float before0 = w[0], before1 = w[1];
  adam.step(views);  // same grads: keeps moving downhill
  CHECK(w[0] < before0);
  CHECK(w[1] > before1);
}

TEST_CASE("evaluate averages image-wise jaccard") {
  auto model = build_linear_combiner(1);
  for (auto& view : model->params()) std::fill(view.value, view.value + view.count, 0.0f);
  // All-zero combiner emits sigmoid(0) = 0.5 everywhere.

  Sample half;  // 2 of 4 pixels set: I = 1, U = 2 + 2 - 1 = 3
  half.x = Stack<float>(1, 2, 2);
  half.y = Mask(2, 2, 0);
  half.y.at(0, 0) = 1;
  half.y.at(1, 1) = 1;

  Sample full;  // all set: I = 2, U = 4 + 2 - 2 = 4
  full.x = Stack<float>(1, 2, 2);
  full.y = Mask(2, 2, 1);

  CHECK(evaluate(*model, {half}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(evaluate(*model, {half, full}) == doctest::Approx(5.0 / 12.0).epsilon(1e-12));
  CHECK_THROWS_AS(evaluate(*model, {}), Error);
}

TEST_CASE("train rejects bad sets") {
  auto model = build_unet(tiny_unet());
  init_weights(*model, 1);
  Sample s = memorizable_sample();
  TrainConfig cfg = memorize_config();
  cfg.epochs = 1;

  CHECK_THROWS_AS(train(*model, {}, {s}, cfg), Error);
  CHECK_THROWS_AS(train(*model, {s}, {}, cfg), Error);

  Sample mismatched;
  mismatched.x = Stack<float>(2, 4, 4);
  mismatched.y = Mask(4, 5, 0);
  CHECK_THROWS_AS(train(*model, {mismatched}, {s}, cfg), Error);

  // Non-square but still pool-friendly (each side divisible by 2^depth).
  Sample oblong;
  oblong.x = Stack<float>(2, 4, 6);
  oblong.y = Mask(4, 6, 0);
  oblong.y.at(0, 0) = 1;
  TrainConfig augmented = cfg;
  augmented.augment = true;
  CHECK_THROWS_AS(train(*model, {oblong}, {oblong}, augmented), Error);
  augmented.augment = false;  // non-square is fine without augmentation
  auto rect_net = tiny_unet();
  auto rect_model = build_unet(rect_net);
  init_weights(*rect_model, 1);
  TrainLog log = train(*rect_model, {oblong}, {oblong}, augmented);
  CHECK(log.epochs.size() == 1);
}

TEST_CASE("a tiny net memorizes one tile quickly") {
  Sample s = memorizable_sample();
  auto model = build_unet(tiny_unet());
  TrainConfig cfg = memorize_config();
  init_weights(*model, derive_seed(cfg.seed, "init", 0));

  TrainLog log = train(*model, {s}, {s}, cfg);
  CHECK(log.iterations == 50);  // one sample, no augmentation
  CHECK(log.epochs.size() == 50);
  CHECK(log.epochs.front().epoch == 1);
  CHECK(log.epochs.back().epoch == 50);

  double min_loss = 1.0;
  for (const EpochRecord& e : log.epochs) min_loss = std::min(min_loss, e.train_loss);
  CHECK(min_loss < 0.05);
  CHECK(log.best_val_jaccard > 0.9);
  CHECK(log.epochs.back().train_loss < log.epochs.front().train_loss);
  // the single-sample loss settles rather than oscillating early on
  for (size_t e = 1; e < 5; ++e)
    CHECK(log.epochs[e].train_loss <= log.epochs[e - 1].train_loss);
}

TEST_CASE("training is deterministic for a fixed seed") {
  Sample s = memorizable_sample();
  TrainConfig cfg = memorize_config();
  cfg.epochs = 3;

  auto run = [&] {
    auto model = build_unet(tiny_unet());
    init_weights(*model, derive_seed(cfg.seed, "init", 0));
    TrainLog log = train(*model, {s}, {s}, cfg);
    return std::make_pair(log, flat_weights(*model));
  };
  auto [log_a, weights_a] = run();
  auto [log_b, weights_b] = run();

  REQUIRE(log_a.epochs.size() == log_b.epochs.size());
  for (size_t i = 0; i < log_a.epochs.size(); ++i) {
    CHECK(log_a.epochs[i].train_loss == log_b.epochs[i].train_loss);
    CHECK(log_a.epochs[i].val_jaccard == log_b.epochs[i].val_jaccard);
  }
  CHECK(log_a.best_epoch == log_b.best_epoch);
  CHECK(weights_a == weights_b);
}

TEST_CASE("zero learning rate freezes the weights and ties go to the first epoch") {
  Sample s = memorizable_sample();
  auto model = build_unet(tiny_unet());
  init_weights(*model, 99);
  std::vector<float> before = flat_weights(*model);

  TrainConfig cfg = memorize_config();
  cfg.epochs = 3;
  cfg.lr = 0.0;
  TrainLog log = train(*model, {s}, {s}, cfg);

  CHECK(flat_weights(*model) == before);
  CHECK(log.best_epoch == 1);  // every epoch scores the same; earliest wins
  CHECK(log.epochs[0].val_jaccard == log.epochs[1].val_jaccard);
  CHECK(log.epochs[1].val_jaccard == log.epochs[2].val_jaccard);
  CHECK(log.epochs[0].train_loss == log.epochs[2].train_loss);
}

TEST_CASE("the model ends on its best epoch and the checkpoint reproduces it") {
  fs::path dir = fresh_dir("ckpt");
  Sample s = memorizable_sample();
  auto model = build_unet(tiny_unet());
  TrainConfig cfg = memorize_config();
  cfg.epochs = 8;
  init_weights(*model, derive_seed(cfg.seed, "init", 0));

  TrainLog log = train(*model, {s}, {s}, cfg, dir);
  REQUIRE(log.best_epoch >= 1);
  REQUIRE(log.best_epoch <= 8);
  CHECK(log.best_val_jaccard == log.epochs[size_t(log.best_epoch - 1)].val_jaccard);

  // In-memory model holds the best weights; the reloaded one matches bit for bit.
  CHECK(evaluate(*model, {s}) == log.best_val_jaccard);
  auto reloaded = load_checkpoint(dir);
  CHECK(reloaded->kind() == "unet");
  CHECK(evaluate(*reloaded, {s}) == log.best_val_jaccard);
  CHECK(flat_weights(*reloaded) == flat_weights(*model));
}

TEST_CASE("a poisoned weight surfaces as a divergence error") {
  Sample s = memorizable_sample();
  auto model = build_unet(tiny_unet());
  init_weights(*model, 7);
  bool poisoned = false;
  for (auto& view : model->params())
    if (view.name == "out.weight") {
      view.value[0] = std::numeric_limits<float>::quiet_NaN();
      poisoned = true;
    }
  REQUIRE(poisoned);

  TrainConfig cfg = memorize_config();
  cfg.epochs = 1;
  CHECK_THROWS_AS(train(*model, {s}, {s}, cfg), Error);
}

TEST_CASE("iteration accounting follows augmentation and batch size") {
  // A 1x1 combiner keeps these loops cheap.
  Sample a, b;
  a.x = Stack<float>(1, 6, 6);
  a.y = Mask(6, 6, 0);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 3; ++c) a.y.at(r, c) = 1;
  for (size_t i = 0; i < a.x.v.size(); ++i) a.x.v[i] = float(a.y.v[i]);
  b = a;

  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.lr = 1e-3;
  cfg.seed = 3;

  auto steps = [&](TrainConfig tc) {
    auto model = build_linear_combiner(1);
    init_weights(*model, 11);
    return train(*model, {a, b}, {a}, tc).iterations;
  };

  cfg.augment = true;  // 2 samples x 6 variants x 2 epochs
  CHECK(steps(cfg) == 24);
  cfg.augment = false;  // 2 samples x 2 epochs
  CHECK(steps(cfg) == 4);
  cfg.augment = true;
  cfg.batch_size = 12;  // whole epoch in one step
  CHECK(steps(cfg) == 2);
  cfg.augment = false;
  cfg.batch_size = 5;  // batch larger than the set still takes one step per epoch
  CHECK(steps(cfg) == 2);
}

TEST_CASE("single epoch produces a single record") {
  Sample s = memorizable_sample();
  auto model = build_unet(tiny_unet());
  init_weights(*model, 4);
  TrainConfig cfg = memorize_config();
  cfg.epochs = 1;
  TrainLog log = train(*model, {s}, {s}, cfg);
  CHECK(log.epochs.size() == 1);
  CHECK(log.best_epoch == 1);
  CHECK(log.iterations == 1);
}

TEST_CASE("train log serializes one json line per epoch plus a summary") {
  fs::path file = fresh_dir("log") / "train.jsonl";
  TrainLog log;
  log.epochs = {{1, 0.5, 0.25, 0.01}, {2, 0.25, 0.75, 0.012}};
  log.best_epoch = 2;
  log.best_val_jaccard = 0.75;
  log.iterations = 24;
  write_train_log(log, file);

  std::ifstream in(file);
  REQUIRE(bool(in));
  std::vector<nlohmann::json> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(nlohmann::json::parse(line));
  REQUIRE(lines.size() == 3);
  CHECK(lines[0]["type"] == "epoch");
  CHECK(lines[0]["epoch"] == 1);
  CHECK(lines[0]["train_loss"] == doctest::Approx(0.5));
  CHECK(lines[1]["val_jaccard"] == doctest::Approx(0.75));
  CHECK(lines[2]["type"] == "summary");
  CHECK(lines[2]["best_epoch"] == 2);
  CHECK(lines[2]["best_val_jaccard"] == doctest::Approx(0.75));
  CHECK(lines[2]["iterations"] == 24);
}

namespace {

std::vector<Tile> quick_tiles(int n, uint64_t salt) {
  SceneSpec spec;
  spec.width = 32;
  spec.height = 32;
  spec.n_buildings = 3;
  spec.size_min = 4;
  spec.size_max = 8;
  spec.adjacency_prob = 0.0;
  spec.channel_noise = 0.05;
  spec.channel_dropout = 0.25;
  spec.n_channels = 4;
  std::vector<Tile> tiles;
  for (int i = 0; i < n; ++i) {
    spec.seed = derive_seed(salt, "tile", uint64_t(i));
    tiles.push_back(generate_scene(spec));
  }
  return tiles;
}

PipelineConfig quick_pipeline() {
  UNetConfig base = {2, 1, 4, 1, "relu"};
  PipelineConfig pc;
  pc.members = {{base, {0, 1}}, {base, {2, 3}}, {base, {0, 3}}};
  pc.deep_net = {3 + 4, 1, 4, 1, "relu"};
  pc.base_train.epochs = 2;
  pc.base_train.lr = 1e-3;
  pc.base_train.seed = 5;
  pc.base_train.augment = false;
  pc.combiner_train = pc.base_train;
  return pc;
}

}  // namespace

TEST_CASE("pipeline validation catches bad member wiring") {
  auto train_tiles = quick_tiles(2, 900);
  auto val_tiles = quick_tiles(1, 901);
  fs::path dir = fresh_dir("pipe_bad");

  PipelineConfig pc = quick_pipeline();
  pc.members.clear();
  CHECK_THROWS_AS(train_pipeline(train_tiles, val_tiles, pc, dir), Error);

  pc = quick_pipeline();
  pc.members[1].channels = {2, 9};  // tiles only have 4 channels
  CHECK_THROWS_AS(train_pipeline(train_tiles, val_tiles, pc, dir), Error);

  pc = quick_pipeline();
  pc.members[0].channels = {0, 1, 2};  // net expects 2 input channels
  CHECK_THROWS_AS(train_pipeline(train_tiles, val_tiles, pc, dir), Error);

  pc = quick_pipeline();
  pc.deep_net.in_channels = 5;  // members + channels = 7
  CHECK_THROWS_AS(train_pipeline(train_tiles, val_tiles, pc, dir), Error);

  pc = quick_pipeline();
  CHECK_THROWS_AS(train_pipeline({}, val_tiles, pc, dir), Error);
}

TEST_CASE("pipeline trains members and combiners and the artifacts reload") {
  auto train_tiles = quick_tiles(6, 910);
  auto val_tiles = quick_tiles(2, 911);
  fs::path dir = fresh_dir("pipe");

  PipelineConfig pc = quick_pipeline();
  PipelineResult result = train_pipeline(train_tiles, val_tiles, pc, dir);

  REQUIRE(result.member_logs.size() == 3);
  for (const TrainLog& log : result.member_logs) {
    CHECK(log.epochs.size() == 2);
    CHECK(log.iterations == 12);  // 6 tiles x 2 epochs, no augmentation
  }
  CHECK(result.linear_log.epochs.size() == 2);
  CHECK(result.deep_log.epochs.size() == 2);

  for (const char* leaf :
       {"ensemble.json", "models/base0/weights.json", "models/base1/weights.bin",
        "models/base2/weights.json", "models/linear/weights.bin", "models/deep/weights.json",
        "logs/base0.jsonl", "logs/base2.jsonl", "logs/linear.jsonl", "logs/deep.jsonl"})
    CHECK(fs::exists(dir / leaf));

  CHECK(result.manifest.members.size() == 3);
  CHECK(result.manifest.members[1].dir == "models/base1");
  CHECK(result.manifest.members[2].channels == std::vector<int>{0, 3});
  CHECK(result.manifest.linear_dir == "models/linear");
  CHECK(result.manifest.deep_dir == "models/deep");

  EnsembleModels ens = load_ensemble_models(dir);
  REQUIRE(ens.members.size() == 3);
  CHECK(ens.member_channels[0] == std::vector<int>{0, 1});
  REQUIRE(bool(ens.linear));
  REQUIRE(bool(ens.deep));

  std::vector<SegMap> maps = member_maps(ens, val_tiles[0].channels);
  REQUIRE(maps.size() == 3);
  for (const SegMap& m : maps) {
    CHECK(m.h == 32);
    CHECK(m.w == 32);
  }
  SegMap avg = fuse_average(maps);
  CHECK(avg.h == 32);
  SegMap lin = ens.linear->forward(stack_maps(maps));
  CHECK(lin.w == 32);
  SegMap deep = fuse_deep(*ens.deep, maps, val_tiles[0].channels);
  for (float p : deep.v) {
    CHECK(p >= 0.0f);
    CHECK(p <= 1.0f);
  }

  // The reloaded member replays its recorded validation score exactly.
  std::vector<Sample> va0;
  for (const Tile& tile : val_tiles)
    va0.push_back({select_channels(tile.channels, pc.members[0].channels), tile.mask});
  CHECK(evaluate(*ens.members[0], va0) == result.member_logs[0].best_val_jaccard);
}

TEST_CASE("parallel member training matches the serial run") {
  auto train_tiles = quick_tiles(3, 920);
  auto val_tiles = quick_tiles(1, 921);

  PipelineConfig pc = quick_pipeline();
  pc.members.resize(2);
  pc.train_linear = false;
  pc.train_deep = false;

  fs::path serial_dir = fresh_dir("pipe_serial");
  PipelineResult serial = train_pipeline(train_tiles, val_tiles, pc, serial_dir);

  pc.workers = 3;
  fs::path parallel_dir = fresh_dir("pipe_parallel");
  PipelineResult parallel = train_pipeline(train_tiles, val_tiles, pc, parallel_dir);

  REQUIRE(serial.member_logs.size() == parallel.member_logs.size());
  for (size_t i = 0; i < serial.member_logs.size(); ++i) {
    CHECK(serial.member_logs[i].best_val_jaccard == parallel.member_logs[i].best_val_jaccard);
    for (size_t e = 0; e < serial.member_logs[i].epochs.size(); ++e)
      CHECK(serial.member_logs[i].epochs[e].train_loss ==
            parallel.member_logs[i].epochs[e].train_loss);
  }
  CHECK(serial.manifest.linear_dir.empty());
  CHECK(serial.manifest.deep_dir.empty());

  EnsembleModels ens = load_ensemble_models(parallel_dir);
  CHECK(ens.members.size() == 2);
  CHECK(!ens.linear);
  CHECK(!ens.deep);
}
