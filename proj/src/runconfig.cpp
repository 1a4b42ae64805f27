#include "segfuse/runconfig.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

namespace segfuse {

using nlohmann::json;

static void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                           const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw Error("config: unknown key '" + it.key() + "' in " + where);
}

static UNetConfig unet_from_json(const json& obj, const std::string& where) {
  reject_unknown(obj, {"depth", "base_width", "conv_per_block", "activation"}, where);
  UNetConfig cfg;  // in_channels is derived by the caller
  cfg.depth = obj.value("depth", cfg.depth);
  cfg.base_width = obj.value("base_width", cfg.base_width);
  cfg.conv_per_block = obj.value("conv_per_block", cfg.conv_per_block);
  cfg.activation = obj.value("activation", cfg.activation);
  return cfg;
}

static json unet_to_json(const UNetConfig& cfg) {
  return json{{"depth", cfg.depth},
              {"base_width", cfg.base_width},
              {"conv_per_block", cfg.conv_per_block},
              {"activation", cfg.activation}};
}

static TrainConfig train_from_json(const json& obj, const std::string& where) {
  reject_unknown(obj, {"epochs", "batch_size", "lr", "optimizer", "augment"}, where);
  TrainConfig cfg;  // the seed is derived from the root seed, never configured
  cfg.epochs = obj.value("epochs", cfg.epochs);
  cfg.batch_size = obj.value("batch_size", cfg.batch_size);
  cfg.lr = obj.value("lr", cfg.lr);
  cfg.optimizer = obj.value("optimizer", cfg.optimizer);
  cfg.augment = obj.value("augment", cfg.augment);
  return cfg;
}

static json train_to_json(const TrainConfig& cfg) {
  return json{{"epochs", cfg.epochs},
              {"batch_size", cfg.batch_size},
              {"lr", cfg.lr},
              {"optimizer", cfg.optimizer},
              {"augment", cfg.augment}};
}

static std::vector<MemberSpec> default_members() {
  // one strong-, one medium-, one weak-contrast band group
  std::vector<MemberSpec> members(3);
  members[0].channels = {0, 1, 2};
  members[1].channels = {3, 4, 5};
  members[2].channels = {0, 6, 7};
  for (MemberSpec& m : members) {
    m.net.depth = 2;
    m.net.base_width = 8;
    m.net.conv_per_block = 2;
  }
  return members;
}

static void validate_run_config(const RunConfig& cfg) {
  validate_scene_spec(cfg.scene);
  if (cfg.dataset.n_tiles < 2) throw Error("config: dataset.n_tiles must be >= 2");
  if (cfg.members.empty()) throw Error("config: members must not be empty");
  for (size_t i = 0; i < cfg.members.size(); ++i) {
    const MemberSpec& m = cfg.members[i];
    if (m.channels.empty())
      throw Error("config: members." + std::to_string(i) + ".channels is empty");
    for (int ch : m.channels)
      if (ch < 0 || ch >= cfg.scene.n_channels)
        throw Error("config: members." + std::to_string(i) + " channel " + std::to_string(ch) +
                    " out of range for " + std::to_string(cfg.scene.n_channels) + " channels");
    validate_unet_config(m.net);
  }
  validate_unet_config(cfg.deep_net);
  validate_train_config(cfg.base_train);
  validate_train_config(cfg.combiner_train);

  static const std::set<std::string> kFusions{"average", "vote", "linear", "deep"};
  if (cfg.fusion.empty()) throw Error("config: fusion list is empty");
  for (const std::string& f : cfg.fusion)
    if (!kFusions.count(f)) throw Error("config: unknown fusion strategy '" + f + "'");

  std::set<std::string> strategies(cfg.fusion.begin(), cfg.fusion.end());
  for (size_t i = 0; i < cfg.members.size(); ++i) strategies.insert("base" + std::to_string(i));
  if (!strategies.count(cfg.baseline))
    throw Error("config: baseline '" + cfg.baseline + "' is not a scored strategy");

  if (!(cfg.scorer.prob_threshold > 0.0f && cfg.scorer.prob_threshold < 1.0f))
    throw Error("config: scorer.prob_threshold must be inside (0, 1)");
  if (!(cfg.scorer.iou_threshold >= 0.0 && cfg.scorer.iou_threshold < 1.0))
    throw Error("config: scorer.iou_threshold must be inside [0, 1)");
  if (cfg.scorer.min_area < 0) throw Error("config: scorer.min_area must be >= 0");
  if (cfg.scorer.match_order != "iou" && cfg.scorer.match_order != "score")
    throw Error("config: scorer.match_order must be 'iou' or 'score'");
  for (int b : cfg.overlay_bands)
    if (b < 0 || b >= cfg.scene.n_channels)
      throw Error("config: overlay_bands entry " + std::to_string(b) + " out of range");
  if (cfg.workers < 1) throw Error("config: workers must be >= 1");

  double sum = cfg.dataset.ratios.train + cfg.dataset.ratios.val + cfg.dataset.ratios.test;
  if (std::fabs(sum - 1.0) > 1e-9)
    throw Error("config: dataset split ratios sum to " + std::to_string(sum) + ", expected 1");
  if (cfg.dataset.ratios.train <= 0.0 || cfg.dataset.ratios.val <= 0.0)
    throw Error("config: train and val ratios must be positive");
}

RunConfig load_run_config(const std::filesystem::path& file,
                          const std::vector<std::string>& overrides) {
  std::ifstream in(file);
  if (!in) throw Error("config: cannot open " + file.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw Error("config: bad json in " + file.string() + ": " + e.what());
  }

  for (const std::string& kv : overrides) {
    size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw Error("config: override '" + kv + "' is not key=value");
    std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
    std::string pointer = "/";
    for (char c : key) pointer += c == '.' ? '/' : c;
    json parsed = json::parse(value, nullptr, false);
    if (parsed.is_discarded()) parsed = value;  // bare words are strings
    try {
      doc[json::json_pointer(pointer)] = parsed;
    } catch (const json::exception& e) {
      throw Error("config: cannot apply override '" + kv + "': " + e.what());
    }
  }

  reject_unknown(doc,
                 {"schema_version", "seed", "data_dir", "run_dir", "scene", "dataset", "members",
                  "deep_net", "base_train", "combiner_train", "fusion", "scorer", "overlay_bands",
                  "workers", "baseline"},
                 "config root");
  if (doc.value("schema_version", 1) != 1)
    throw Error("config: unsupported schema_version in " + file.string());

  RunConfig cfg;
  cfg.seed = doc.value("seed", cfg.seed);
  cfg.data_dir = doc.value("data_dir", cfg.data_dir.string());
  cfg.run_dir = doc.value("run_dir", cfg.run_dir.string());

  if (doc.contains("scene")) {
    const json& s = doc["scene"];
    reject_unknown(s,
                   {"width", "height", "n_buildings", "size_min", "size_max", "adjacency_prob",
                    "channel_noise", "channel_dropout", "n_channels"},
                   "scene");
    cfg.scene.width = s.value("width", cfg.scene.width);
    cfg.scene.height = s.value("height", cfg.scene.height);
    cfg.scene.n_buildings = s.value("n_buildings", cfg.scene.n_buildings);
    cfg.scene.size_min = s.value("size_min", cfg.scene.size_min);
    cfg.scene.size_max = s.value("size_max", cfg.scene.size_max);
    cfg.scene.adjacency_prob = s.value("adjacency_prob", cfg.scene.adjacency_prob);
    cfg.scene.channel_noise = s.value("channel_noise", cfg.scene.channel_noise);
    cfg.scene.channel_dropout = s.value("channel_dropout", cfg.scene.channel_dropout);
    cfg.scene.n_channels = s.value("n_channels", cfg.scene.n_channels);
  }
  if (doc.contains("dataset")) {
    const json& d = doc["dataset"];
    reject_unknown(d, {"n_tiles", "train_ratio", "val_ratio", "test_ratio"}, "dataset");
    cfg.dataset.n_tiles = d.value("n_tiles", cfg.dataset.n_tiles);
    cfg.dataset.ratios.train = d.value("train_ratio", cfg.dataset.ratios.train);
    cfg.dataset.ratios.val = d.value("val_ratio", cfg.dataset.ratios.val);
    cfg.dataset.ratios.test = d.value("test_ratio", cfg.dataset.ratios.test);
  }

  if (doc.contains("members")) {
    for (const json& m : doc["members"]) {
      reject_unknown(m, {"channels", "net"}, "members entry");
      MemberSpec spec;
      spec.channels = m.at("channels").get<std::vector<int>>();
      if (m.contains("net")) spec.net = unet_from_json(m["net"], "member net");
      else {
        spec.net.depth = 2;
        spec.net.base_width = 8;
        spec.net.conv_per_block = 2;
      }
      cfg.members.push_back(std::move(spec));
    }
  } else {
    cfg.members = default_members();
  }
  for (MemberSpec& m : cfg.members) m.net.in_channels = int(m.channels.size());

  if (doc.contains("deep_net")) cfg.deep_net = unet_from_json(doc["deep_net"], "deep_net");
  else {
    cfg.deep_net.depth = 2;
    cfg.deep_net.base_width = 8;
    cfg.deep_net.conv_per_block = 2;
  }
  cfg.deep_net.in_channels = int(cfg.members.size()) + cfg.scene.n_channels;

  if (doc.contains("base_train")) cfg.base_train = train_from_json(doc["base_train"], "base_train");
  if (doc.contains("combiner_train"))
    cfg.combiner_train = train_from_json(doc["combiner_train"], "combiner_train");
  cfg.base_train.seed = derive_seed(cfg.seed, "train", 0);
  cfg.combiner_train.seed = derive_seed(cfg.seed, "combiner", 0);

  if (doc.contains("fusion")) cfg.fusion = doc["fusion"].get<std::vector<std::string>>();
  if (doc.contains("scorer")) {
    const json& s = doc["scorer"];
    reject_unknown(s, {"prob_threshold", "iou_threshold", "min_area", "match_order"}, "scorer");
    cfg.scorer.prob_threshold = s.value("prob_threshold", cfg.scorer.prob_threshold);
    cfg.scorer.iou_threshold = s.value("iou_threshold", cfg.scorer.iou_threshold);
    cfg.scorer.min_area = s.value("min_area", cfg.scorer.min_area);
    cfg.scorer.match_order = s.value("match_order", cfg.scorer.match_order);
  }
  if (doc.contains("overlay_bands")) {
    auto bands = doc["overlay_bands"].get<std::vector<int>>();
    if (bands.size() != 3) throw Error("config: overlay_bands needs exactly 3 entries");
    std::copy(bands.begin(), bands.end(), cfg.overlay_bands.begin());
  }
  cfg.workers = doc.value("workers", cfg.workers);
  cfg.baseline = doc.value("baseline", cfg.baseline);

  validate_run_config(cfg);
  return cfg;
}

json run_config_json(const RunConfig& cfg) {
  json members = json::array();
  for (const MemberSpec& m : cfg.members)
    members.push_back({{"channels", m.channels}, {"net", unet_to_json(m.net)}});
  return json{
      {"schema_version", 1},
      {"seed", cfg.seed},
      {"data_dir", cfg.data_dir.string()},
      {"run_dir", cfg.run_dir.string()},
      {"scene",
       {{"width", cfg.scene.width},
        {"height", cfg.scene.height},
        {"n_buildings", cfg.scene.n_buildings},
        {"size_min", cfg.scene.size_min},
        {"size_max", cfg.scene.size_max},
        {"adjacency_prob", cfg.scene.adjacency_prob},
        {"channel_noise", cfg.scene.channel_noise},
        {"channel_dropout", cfg.scene.channel_dropout},
        {"n_channels", cfg.scene.n_channels}}},
      {"dataset",
       {{"n_tiles", cfg.dataset.n_tiles},
        {"train_ratio", cfg.dataset.ratios.train},
        {"val_ratio", cfg.dataset.ratios.val},
        {"test_ratio", cfg.dataset.ratios.test}}},
      {"members", members},
      {"deep_net", unet_to_json(cfg.deep_net)},
      {"base_train", train_to_json(cfg.base_train)},
      {"combiner_train", train_to_json(cfg.combiner_train)},
      {"fusion", cfg.fusion},
      {"scorer",
       {{"prob_threshold", cfg.scorer.prob_threshold},
        {"iou_threshold", cfg.scorer.iou_threshold},
        {"min_area", cfg.scorer.min_area},
        {"match_order", cfg.scorer.match_order}}},
      {"overlay_bands", cfg.overlay_bands},
      {"workers", cfg.workers},
      {"baseline", cfg.baseline},
  };
}

std::string config_hash(const RunConfig& cfg) {
  uint64_t h = fnv1a64(run_config_json(cfg).dump());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

PipelineConfig pipeline_config(const RunConfig& cfg) {
  PipelineConfig p;
  p.members = cfg.members;
  p.deep_net = cfg.deep_net;
  p.base_train = cfg.base_train;
  p.combiner_train = cfg.combiner_train;
  p.train_linear =
      std::find(cfg.fusion.begin(), cfg.fusion.end(), "linear") != cfg.fusion.end();
  p.train_deep = std::find(cfg.fusion.begin(), cfg.fusion.end(), "deep") != cfg.fusion.end();
  p.workers = cfg.workers;
  return p;
}

}  // namespace segfuse
