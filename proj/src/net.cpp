#include "segfuse/net.hpp"

#include <fstream>

#include <json.hpp>

namespace segfuse {

using nlohmann::json;

void validate_unet_config(const UNetConfig& cfg) {
  if (cfg.in_channels < 1) throw Error("unet config: in_channels must be >= 1");
  if (cfg.depth < 1) throw Error("unet config: depth must be >= 1");
  if (cfg.base_width < 1) throw Error("unet config: base_width must be >= 1");
  if (cfg.conv_per_block < 1) throw Error("unet config: conv_per_block must be >= 1");
  if (cfg.activation != "relu")
    throw Error("unet config: unsupported activation '" + cfg.activation + "'");
}

LinearCombiner::LinearCombiner(int m) : members(m) {
  if (m < 1) throw Error("linear combiner: needs at least one member, got " + std::to_string(m));
  w.assign(size_t(m), 0.0f);
  gw.assign(size_t(m), 0.0f);
}

SegMap LinearCombiner::forward_logits(const Stack<float>& x) {
  if (x.c != members)
    throw Error("linear combiner: input has " + std::to_string(x.c) +
                " channels, expected " + std::to_string(members));
  input = x;
  SegMap z(x.h, x.w, b);
  for (int m = 0; m < members; ++m) {
    const float* src = x.channel(m);
    float wm = w[size_t(m)];
    for (size_t i = 0; i < z.v.size(); ++i) z.v[i] += wm * src[i];
  }
  return z;
}

SegMap LinearCombiner::forward(const Stack<float>& x) {
  SegMap z = forward_logits(x);
  prob = SegMap(z.h, z.w);
  for (size_t i = 0; i < z.v.size(); ++i)
    prob.v[i] = 1.0f / (1.0f + std::exp(-z.v[i]));
  return prob;
}

void LinearCombiner::backward(const SegMap& grad) {
  SegMap gz(prob.h, prob.w);
  for (size_t i = 0; i < gz.v.size(); ++i) {
    float y = prob.v[i];
    gz.v[i] = grad.v[i] * y * (1.0f - y);
  }
  double gbias = 0.0;
  for (float g : gz.v) gbias += g;
  gb += float(gbias);
  for (int m = 0; m < members; ++m) {
    const float* src = input.channel(m);
    double acc = 0.0;
    for (size_t i = 0; i < gz.v.size(); ++i) acc += double(gz.v[i]) * src[i];
    gw[size_t(m)] += float(acc);
  }
}

std::vector<ParamView<float>> LinearCombiner::params() {
  return {
      {"mix.weight", {1, members, 1, 1}, w.data(), gw.data(), w.size()},
      {"mix.bias", {1}, &b, &gb, 1},
  };
}

std::unique_ptr<SegModel> build_unet(const UNetConfig& cfg) {
  return std::make_unique<UNetModel>(cfg);
}

std::unique_ptr<SegModel> build_linear_combiner(int members) {
  return std::make_unique<LinearCombiner>(members);
}

void init_weights(SegModel& model, uint64_t seed) {
  init_weights_uniform(model.params(), seed);
  model.init_seed = seed;
}

size_t count_params(SegModel& model) {
  size_t total = 0;
  for (const auto& view : model.params()) total += view.count;
  return total;
}

void zero_grads(SegModel& model) {
  for (auto& view : model.params())
    std::fill(view.grad, view.grad + view.count, 0.0f);
}

static json config_json(SegModel& model) {
  if (auto* u = dynamic_cast<UNetModel*>(&model)) {
    const UNetConfig& c = u->net.cfg;
    return json{{"in_channels", c.in_channels},
                {"depth", c.depth},
                {"base_width", c.base_width},
                {"conv_per_block", c.conv_per_block},
                {"activation", c.activation}};
  }
  auto* l = dynamic_cast<LinearCombiner*>(&model);
  if (!l) throw Error("checkpoint: unknown model type");
  return json{{"members", l->members}};
}

void save_checkpoint(SegModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto views = model.params();
  json tensors = json::array();
  size_t total = 0;
  for (const auto& view : views) {
    tensors.push_back({{"name", view.name}, {"shape", view.shape}});
    total += view.count;
  }
  json manifest{{"schema_version", 1},
                {"kind", model.kind()},
                {"config", config_json(model)},
                {"init_seed", model.init_seed},
                {"tensors", tensors}};
  {
    std::ofstream out(dir / "weights.json");
    if (!out) throw Error("checkpoint: cannot write " + (dir / "weights.json").string());
    out << manifest.dump(2) << "\n";
  }
  std::ofstream bin(dir / "weights.bin", std::ios::binary);
  if (!bin) throw Error("checkpoint: cannot write " + (dir / "weights.bin").string());
  for (const auto& view : views)
    bin.write(reinterpret_cast<const char*>(view.value),
              std::streamsize(view.count * sizeof(float)));
  if (!bin) throw Error("checkpoint: short write to " + (dir / "weights.bin").string());
  (void)total;
}

std::unique_ptr<SegModel> load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "weights.json");
  if (!in) throw Error("checkpoint: cannot open " + (dir / "weights.json").string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw Error("checkpoint: bad weights.json in " + dir.string() + ": " + e.what());
  }
  if (manifest.value("schema_version", 0) != 1)
    throw Error("checkpoint: unsupported schema_version in " + dir.string());

  std::string kind = manifest.at("kind").get<std::string>();
  const json& cfg = manifest.at("config");
  std::unique_ptr<SegModel> model;
  if (kind == "unet") {
    UNetConfig c;
    c.in_channels = cfg.at("in_channels").get<int>();
    c.depth = cfg.at("depth").get<int>();
    c.base_width = cfg.at("base_width").get<int>();
    c.conv_per_block = cfg.at("conv_per_block").get<int>();
    c.activation = cfg.value("activation", "relu");
    model = build_unet(c);
  } else if (kind == "linear") {
    model = build_linear_combiner(cfg.at("members").get<int>());
  } else {
    throw Error("checkpoint: unknown kind '" + kind + "' in " + dir.string());
  }
  model->init_seed = manifest.value("init_seed", uint64_t(0));

  auto views = model->params();
  const json& tensors = manifest.at("tensors");
  if (tensors.size() != views.size())
    throw Error("checkpoint: " + dir.string() + " lists " + std::to_string(tensors.size()) +
                " tensors, model has " + std::to_string(views.size()));
  size_t total = 0;
  for (size_t i = 0; i < views.size(); ++i) {
    const json& t = tensors[i];
    if (t.at("name").get<std::string>() != views[i].name)
      throw Error("checkpoint: tensor " + std::to_string(i) + " is '" +
                  t.at("name").get<std::string>() + "', model expects '" + views[i].name + "'");
    if (t.at("shape").get<std::vector<int>>() != views[i].shape)
      throw Error("checkpoint: shape mismatch for tensor '" + views[i].name + "'");
    total += views[i].count;
  }

  std::ifstream bin(dir / "weights.bin", std::ios::binary);
  if (!bin) throw Error("checkpoint: cannot open " + (dir / "weights.bin").string());
  bin.seekg(0, std::ios::end);
  size_t bytes = size_t(bin.tellg());
  bin.seekg(0);
  if (bytes != total * sizeof(float))
    throw Error("checkpoint: weights.bin has " + std::to_string(bytes) + " bytes, manifest expects " +
                std::to_string(total * sizeof(float)));
  for (auto& view : views) {
    bin.read(reinterpret_cast<char*>(view.value), std::streamsize(view.count * sizeof(float)));
    if (!bin) throw Error("checkpoint: short read from " + (dir / "weights.bin").string());
  }
  return model;
}

}  // namespace segfuse
