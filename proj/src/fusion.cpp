#include "segfuse/fusion.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace segfuse {

using nlohmann::json;

static void check_maps(const std::vector<SegMap>& maps) {
  if (maps.empty()) throw Error("fusion: no member maps");
  for (size_t i = 0; i < maps.size(); ++i) {
    const SegMap& m = maps[i];
    if (m.h != maps[0].h || m.w != maps[0].w)
      throw Error("fusion: member " + std::to_string(i) + " is " + std::to_string(m.h) + "x" +
                  std::to_string(m.w) + ", member 0 is " + std::to_string(maps[0].h) + "x" +
                  std::to_string(maps[0].w));
    for (float v : m.v)
      if (!(v >= 0.0f && v <= 1.0f))
        throw Error("fusion: member " + std::to_string(i) + " holds a value outside [0, 1]");
  }
}

SegMap fuse_average(const std::vector<SegMap>& maps) {
  check_maps(maps);
  SegMap out(maps[0].h, maps[0].w, 0.0f);
  for (const SegMap& m : maps)
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += m.v[i];
  float inv = 1.0f / float(maps.size());
  for (float& v : out.v) v *= inv;
  return out;
}

VoteResult fuse_vote(const std::vector<SegMap>& maps, float threshold) {
  check_maps(maps);
  VoteResult res;
  res.even_members = maps.size() % 2 == 0;
  res.share = SegMap(maps[0].h, maps[0].w, 0.0f);
  for (const SegMap& m : maps)
    for (size_t i = 0; i < res.share.v.size(); ++i)
      if (m.v[i] >= threshold) res.share.v[i] += 1.0f;
  float inv = 1.0f / float(maps.size());
  res.uncertainty = SegMap(res.share.h, res.share.w);
  for (size_t i = 0; i < res.share.v.size(); ++i) {
    res.share.v[i] *= inv;
    res.uncertainty.v[i] = 1.0f - std::fabs(2.0f * res.share.v[i] - 1.0f);
  }
  return res;
}

Stack<float> stack_maps(const std::vector<SegMap>& maps) {
  check_maps(maps);
  Stack<float> x(int(maps.size()), maps[0].h, maps[0].w);
  for (size_t m = 0; m < maps.size(); ++m)
    std::copy(maps[m].v.begin(), maps[m].v.end(), x.channel(int(m)));
  return x;
}

Stack<float> stack_maps_with_channels(const std::vector<SegMap>& maps, const Stack<float>& channels) {
  check_maps(maps);
  if (channels.h != maps[0].h || channels.w != maps[0].w)
    throw Error("fusion: raw channels are " + std::to_string(channels.h) + "x" +
                std::to_string(channels.w) + ", maps are " + std::to_string(maps[0].h) + "x" +
                std::to_string(maps[0].w));
  Stack<float> x(int(maps.size()) + channels.c, maps[0].h, maps[0].w);
  for (size_t m = 0; m < maps.size(); ++m)
    std::copy(maps[m].v.begin(), maps[m].v.end(), x.channel(int(m)));
  std::copy(channels.v.begin(), channels.v.end(), x.channel(int(maps.size())));
  return x;
}

SegMap fuse_linear(LinearCombiner& model, const std::vector<SegMap>& maps) {
  if (model.members != int(maps.size()))
    throw Error("fusion: linear combiner expects " + std::to_string(model.members) +
                " members, got " + std::to_string(maps.size()));
  return model.forward(stack_maps(maps));
}

SegMap fuse_deep(SegModel& model, const std::vector<SegMap>& maps, const Stack<float>& channels) {
  int want = int(maps.size()) + channels.c;
  if (model.in_channels() != want)
    throw Error("fusion: deep combiner expects " + std::to_string(model.in_channels()) +
                " input channels, maps+channels give " + std::to_string(want));
  return model.forward(stack_maps_with_channels(maps, channels));
}

Stack<float> select_channels(const Stack<float>& x, const std::vector<int>& idx) {
  if (idx.empty()) throw Error("select_channels: empty channel list");
  Stack<float> out(int(idx.size()), x.h, x.w);
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= x.c)
      throw Error("select_channels: index " + std::to_string(idx[i]) + " out of range, stack has " +
                  std::to_string(x.c) + " channels");
    std::copy(x.channel(idx[i]), x.channel(idx[i]) + x.plane(), out.channel(int(i)));
  }
  return out;
}

void save_ensemble(const EnsembleManifest& m, const std::filesystem::path& file) {
  if (m.members.empty()) throw Error("ensemble manifest: no members");
  json members = json::array();
  for (const auto& member : m.members)
    members.push_back({{"dir", member.dir}, {"channels", member.channels}});
  json doc{{"schema_version", 1}, {"members", members}};
  if (!m.linear_dir.empty()) doc["linear_dir"] = m.linear_dir;
  if (!m.deep_dir.empty()) doc["deep_dir"] = m.deep_dir;
  std::ofstream out(file);
  if (!out) throw Error("ensemble manifest: cannot write " + file.string());
  out << doc.dump(2) << "\n";
}

EnsembleManifest load_ensemble(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error("ensemble manifest: cannot open " + file.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw Error("ensemble manifest: bad json in " + file.string() + ": " + e.what());
  }
  if (doc.value("schema_version", 0) != 1)
    throw Error("ensemble manifest: unsupported schema_version in " + file.string());
  EnsembleManifest m;
  for (const json& member : doc.at("members")) {
    EnsembleManifest::Member entry;
    entry.dir = member.at("dir").get<std::string>();
    entry.channels = member.at("channels").get<std::vector<int>>();
    if (entry.channels.empty())
      throw Error("ensemble manifest: member '" + entry.dir + "' lists no channels");
    m.members.push_back(std::move(entry));
  }
  if (m.members.empty()) throw Error("ensemble manifest: no members in " + file.string());
  m.linear_dir = doc.value("linear_dir", "");
  m.deep_dir = doc.value("deep_dir", "");
  return m;
}

EnsembleModels load_ensemble_models(const std::filesystem::path& dir) {
  EnsembleManifest manifest = load_ensemble(dir / "ensemble.json");
  EnsembleModels ens;
  for (const auto& member : manifest.members) {
    ens.members.push_back(load_checkpoint(dir / member.dir));
    ens.member_channels.push_back(member.channels);
  }
  if (!manifest.linear_dir.empty()) ens.linear = load_checkpoint(dir / manifest.linear_dir);
  if (!manifest.deep_dir.empty()) ens.deep = load_checkpoint(dir / manifest.deep_dir);
  return ens;
}

std::vector<SegMap> member_maps(EnsembleModels& ens, const Stack<float>& channels) {
  std::vector<SegMap> maps;
  maps.reserve(ens.members.size());
  for (size_t i = 0; i < ens.members.size(); ++i)
    maps.push_back(ens.members[i]->forward(select_channels(channels, ens.member_channels[i])));
  return maps;
}

}  // namespace segfuse
