#include "idrestore/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace idr {

namespace {

using nlohmann::json;

std::filesystem::path with_ext(std::filesystem::path path, const char* ext) {
  if (path.extension() == ".json" || path.extension() == ".bin") path.replace_extension();
  path += ext;
  return path;
}

json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open checkpoint manifest " + p.string());
  return json::parse(in);
}

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

}  // namespace

CheckpointManifest save_checkpoint(const std::filesystem::path& path, std::span<ParameterGroup* const> groups,
                                   const std::vector<std::string>& handoff, const std::string& stage,
                                   const std::vector<std::string>& backbone) {
  const auto bin_path = with_ext(path, ".bin");
  const auto json_path = with_ext(path, ".json");
  if (bin_path.has_parent_path()) std::filesystem::create_directories(bin_path.parent_path());

  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write " + bin_path.string());
  json manifest;
  manifest["format"] = "idrestore-checkpoint";
  manifest["version"] = 1;
  manifest["data"] = bin_path.filename().string();
  manifest["stage"] = stage;
  manifest["handoff"] = handoff;
  manifest["backbone"] = backbone;
  CheckpointManifest out{{}, handoff, backbone, stage};
  std::size_t offset = 0;
  for (const ParameterGroup* g : groups) {
    json params = json::array();
    for (const auto& p : g->params()) {
      const auto values = p.var.value().values();
      bin.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
      params.push_back({{"name", p.name}, {"shape", p.var.shape()}, {"offset", offset}, {"count", values.size()}});
      offset += values.size();
    }
    manifest["groups"][g->name()] = {{"params", params}};
    out.groups.push_back(g->name());
  }
  if (!bin) throw std::runtime_error("short write to " + bin_path.string());
  std::ofstream js(json_path);
  js << manifest.dump(2) << '\n';
  if (!js) throw std::runtime_error("cannot write " + json_path.string());
  return out;
}

CheckpointManifest read_checkpoint_manifest(const std::filesystem::path& path) {
  json m = read_json(with_ext(path, ".json"));
  CheckpointManifest out;
  for (auto it = m.at("groups").begin(); it != m.at("groups").end(); ++it) out.groups.push_back(it.key());
  out.handoff = m.value("handoff", std::vector<std::string>{});
  out.backbone = m.value("backbone", std::vector<std::string>{});
  out.stage = m.value("stage", std::string{});
  return out;
}

void load_checkpoint(const std::filesystem::path& path, std::span<ParameterGroup* const> targets) {
  const auto json_path = with_ext(path, ".json");
  json m = read_json(json_path);
  const auto bin_path = json_path.parent_path() / m.at("data").get<std::string>();
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open checkpoint data " + bin_path.string());

  for (ParameterGroup* g : targets) {
    if (!m.at("groups").contains(g->name())) {
      throw MissingGroupError("checkpoint " + json_path.string() + " has no group '" + g->name() + "'");
    }
    const json& params = m["groups"][g->name()]["params"];
    for (auto& p : g->params()) {
      const json* entry = nullptr;
      for (const auto& e : params)
        if (e.at("name") == p.name) entry = &e;
      if (!entry) throw std::runtime_error("checkpoint group '" + g->name() + "' lacks parameter '" + p.name + "'");
      if (entry->at("shape").get<std::vector<int>>() != p.var.shape()) {
        throw std::runtime_error("shape mismatch for " + g->name() + "/" + p.name);
      }
      const auto offset = entry->at("offset").get<std::size_t>();
      auto values = p.var.mutable_value().values();
      bin.seekg(static_cast<std::streamoff>(offset * sizeof(double)));
      bin.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
      if (!bin) throw std::runtime_error("truncated checkpoint data " + bin_path.string());
    }
  }
}

}  // namespace idr
