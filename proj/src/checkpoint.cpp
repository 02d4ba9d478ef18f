#include "agis/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace agis {

namespace {
constexpr char kMagic[8] = {'A', 'G', 'I', 'S', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void save_checkpoint(const std::string& path, const nlohmann::json& meta,
                     const std::vector<std::pair<std::string, Tensor>>& tensors) {
  nlohmann::json header;
  header["meta"] = meta;
  header["tensors"] = nlohmann::json::array();
  for (const auto& [name, t] : tensors)
    header["tensors"].push_back({{"name", name}, {"shape", t.shape()}});
  std::string hs = header.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  f.write(kMagic, 8);
  std::uint32_t v = kVersion;
  f.write(reinterpret_cast<const char*>(&v), 4);
  std::uint64_t hlen = hs.size();
  f.write(reinterpret_cast<const char*>(&hlen), 8);
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, t] : tensors)
    f.write(reinterpret_cast<const char*>(t.raw()),
            static_cast<std::streamsize>(t.size() * sizeof(Scalar)));
  if (!f) throw std::runtime_error("write failed: " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  std::uint32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), 4);
  if (v != kVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(v));
  std::uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), 8);
  std::string hs(hlen, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(hlen));
  nlohmann::json header = nlohmann::json::parse(hs);

  CheckpointData out;
  out.meta = header.value("meta", nlohmann::json::object());
  for (const auto& entry : header["tensors"]) {
    std::string name = entry["name"];
    std::vector<int> shape = entry["shape"].get<std::vector<int>>();
    Tensor t(shape);
    f.read(reinterpret_cast<char*>(t.raw()),
           static_cast<std::streamsize>(t.size() * sizeof(Scalar)));
    if (!f) throw std::runtime_error("truncated checkpoint: " + path);
    out.tensors.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

nlohmann::json spec_to_json(const GeneratorSpec& s) {
  return {{"levels", s.levels},
          {"base_channels", s.base_channels},
          {"max_channels", s.max_channels},
          {"style_count", s.style_count},
          {"image_size", s.image_size},
          {"content_channels", s.content_channels}};
}

GeneratorSpec spec_from_json(const nlohmann::json& j) {
  GeneratorSpec s;
  s.levels = j.at("levels");
  s.base_channels = j.at("base_channels");
  s.max_channels = j.at("max_channels");
  s.style_count = j.at("style_count");
  s.image_size = j.at("image_size");
  s.content_channels = j.at("content_channels");
  return s;
}

void assign_params(ParamList& params, const CheckpointData& ckpt) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : ckpt.tensors) by_name[name] = &t;
  for (auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint is missing tensor: " + p.name);
    if (it->second->shape() != p.var.value().shape())
      throw std::runtime_error("checkpoint shape mismatch for " + p.name + ": " +
                               Tensor::shape_str(it->second->shape()) + " vs " +
                               Tensor::shape_str(p.var.value().shape()));
    p.var.mutable_value() = *it->second;
  }
}

}  // namespace agis
