#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "layermerge/dataset.hpp"
#include "layermerge/gnn.hpp"
#include "layermerge/io_util.hpp"

namespace layermerge {

// Checkpoint file: 8-byte magic, little-endian u32 header length, JSON
// header (architecture + seed + tensor manifest with byte offsets), then
// raw little-endian f32 blobs in manifest order. Round-trips bit-exactly.
constexpr char kCheckpointMagic[8] = {'L', 'M', 'C', 'K', 'P', 'T', '1', '\n'};

namespace detail {

inline void put_u32_le(std::string& out, uint32_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char((v >> 8) & 0xff));
  out.push_back(char((v >> 16) & 0xff));
  out.push_back(char((v >> 24) & 0xff));
}

inline uint32_t get_u32_le(const unsigned char* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}

}  // namespace detail

inline std::string serialize_checkpoint(const Model<float>& model) {
  nlohmann::json manifest = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& e : model.params) {
    manifest.push_back({{"name", e.name}, {"shape", e.tensor.shape()}, {"offset", offset}});
    offset += e.tensor.numel() * 4;
  }
  nlohmann::json header{{"model", to_string(model.cfg.kind)},
                        {"visual", to_string(model.cfg.visual)},
                        {"features", to_string(model.cfg.fusion)},
                        {"seed", model.cfg.seed},
                        {"tensors", manifest}};
  std::string hs = header.dump();

  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_u32_le(out, uint32_t(hs.size()));
  out += hs;
  out.reserve(out.size() + offset);
  for (const auto& e : model.params)
    for (float v : e.tensor.values()) {
      uint32_t bits;
      std::memcpy(&bits, &v, 4);
      detail::put_u32_le(out, bits);
    }
  return out;
}

inline void save_checkpoint(const std::filesystem::path& path, const Model<float>& model) {
  atomic_write_file(path, serialize_checkpoint(model));
}

inline Model<float> parse_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof kCheckpointMagic + 4 ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0)
    throw std::runtime_error("not a layermerge checkpoint (bad magic)");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  uint32_t hlen = detail::get_u32_le(p + sizeof kCheckpointMagic);
  size_t hstart = sizeof kCheckpointMagic + 4;
  if (bytes.size() < hstart + hlen) throw std::runtime_error("truncated checkpoint header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(hstart, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed checkpoint header: ") + e.what());
  }

  ModelConfig cfg;
  cfg.kind = model_kind_from_string(header.at("model").get<std::string>());
  cfg.visual = visual_method_from_string(header.at("visual").get<std::string>());
  cfg.fusion = fusion_mode_from_string(header.at("features").get<std::string>());
  cfg.seed = header.at("seed").get<uint64_t>();
  Model<float> model(cfg);

  const auto& manifest = header.at("tensors");
  if (manifest.size() != model.params.size())
    throw std::runtime_error("incompatible checkpoint dims: " + std::to_string(manifest.size()) +
                             " tensors in file, architecture has " +
                             std::to_string(model.params.size()));
  size_t blob_start = hstart + hlen;
  size_t i = 0;
  for (auto& e : model.params) {
    const auto& m = manifest[i++];
    if (m.at("name").get<std::string>() != e.name)
      throw std::runtime_error("incompatible checkpoint dims: parameter '" +
                               m.at("name").get<std::string>() + "' where '" + e.name +
                               "' was expected");
    std::vector<int> shape = m.at("shape").get<std::vector<int>>();
    if (shape != e.tensor.shape())
      throw std::runtime_error("incompatible checkpoint dims for '" + e.name + "': file has " +
                               Tensor<float>::shape_str(shape) + ", architecture needs " +
                               e.tensor.shape_str());
    size_t off = blob_start + m.at("offset").get<uint64_t>();
    size_t need = e.tensor.numel() * 4;
    if (off + need > bytes.size()) throw std::runtime_error("truncated checkpoint blob");
    const auto* q = reinterpret_cast<const unsigned char*>(bytes.data()) + off;
    for (size_t k = 0; k < e.tensor.numel(); ++k) {
      uint32_t bits = detail::get_u32_le(q + k * 4);
      float v;
      std::memcpy(&v, &bits, 4);
      e.tensor.values()[k] = v;
    }
  }
  return model;
}

inline Model<float> load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file(path));
}

}  // namespace layermerge
