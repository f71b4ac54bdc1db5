#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "layermerge/geometry.hpp"

namespace layermerge {

// Thrown for any malformed manifest, raster, or label file. The message
// carries the offending id or path.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// `canvas` is reserved for the virtual root node of a containment tree and
// never appears in a manifest. Unrecognized manifest strings map to
// `unknown`, never to an error.
enum class LayerType : uint8_t {
  kRectangle = 0,
  kOval,
  kPath,
  kText,
  kBitmap,
  kGroup,
  kSymbol,
  kCanvas,
  kUnknown,
};

constexpr int kLayerTypeCount = 9;

inline LayerType layer_type_from_string(const std::string& s) {
  if (s == "rectangle") return LayerType::kRectangle;
  if (s == "oval") return LayerType::kOval;
  if (s == "path") return LayerType::kPath;
  if (s == "text") return LayerType::kText;
  if (s == "bitmap") return LayerType::kBitmap;
  if (s == "group") return LayerType::kGroup;
  if (s == "symbol") return LayerType::kSymbol;
  if (s == "canvas") return LayerType::kCanvas;
  return LayerType::kUnknown;
}

inline const char* layer_type_to_string(LayerType t) {
  switch (t) {
    case LayerType::kRectangle: return "rectangle";
    case LayerType::kOval: return "oval";
    case LayerType::kPath: return "path";
    case LayerType::kText: return "text";
    case LayerType::kBitmap: return "bitmap";
    case LayerType::kGroup: return "group";
    case LayerType::kSymbol: return "symbol";
    case LayerType::kCanvas: return "canvas";
    case LayerType::kUnknown: return "unknown";
  }
  return "unknown";
}

// One leaf layer of a design draft. z is the dense pre-order index assigned
// from manifest order.
struct LayerNode {
  std::string id;
  std::string name;
  LayerType type = LayerType::kUnknown;
  Rect rect;
  int z = 0;
};

struct LayerLabel {
  bool fragmented = false;
  std::optional<std::string> group;
};

// A single screen's design draft: flat leaf-layer list in pre-order plus
// optional per-layer supervision.
struct Artboard {
  std::string id;
  double width = 0, height = 0;
  std::vector<LayerNode> layers;
  std::map<std::string, LayerLabel> labels;

  Rect rect() const { return {0, 0, width, height}; }

  const LayerNode* find(const std::string& layer_id) const {
    for (const auto& l : layers)
      if (l.id == layer_id) return &l;
    return nullptr;
  }
};

// 8-bit RGB raster, row-major.
struct Screenshot {
  int width = 0, height = 0;
  std::vector<uint8_t> pixels;  // width*height*3

  uint8_t at(int x, int y, int c) const { return pixels[size_t(y * width + x) * 3 + c]; }
  void set(int x, int y, uint8_t r, uint8_t g, uint8_t b) {
    size_t o = size_t(y * width + x) * 3;
    pixels[o] = r;
    pixels[o + 1] = g;
    pixels[o + 2] = b;
  }
};

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& j, const char* key,
                                           const std::string& where) {
  auto it = j.find(key);
  if (it == j.end())
    throw ParseError("missing required field '" + std::string(key) + "' in " + where);
  return *it;
}

inline double require_number(const nlohmann::json& j, const char* key, const std::string& where) {
  const auto& v = require_field(j, key, where);
  if (!v.is_number()) throw ParseError("field '" + std::string(key) + "' in " + where + " is not a number");
  return v.get<double>();
}

inline std::string require_string(const nlohmann::json& j, const char* key,
                                  const std::string& where) {
  const auto& v = require_field(j, key, where);
  if (!v.is_string()) throw ParseError("field '" + std::string(key) + "' in " + where + " is not a string");
  return v.get<std::string>();
}

}  // namespace detail

// Parses and validates an artboard manifest. Layer order equals manifest
// order; z is assigned from that order. All label invariants are enforced
// here, not downstream.
inline Artboard parse_artboard(const std::string& manifest_bytes) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(manifest_bytes);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("manifest root is not an object");

  Artboard ab;
  ab.id = detail::require_string(j, "artboard_id", "manifest");
  ab.width = detail::require_number(j, "width", "manifest");
  ab.height = detail::require_number(j, "height", "manifest");
  if (ab.width < 0 || ab.height < 0)
    throw ParseError("artboard '" + ab.id + "' has negative dimensions");

  const auto& layers = detail::require_field(j, "layers", "manifest");
  if (!layers.is_array()) throw ParseError("'layers' is not an array");

  std::unordered_set<std::string> seen;
  int z = 0;
  for (const auto& lj : layers) {
    std::string where = "layers[" + std::to_string(z) + "]";
    LayerNode l;
    l.id = detail::require_string(lj, "id", where);
    l.name = detail::require_string(lj, "name", where);
    std::string type_str = detail::require_string(lj, "type", where);
    l.type = layer_type_from_string(type_str);
    if (l.type == LayerType::kCanvas)
      throw ParseError("layer '" + l.id + "' uses reserved type 'canvas'");
    l.rect = {detail::require_number(lj, "x", where), detail::require_number(lj, "y", where),
              detail::require_number(lj, "w", where), detail::require_number(lj, "h", where)};
    if (l.rect.w < 0 || l.rect.h < 0)
      throw ParseError("layer '" + l.id + "' has negative size");
    if (!l.rect.intersects(ab.rect()))
      throw ParseError("layer '" + l.id + "' does not intersect the artboard");
    if (!seen.insert(l.id).second) throw ParseError("duplicate layer id '" + l.id + "'");
    l.z = z++;
    ab.layers.push_back(std::move(l));
  }

  if (auto it = j.find("labels"); it != j.end()) {
    if (!it->is_object()) throw ParseError("'labels' is not an object");
    for (const auto& [id, lv] : it->items()) {
      if (!seen.count(id)) throw ParseError("unknown label id '" + id + "'");
      LayerLabel lab;
      const auto& fv = detail::require_field(lv, "fragmented", "labels['" + id + "']");
      if (!fv.is_boolean()) throw ParseError("labels['" + id + "'].fragmented is not a bool");
      lab.fragmented = fv.get<bool>();
      if (auto g = lv.find("group"); g != lv.end() && !g->is_null()) {
        if (!g->is_string()) throw ParseError("labels['" + id + "'].group is not a string or null");
        lab.group = g->get<std::string>();
      }
      ab.labels.emplace(id, std::move(lab));
    }
    // Group invariants: >= 2 members, all fragmented.
    std::map<std::string, int> group_size;
    for (const auto& [id, lab] : ab.labels) {
      if (lab.group) {
        if (!lab.fragmented)
          throw ParseError("label '" + id + "' is in group '" + *lab.group +
                           "' but not fragmented");
        group_size[*lab.group]++;
      }
    }
    for (const auto& [g, n] : group_size)
      if (n < 2) throw ParseError("singleton merge group '" + g + "'");
  }
  return ab;
}

// Inverse of parse_artboard on the manifest schema; parse(serialize(a)) == a.
inline std::string serialize_artboard(const Artboard& ab) {
  nlohmann::json j;
  j["artboard_id"] = ab.id;
  j["width"] = ab.width;
  j["height"] = ab.height;
  auto layers = nlohmann::json::array();
  for (const auto& l : ab.layers) {
    layers.push_back({{"id", l.id},
                      {"name", l.name},
                      {"type", layer_type_to_string(l.type)},
                      {"x", l.rect.x},
                      {"y", l.rect.y},
                      {"w", l.rect.w},
                      {"h", l.rect.h}});
  }
  j["layers"] = std::move(layers);
  if (!ab.labels.empty()) {
    nlohmann::json labels = nlohmann::json::object();
    for (const auto& [id, lab] : ab.labels) {
      nlohmann::json lj;
      lj["fragmented"] = lab.fragmented;
      lj["group"] = lab.group ? nlohmann::json(*lab.group) : nlohmann::json(nullptr);
      labels[id] = std::move(lj);
    }
    j["labels"] = std::move(labels);
  }
  return j.dump(2) + "\n";
}

namespace detail {

// PPM token reader: skips whitespace and '#' comments.
inline std::string ppm_token(const std::string& bytes, size_t& pos) {
  while (pos < bytes.size()) {
    char c = bytes[pos];
    if (c == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      ++pos;
    } else {
      break;
    }
  }
  size_t start = pos;
  while (pos < bytes.size() && !isspace(uint8_t(bytes[pos]))) ++pos;
  if (start == pos) throw ParseError("truncated PPM header");
  return bytes.substr(start, pos - start);
}

inline int ppm_int(const std::string& bytes, size_t& pos, const char* what) {
  std::string tok = ppm_token(bytes, pos);
  try {
    size_t used = 0;
    int v = std::stoi(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError(std::string("bad PPM ") + what + " '" + tok + "'");
  }
}

}  // namespace detail

// Decodes a binary PPM (P6, maxval 255) raster whose dimensions must match
// the artboard (rounded design px).
inline Screenshot load_screenshot(const std::string& ppm_bytes, const Artboard& ab) {
  size_t pos = 0;
  std::string magic = detail::ppm_token(ppm_bytes, pos);
  if (magic != "P6") throw ParseError("not a P6 PPM (magic '" + magic + "')");
  Screenshot s;
  s.width = detail::ppm_int(ppm_bytes, pos, "width");
  s.height = detail::ppm_int(ppm_bytes, pos, "height");
  int maxval = detail::ppm_int(ppm_bytes, pos, "maxval");
  if (s.width <= 0 || s.height <= 0) throw ParseError("non-positive PPM dimensions");
  if (maxval != 255) throw ParseError("PPM maxval " + std::to_string(maxval) + ", expected 255");
  if (pos >= ppm_bytes.size() || !isspace(uint8_t(ppm_bytes[pos])))
    throw ParseError("missing separator after PPM maxval");
  ++pos;

  int exp_w = int(std::lround(ab.width));
  int exp_h = int(std::lround(ab.height));
  if (s.width != exp_w || s.height != exp_h)
    throw ParseError("screenshot " + std::to_string(s.width) + "x" + std::to_string(s.height) +
                     " does not match artboard '" + ab.id + "' (" + std::to_string(exp_w) + "x" +
                     std::to_string(exp_h) + ")");

  size_t need = size_t(s.width) * size_t(s.height) * 3;
  if (ppm_bytes.size() - pos < need)
    throw ParseError("truncated PPM pixel data: have " + std::to_string(ppm_bytes.size() - pos) +
                     " bytes, need " + std::to_string(need));
  s.pixels.assign(ppm_bytes.begin() + long(pos), ppm_bytes.begin() + long(pos + need));
  return s;
}

inline std::string encode_ppm(const Screenshot& s) {
  std::string out = "P6\n" + std::to_string(s.width) + " " + std::to_string(s.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(s.pixels.data()), s.pixels.size());
  return out;
}

}  // namespace layermerge
