#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "layermerge/io_util.hpp"
#include "layermerge/layer_model.hpp"
#include "layermerge/rng.hpp"

namespace layermerge {

// Synthetic artboards: a 3x3 grid of 250px cells on a 750x750 canvas, each
// cell holding one fragmented pattern (icon / decoration / background),
// normal layers, or a card decoy. Cell margins keep distinct patterns farther
// apart than the merge threshold, so ground-truth groups stay separable.
struct GenConfig {
  int n_artboards = 300;
  uint64_t seed = 1;
  double icon_ratio = 0.45;
  double decoration_ratio = 0.30;
  double background_ratio = 0.25;
  int min_layers = 14;
  int max_layers = 22;
  double noise = 1.0;  // jitter scale for positions and colors
};

inline void validate(const GenConfig& c) {
  if (c.n_artboards <= 0) throw std::invalid_argument("gen: n_artboards must be positive");
  double sum = c.icon_ratio + c.decoration_ratio + c.background_ratio;
  if (c.icon_ratio < 0 || c.decoration_ratio < 0 || c.background_ratio < 0 ||
      std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("gen: pattern mix ratios must be non-negative and sum to 1");
  if (c.min_layers <= 0 || c.max_layers < c.min_layers)
    throw std::invalid_argument("gen: empty layers-per-artboard range");
  if (c.noise < 0) throw std::invalid_argument("gen: noise must be non-negative");
}

struct GenSummary {
  int artboards = 0;
  long long layers = 0;
  long long fragmented = 0;
  long long groups = 0;
  double fragmented_fraction() const { return layers ? double(fragmented) / double(layers) : 0; }
};

namespace detail {

struct Rgb {
  int r, g, b;
};

inline std::string rgb_name(const std::string& tag, Rgb c) {
  return tag + "#rgb(" + std::to_string(c.r) + "," + std::to_string(c.g) + "," +
         std::to_string(c.b) + ")";
}

inline int clamp255(int v) { return v < 0 ? 0 : (v > 255 ? 255 : v); }

// one high, one low channel: saturated and clearly visible on white
inline Rgb saturated_color(Rng& rng) {
  int vals[3] = {int(rng.uniform_int(150, 235)), int(rng.uniform_int(20, 90)),
                 int(rng.uniform_int(40, 200))};
  int order = int(rng.uniform_int(0, 5));
  static const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                  {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  return {vals[perms[order][0]], vals[perms[order][1]], vals[perms[order][2]]};
}

// barely off-white: nearly invisible in the raster but present in geometry
inline Rgb bland_color(Rng& rng) {
  int v = int(rng.uniform_int(235, 250));
  return {v, v, v};
}

inline Rgb tint(Rgb c) { return {255 - (255 - c.r) / 4, 255 - (255 - c.g) / 4, 255 - (255 - c.b) / 4}; }

inline Rgb jitter_color(Rng& rng, Rgb c, double noise) {
  auto j = [&](int v) { return clamp255(v + int(std::lround(rng.normal() * 8.0 * noise))); };
  return {j(c.r), j(c.g), j(c.b)};
}

struct ArtboardBuilder {
  Artboard& ab;
  int z = 0;
  int group_count = 0;
  long long fragmented = 0;

  std::string add(const std::string& tag, Rgb color, LayerType type, Rect rect,
                  const std::optional<std::string>& group, bool positive) {
    LayerNode l;
    l.id = "L" + std::to_string(z);
    l.name = rgb_name(tag, color);
    l.type = type;
    l.rect = rect;
    l.z = z++;
    ab.layers.push_back(l);
    ab.labels[l.id] = LayerLabel{positive, group};
    if (positive) ++fragmented;
    return l.id;
  }

  std::string new_group() { return "G" + std::to_string(group_count++); }
};

constexpr int kCell = 250;
constexpr int kCellMargin = 30;  // keeps cross-cell center distances > tau

// usable placement range inside a cell, [lo, hi] for a span of `size`
inline int place(Rng& rng, int cell_origin, int size) {
  int lo = cell_origin + kCellMargin;
  int hi = cell_origin + kCell - kCellMargin - size;
  return int(rng.uniform_int(lo, std::max(lo, hi)));
}

inline LayerType small_shape_type(Rng& rng) {
  switch (rng.uniform_int(0, 2)) {
    case 0: return LayerType::kOval;
    case 1: return LayerType::kPath;
    default: return LayerType::kRectangle;
  }
}

// 3-8 small overlapping shapes inside a container layer; the whole pattern,
// container included, is one fragmented group.
inline void gen_icon(ArtboardBuilder& b, Rng& rng, int cx, int cy, double noise) {
  int sw = int(rng.uniform_int(90, 150)), sh = int(rng.uniform_int(90, 150));
  int bx = place(rng, cx, sw), by = place(rng, cy, sh);
  Rgb base = saturated_color(rng);
  std::string group = b.new_group();
  b.add("icon-bg", tint(base), LayerType::kRectangle, {double(bx), double(by), double(sw), double(sh)},
        group, true);
  int n = int(rng.uniform_int(3, 8));
  for (int i = 0; i < n; ++i) {
    int s = int(rng.uniform_int(16, std::min(50, std::min(sw, sh) - 8)));
    int x = int(rng.uniform_int(bx + 2, bx + sw - 2 - s));
    int y = int(rng.uniform_int(by + 2, by + sh - 2 - s));
    b.add("icon-shape", jitter_color(rng, base, noise), small_shape_type(rng),
          {double(x), double(y), double(s), double(s)}, group, true);
  }
}

// 2-5 shapes ranged in a straight line, no container; consecutive centers
// sit closer than the merge threshold. Sometimes rendered nearly white so
// only the layout gives them away.
inline void gen_decoration(ArtboardBuilder& b, Rng& rng, int cx, int cy, double noise) {
  int n = int(rng.uniform_int(2, 5));
  int s = int(rng.uniform_int(12, 28));
  int gap = int(rng.uniform_int(4, 10));
  bool horizontal = rng.chance(0.5);
  int len = n * s + (n - 1) * gap;
  int x = horizontal ? place(rng, cx, len) : place(rng, cx, s);
  int y = horizontal ? place(rng, cy, s) : place(rng, cy, len);
  LayerType type = rng.chance(0.3) ? LayerType::kText : small_shape_type(rng);
  Rgb base = rng.chance(0.7) ? bland_color(rng) : saturated_color(rng);
  std::string group = b.new_group();
  for (int i = 0; i < n; ++i) {
    b.add("deco", jitter_color(rng, base, noise * 0.3), type,
          {double(x + (horizontal ? i * (s + gap) : 0)),
           double(y + (horizontal ? 0 : i * (s + gap))), double(s), double(s)},
          group, true);
  }
}

// one large layer plus scattered tiny layers contained in it
inline void gen_background(ArtboardBuilder& b, Rng& rng, int cx, int cy, double noise) {
  int big = int(rng.uniform_int(150, 185));
  int bx = place(rng, cx, big), by = place(rng, cy, big);
  Rgb base = saturated_color(rng);
  std::string group = b.new_group();
  b.add("bg", tint(base), LayerType::kRectangle, {double(bx), double(by), double(big), double(big)},
        group, true);
  int n = int(rng.uniform_int(7, 14));
  for (int i = 0; i < n; ++i) {
    int s = int(rng.uniform_int(5, 12));
    int x = int(rng.uniform_int(bx + 2, bx + big - 2 - s));
    int y = int(rng.uniform_int(by + 2, by + big - 2 - s));
    Rgb c = rng.chance(0.3) ? bland_color(rng) : jitter_color(rng, base, noise);
    b.add("bg-dot", c, small_shape_type(rng), {double(x), double(y), double(s), double(s)}, group,
          true);
  }
}

// solitary layer, labeled normal: a medium saturated block, or a small bland
// speck matching a decoration member's size/type/color family exactly — only
// the absence of a chain of peers around it tells the two apart.
inline void gen_normal(ArtboardBuilder& b, Rng& rng, int cx, int cy) {
  if (rng.chance(0.45)) {
    int s = int(rng.uniform_int(12, 28));
    int x = place(rng, cx, s), y = place(rng, cy, s);
    LayerType type = rng.chance(0.3) ? LayerType::kText : small_shape_type(rng);
    b.add("speck", bland_color(rng), type, {double(x), double(y), double(s), double(s)},
          std::nullopt, false);
    return;
  }
  int w = int(rng.uniform_int(40, 140)), h = int(rng.uniform_int(40, 140));
  int x = place(rng, cx, w), y = place(rng, cy, h);
  LayerType type;
  switch (rng.uniform_int(0, 2)) {
    case 0: type = LayerType::kRectangle; break;
    case 1: type = LayerType::kText; break;
    default: type = LayerType::kBitmap; break;
  }
  b.add("normal", saturated_color(rng), type, {double(x), double(y), double(w), double(h)},
        std::nullopt, false);
}

}  // namespace detail

inline Artboard gen_artboard(const GenConfig& cfg, int index) {
  validate(cfg);
  Rng rng = Rng(cfg.seed).fork(uint64_t(index));
  Artboard ab;
  char stem[16];
  std::snprintf(stem, sizeof stem, "ab%04d", index);
  ab.id = stem;
  ab.width = 750;
  ab.height = 750;
  detail::ArtboardBuilder b{ab};

  if (rng.chance(0.5))
    b.add("backdrop", {250, 250, 252}, LayerType::kRectangle, {0, 0, 750, 750}, std::nullopt,
          false);

  std::vector<int> cells(9);
  for (int i = 0; i < 9; ++i) cells[size_t(i)] = i;
  rng.shuffle(cells);
  int target = int(rng.uniform_int(cfg.min_layers, cfg.max_layers));
  int frag_patterns = 1 + (rng.chance(0.2) ? 1 : 0);

  for (int cell : cells) {
    if (int(ab.layers.size()) >= target && frag_patterns == 0) break;
    int cx = (cell % 3) * detail::kCell, cy = (cell / 3) * detail::kCell;
    if (frag_patterns > 0) {
      --frag_patterns;
      double u = rng.uniform();
      if (u < cfg.icon_ratio)
        detail::gen_icon(b, rng, cx, cy, cfg.noise);
      else if (u < cfg.icon_ratio + cfg.decoration_ratio)
        detail::gen_decoration(b, rng, cx, cy, cfg.noise);
      else
        detail::gen_background(b, rng, cx, cy, cfg.noise);
    } else if (rng.chance(0.15)) {
      detail::gen_card(b, rng, cx, cy, cfg.noise);
    } else {
      int n = int(rng.uniform_int(1, 2));
      for (int i = 0; i < n; ++i) detail::gen_normal(b, rng, cx, cy);
    }
  }
  return ab;
}

// Painter's-algorithm raster: flat fills, ellipse/diamond shapes, hatch
// lines for text, checker for bitmaps; white background. Fill colors ride
// in the layer names, so the manifest schema stays type+geometry only.
inline Screenshot render(const Artboard& ab) {
  Screenshot shot;
  shot.width = int(std::lround(ab.width));
  shot.height = int(std::lround(ab.height));
  shot.pixels.assign(size_t(3) * shot.width * shot.height, 255);

  for (const auto& l : ab.layers) {  // layers are z-ascending
    detail::Rgb fill{128, 128, 128};
    if (auto pos = l.name.find("#rgb("); pos != std::string::npos) {
      int r, g, bl;
      if (std::sscanf(l.name.c_str() + pos, "#rgb(%d,%d,%d)", &r, &g, &bl) == 3)
        fill = {detail::clamp255(r), detail::clamp255(g), detail::clamp255(bl)};
    }
    detail::Rgb light{255 - (255 - fill.r) / 3, 255 - (255 - fill.g) / 3,
                      255 - (255 - fill.b) / 3};
    int x0 = std::max(0, int(std::floor(l.rect.x)));
    int y0 = std::max(0, int(std::floor(l.rect.y)));
    int x1 = std::min(shot.width, int(std::ceil(l.rect.x1())));
    int y1 = std::min(shot.height, int(std::ceil(l.rect.y1())));
    double cx = l.rect.cx(), cy2 = l.rect.cy();
    double rx = std::max(0.5, l.rect.w / 2), ry = std::max(0.5, l.rect.h / 2);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) {
        double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy2) / ry;
        detail::Rgb c = fill;
        bool covered = true;
        switch (l.type) {
          case LayerType::kOval:
            covered = dx * dx + dy * dy <= 1.0;
            break;
          case LayerType::kPath:
            covered = std::abs(dx) + std::abs(dy) <= 1.0;
            break;
          case LayerType::kText:
            covered = (y - y0) % 4 < 2;  // hatch rows stand in for glyphs
            break;
          case LayerType::kBitmap:
            if (((x - x0) / 8 + (y - y0) / 8) % 2) c = light;
            break;
          default:
            break;  // rectangle-like: full fill
        }
        if (!covered) continue;
        shot.set(x, y, uint8_t(c.r), uint8_t(c.g), uint8_t(c.b));
      }
  }
  return shot;
}

inline GenSummary gen_dataset(const GenConfig& cfg, const std::filesystem::path& out_dir) {
  validate(cfg);
  std::filesystem::create_directories(out_dir);
  GenSummary sum;
  nlohmann::json stems = nlohmann::json::array();
  for (int i = 0; i < cfg.n_artboards; ++i) {
    Artboard ab = gen_artboard(cfg, i);
    Screenshot shot = render(ab);
    atomic_write_file(out_dir / (ab.id + ".json"), serialize_artboard(ab));
    atomic_write_file(out_dir / (ab.id + ".ppm"), encode_ppm(shot));
    stems.push_back(ab.id);
    ++sum.artboards;
    sum.layers += long(ab.layers.size());
    std::set<std::string> groups;
    for (const auto& [id, lab] : ab.labels) {
      if (lab.fragmented) ++sum.fragmented;
      if (lab.group) groups.insert(*lab.group);
    }
    sum.groups += long(groups.size());
  }
  nlohmann::json index{{"artboards", stems}, {"seed", cfg.seed}};
  atomic_write_file(out_dir / "dataset.json", index.dump(2) + "\n");
  return sum;
}

}  // namespace layermerge
