#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "layermerge/graph_build.hpp"
#include "layermerge/image.hpp"
#include "layermerge/nn.hpp"
#include "layermerge/tensor.hpp"

namespace layermerge {

constexpr int kTypeDim = 32;   // d_t
constexpr int kGeomDim = 32;   // d_g
constexpr int kVisualDim = SmallCnn<float>::kOutDim;  // d_v = 128
constexpr int kCropSize = 64;
constexpr int kRoiGrid = 5;

enum class FusionMode { kLe, kVf, kLeVf };

inline FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "le") return FusionMode::kLe;
  if (s == "vf") return FusionMode::kVf;
  if (s == "le+vf") return FusionMode::kLeVf;
  throw std::invalid_argument("unknown fusion mode '" + s + "' (expected le|vf|le+vf)");
}

inline int fused_dim(FusionMode m) {
  switch (m) {
    case FusionMode::kLe: return kTypeDim + kGeomDim;
    case FusionMode::kVf: return kVisualDim;
    case FusionMode::kLeVf: return kTypeDim + kGeomDim + kVisualDim;
  }
  return 0;
}

// Learnable type/geometry embedding matrices.
template <typename S>
struct EmbeddingParams {
  Tensor<S> type_embed;  // |LayerType| × d_t
  Tensor<S> geom_embed;  // 4 × d_g

  EmbeddingParams() = default;
  EmbeddingParams(ParamSet<S>& ps, Rng& rng, const std::string& prefix = "embed.") {
    type_embed = ps.add(prefix + "type", {kLayerTypeCount, kTypeDim});
    geom_embed = ps.add(prefix + "geom", {4, kGeomDim});
    glorot_init(type_embed, rng, kLayerTypeCount, kTypeDim);
    glorot_init(geom_embed, rng, 4, kGeomDim);
  }
};

// Raw geometry 4-vector: window-relative origin and size, normalized by the
// window side. Overflowing layers may land slightly outside [0,1].
inline std::array<double, 4> raw_geometry(const Rect& rect, const Window& window) {
  Rect wr = window.rect();
  return {(rect.x - wr.x) / kWindowSize, (rect.y - wr.y) / kWindowSize,
          rect.w / kWindowSize, rect.h / kWindowSize};
}

template <typename S>
Tensor<S> encode_geometry(Tape<S>* tape, const Rect& rect, const Window& window,
                          const Tensor<S>& geom_embed) {
  auto raw = raw_geometry(rect, window);
  Tensor<S> r = Tensor<S>::from({1, 4}, {S(raw[0]), S(raw[1]), S(raw[2]), S(raw[3])});
  return matmul(tape, r, geom_embed);
}

// One-hot(type) · type_embed — i.e. the type's embedding row.
template <typename S>
Tensor<S> encode_type(Tape<S>* tape, LayerType type, const EmbeddingParams<S>& params) {
  return index_rows(tape, params.type_embed, {int(type)});
}

// Clips the layer rect to the window, then bilinear-resamples that patch
// region to out×out regardless of aspect ratio. Zero-area clips give the
// zero image.
inline FloatImage crop_resize(const FloatImage& patch, const Rect& rect, const Window& window,
                              int out = kCropSize) {
  Rect wr = window.rect();
  double x0 = std::max(rect.x, wr.x), y0 = std::max(rect.y, wr.y);
  double x1 = std::min(rect.x1(), wr.x1()), y1 = std::min(rect.y1(), wr.y1());
  Rect local{x0 - wr.x, y0 - wr.y, std::max(0.0, x1 - x0), std::max(0.0, y1 - y0)};
  return resample_region(patch, local, out, out);
}

namespace detail {

// One RoI bin partition edge set: floor/ceil integer bins over [lo, lo+len).
struct BinRange {
  int start, end;  // cell indices, [start, end)
  bool empty() const { return end <= start; }
};

inline BinRange roi_bin(double lo, double len, int g, int i, int limit) {
  double e0 = lo + len * i / g, e1 = lo + len * (i + 1) / g;
  int s = std::max(0, int(std::floor(e0)));
  int e = std::min(limit, int(std::ceil(e1)));
  return {s, e};
}

}  // namespace detail

// RoI max pooling over a C×Hf×Wf feature map. `rect` is given in map
// coordinates (callers project window rects by the map stride — see
// project_to_map). Each of the grid×grid bins takes a channel-wise max over
// its floor/ceil cell range; bins left empty by rounding or clipping borrow
// the nearest non-empty bin (euclidean bin distance, row-major tie-break).
// A rect entirely outside the map yields the zero tensor. The chosen cell
// indices feed the backward scatter, exactly like maxpool.
template <typename S>
Tensor<S> roi_maxpool(Tape<S>* tape, const Tensor<S>& fmap, const Rect& rect,
                      int grid = kRoiGrid) {
  if (fmap.rank() != 3) detail::shape_error("roi_maxpool", fmap.shape_str(), "{C,Hf,Wf}");
  int C = fmap.dim(0), Hf = fmap.dim(1), Wf = fmap.dim(2);
  Tensor<S> out({C, grid, grid});
  auto argmax = std::make_shared<std::vector<int>>(out.numel(), -1);

  std::vector<detail::BinRange> ybins, xbins;
  ybins.resize(size_t(grid));
  xbins.resize(size_t(grid));
  for (int i = 0; i < grid; ++i) {
    ybins[size_t(i)] = detail::roi_bin(rect.y, rect.h, grid, i, Hf);
    xbins[size_t(i)] = detail::roi_bin(rect.x, rect.w, grid, i, Wf);
  }

  std::vector<uint8_t> has(size_t(grid) * grid, 0);
  for (int gy = 0; gy < grid; ++gy)
    for (int gx = 0; gx < grid; ++gx) {
      const auto& yb = ybins[size_t(gy)];
      const auto& xb = xbins[size_t(gx)];
      if (yb.empty() || xb.empty()) continue;
      has[size_t(gy * grid + gx)] = 1;
      for (int c = 0; c < C; ++c) {
        const S* plane = fmap.data() + size_t(c) * Hf * Wf;
        int best = yb.start * Wf + xb.start;
        S bv = plane[best];
        for (int y = yb.start; y < yb.end; ++y)
          for (int x = xb.start; x < xb.end; ++x) {
            int i = y * Wf + x;
            if (plane[i] > bv) {
              bv = plane[i];
              best = i;
            }
          }
        size_t o = (size_t(c) * grid + gy) * grid + gx;
        out.data()[o] = bv;
        (*argmax)[o] = int(size_t(c) * Hf * Wf) + best;
      }
    }

  bool any = false;
  for (uint8_t h : has) any = any || h;
  if (any) {
    for (int gy = 0; gy < grid; ++gy)
      for (int gx = 0; gx < grid; ++gx) {
        if (has[size_t(gy * grid + gx)]) continue;
        int donor = -1;
        long best_d = std::numeric_limits<long>::max();
        for (int dy = 0; dy < grid; ++dy)
          for (int dx = 0; dx < grid; ++dx) {
            if (!has[size_t(dy * grid + dx)]) continue;
            long d = long(dy - gy) * (dy - gy) + long(dx - gx) * (dx - gx);
            if (d < best_d) {
              best_d = d;
              donor = dy * grid + dx;
            }
          }
        for (int c = 0; c < C; ++c) {
          size_t o = (size_t(c) * grid + gy) * grid + gx;
          size_t src = (size_t(c) * grid + donor / grid) * grid + donor % grid;
          out.data()[o] = out.data()[src];
          (*argmax)[o] = (*argmax)[src];
        }
      }
  }
  // no overlap at all: zero tensor, no gradient flow

  if (tape && fmap.requires_grad()) {
    out.set_requires_grad(true);
    Tensor<S> fc = fmap, oc = out;
    tape->record([fc, oc, argmax]() mutable {
      for (size_t i = 0; i < oc.numel(); ++i)
        if ((*argmax)[i] >= 0) fc.grad()[size_t((*argmax)[i])] += oc.grad()[i];
    });
  }
  return out;
}

// Window-local rect → feature-map coordinates (stride = window / map side).
inline Rect project_to_map(const Rect& rect, const Window& window, int map_h, int map_w) {
  Rect wr = window.rect();
  double sx = map_w / kWindowSize, sy = map_h / kWindowSize;
  return {(rect.x - wr.x) * sx, (rect.y - wr.y) * sy, rect.w * sx, rect.h * sy};
}

// Concatenation in (type, geometry, visual) order, restricted by mode.
// Components must be N×d matrices with matching N.
template <typename S>
Tensor<S> fuse(Tape<S>* tape, const Tensor<S>& type_v, const Tensor<S>& geom_v,
               const Tensor<S>& visual_v, FusionMode mode) {
  auto need = [](const Tensor<S>& t, const char* what) {
    if (t.numel() == 0)
      throw std::invalid_argument(std::string("fuse: missing ") + what + " for this mode");
  };
  switch (mode) {
    case FusionMode::kLe:
      need(type_v, "type embedding");
      need(geom_v, "geometry embedding");
      return concat_cols(tape, {type_v, geom_v});
    case FusionMode::kVf:
      need(visual_v, "visual features");
      return visual_v;
    case FusionMode::kLeVf:
      need(type_v, "type embedding");
      need(geom_v, "geometry embedding");
      need(visual_v, "visual features");
      return concat_cols(tape, {type_v, geom_v, visual_v});
  }
  throw std::logic_error("unreachable fusion mode");
}

// ---- per-graph constant inputs ----------------------------------------
// Everything the model consumes for one window graph, precomputed once at
// dataset load: one-hot types, raw geometry, and either per-node crops or
// the resized patch + projected rects for RoI pooling.

enum class VisualMethod { kCrop, kRoi };

inline VisualMethod visual_method_from_string(const std::string& s) {
  if (s == "crop") return VisualMethod::kCrop;
  if (s == "roi") return VisualMethod::kRoi;
  throw std::invalid_argument("unknown visual method '" + s + "' (expected crop|roi)");
}

template <typename S>
struct GraphInputs {
  int n_nodes = 0;
  Tensor<S> type_onehot;  // N × |LayerType|
  Tensor<S> geom_raw;     // N × 4
  Tensor<S> crops;        // N × 3 × 64 × 64 (crop mode, else empty)
  Tensor<S> patch;        // 1 × 3 × R × R   (roi mode, else empty)
  std::vector<Rect> map_rects;  // roi mode: node rects in map coordinates
};

template <typename S>
GraphInputs<S> convert_inputs(const GraphInputs<float>& in) {
  if constexpr (std::is_same_v<S, float>) {
    return in;
  } else {
    auto cast = [](const Tensor<float>& t) {
      Tensor<S> out(t.shape());
      for (size_t i = 0; i < t.numel(); ++i) out.data()[i] = S(t.values()[i]);
      return out;
    };
    GraphInputs<S> out;
    out.n_nodes = in.n_nodes;
    if (in.type_onehot.rank()) out.type_onehot = cast(in.type_onehot);
    if (in.geom_raw.rank()) out.geom_raw = cast(in.geom_raw);
    if (in.crops.rank()) out.crops = cast(in.crops);
    if (in.patch.rank()) out.patch = cast(in.patch);
    out.map_rects = in.map_rects;
    return out;
  }
}

// `patch` may be null when no visual features will be requested (LE mode).
template <typename S>
GraphInputs<S> make_graph_inputs(const Window& window, const ContainmentTree& tree,
                                 const FloatImage* patch, VisualMethod method) {
  GraphInputs<S> in;
  in.n_nodes = tree.size();
  in.type_onehot = Tensor<S>({in.n_nodes, kLayerTypeCount});
  in.geom_raw = Tensor<S>({in.n_nodes, 4});
  for (int i = 0; i < in.n_nodes; ++i) {
    const auto& node = tree.nodes[size_t(i)];
    LayerType t = node.member < 0 ? LayerType::kCanvas : window.members[size_t(node.member)].type;
    in.type_onehot.at(i, int(t)) = S(1);
    auto raw = raw_geometry(node.rect, window);
    for (int j = 0; j < 4; ++j) in.geom_raw.at(i, j) = S(raw[size_t(j)]);
  }
  if (!patch) return in;

  if (method == VisualMethod::kCrop) {
    in.crops = Tensor<S>({in.n_nodes, 3, kCropSize, kCropSize});
    for (int i = 0; i < in.n_nodes; ++i) {
      FloatImage c = crop_resize(*patch, tree.nodes[size_t(i)].rect, window);
      S* dstp = in.crops.data() + size_t(i) * c.data.size();
      for (size_t k = 0; k < c.data.size(); ++k) dstp[k] = S(c.data[k]);
    }
  } else {
    int R = SmallCnn<S>::kRoiInput;
    FloatImage resized = resize_bilinear(*patch, R, R);
    in.patch = Tensor<S>({1, 3, R, R});
    for (size_t k = 0; k < resized.data.size(); ++k) in.patch.data()[k] = S(resized.data[k]);
    int map_side = R / 8;  // three 2× pools
    for (const auto& node : tree.nodes)
      in.map_rects.push_back(project_to_map(node.rect, window, map_side, map_side));
  }
  return in;
}

// N×128 visual features for a graph, by either method.
template <typename S>
Tensor<S> visual_features(Tape<S>* tape, const GraphInputs<S>& in, const SmallCnn<S>& cnn) {
  if (cnn.mode == SmallCnn<S>::Mode::kCrop) {
    if (in.crops.numel() == 0)
      throw std::invalid_argument("visual_features: graph inputs carry no crops");
    return cnn.forward_crops(tape, in.crops);
  }
  if (in.patch.numel() == 0)
    throw std::invalid_argument("visual_features: graph inputs carry no patch");
  Tensor<S> fmap4 = cnn.backbone(tape, in.patch);
  Tensor<S> fmap = reshape(tape, fmap4, {fmap4.dim(1), fmap4.dim(2), fmap4.dim(3)});
  std::vector<Tensor<S>> pooled;
  for (const auto& r : in.map_rects) {
    Tensor<S> p = roi_maxpool(tape, fmap, r, kRoiGrid);
    pooled.push_back(reshape(tape, p, {1, p.dim(0) * kRoiGrid * kRoiGrid}));
  }
  return cnn.head(tape, stack_rows(tape, pooled));
}

}  // namespace layermerge
