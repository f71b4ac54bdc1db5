#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "layermerge/geometry.hpp"
#include "layermerge/image.hpp"
#include "layermerge/layer_model.hpp"

namespace layermerge {

constexpr double kWindowSize = 750.0;

// A member layer of a window, with its rect already in scaled coordinates
// (width pinned to 750).
struct WindowLayer {
  std::string id;
  std::string name;
  LayerType type = LayerType::kUnknown;
  Rect rect;  // scaled, absolute (window origin not subtracted)
  int z = 0;
};

// One 750x750 strip of a scaled artboard.
struct Window {
  int index = 0;
  Rect rect() const { return {0, kWindowSize * index, kWindowSize, kWindowSize}; }
  std::vector<WindowLayer> members;  // in z order
  FloatImage patch;                  // 3x750x750; empty when built without pixels
};

struct WindowedArtboard {
  double scale = 1.0;
  double scaled_height = 0;  // before padding
  std::vector<Window> windows;
};

// Scales the artboard uniformly so its width is exactly 750, pads the
// height with black rows up to the next multiple of 750, and cuts it into
// consecutive 750-tall windows. Every layer is assigned to exactly one
// window by its scaled center (boundary centers y = 750k go to window k;
// out-of-range centers clamp to the nearest window).
inline WindowedArtboard scale_and_window(const Artboard& ab, const Screenshot* shot) {
  if (!(ab.width > 0)) throw std::invalid_argument("artboard width must be positive");
  WindowedArtboard out;
  double s = kWindowSize / ab.width;
  out.scale = s;
  out.scaled_height = ab.height * s;
  int n_windows = std::max(1, int(std::ceil(out.scaled_height / kWindowSize)));
  out.windows.resize(n_windows);
  for (int i = 0; i < n_windows; ++i) out.windows[i].index = i;

  for (const auto& l : ab.layers) {
    Rect r = l.rect.scaled(s);
    int idx = std::clamp(int(std::floor(r.cy() / kWindowSize)), 0, n_windows - 1);
    out.windows[idx].members.push_back({l.id, l.name, l.type, r, l.z});
  }

  if (shot) {
    FloatImage full = to_float_image(*shot);
    int scaled_h = std::max(1, int(std::lround(out.scaled_height)));
    FloatImage scaled = resize_bilinear(full, scaled_h, int(kWindowSize));
    const int W = int(kWindowSize);
    for (auto& win : out.windows) {
      win.patch = FloatImage(3, W, W);
      int y0 = win.index * W;
      int rows = std::clamp(scaled_h - y0, 0, W);
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < rows; ++y)
          std::copy_n(&scaled.at(c, y0 + y, 0), W, &win.patch.at(c, y, 0));
      // rows below scaled_h stay black
    }
  }
  return out;
}

inline WindowedArtboard scale_and_window(const Artboard& ab, const Screenshot& shot) {
  return scale_and_window(ab, &shot);
}

// Rebuilt hierarchy over a window's members: parent(A) is the smallest-area
// member whose rect contains A's (boundary-inclusive), or the virtual root
// if none. Ties are ordered (area asc, z desc), so among identical rects
// the earlier-z layer ends up the parent of the later one.
struct ContainmentTree {
  struct Node {
    int member = -1;  // index into Window::members; -1 for the root
    Rect rect;
    int z = -1;
    int parent = -1;
    std::vector<int> children;
  };
  std::vector<Node> nodes;  // nodes[0] is the root

  int size() const { return int(nodes.size()); }
};

namespace detail {

// True when `p` may act as parent of a node with rect `r` and order `z`:
// containment holds and identical rects only parent later-z layers.
inline bool parent_candidate(const Rect& pr, int pz, const Rect& r, int z) {
  return pr.contains(r) && !(pr == r && pz > z);
}

// Candidate ordering: smaller area wins, equal areas go to the later z.
inline bool candidate_better(const Rect& a, int az, const Rect& b, int bz) {
  if (a.area() != b.area()) return a.area() < b.area();
  return az > bz;
}

}  // namespace detail

// Online insertion: each arriving layer attaches under the best existing
// container and then reclaims any node it contains better than that node's
// current parent. The minimal-parent invariant holds after every step, so
// the final tree is independent of insertion order.
inline ContainmentTree build_containment_tree(const Window& window) {
  ContainmentTree tree;
  ContainmentTree::Node root;
  root.rect = window.rect();
  tree.nodes.push_back(root);

  for (int m = 0; m < int(window.members.size()); ++m) {
    const auto& lay = window.members[m];
    int self = tree.size();

    int best = 0;
    for (int i = 1; i < tree.size(); ++i) {
      const auto& n = tree.nodes[i];
      if (!detail::parent_candidate(n.rect, n.z, lay.rect, lay.z)) continue;
      if (best == 0 || detail::candidate_better(n.rect, n.z, tree.nodes[best].rect,
                                                tree.nodes[best].z))
        best = i;
    }

    ContainmentTree::Node node;
    node.member = m;
    node.rect = lay.rect;
    node.z = lay.z;
    node.parent = best;
    tree.nodes.push_back(node);
    tree.nodes[best].children.push_back(self);

    // Reclaim: any existing node for which the new layer is a strictly
    // better parent moves (with its subtree) under the new node.
    for (int i = 1; i < self; ++i) {
      auto& n = tree.nodes[i];
      if (!detail::parent_candidate(lay.rect, lay.z, n.rect, n.z)) continue;
      const auto& cur = tree.nodes[n.parent];
      if (n.parent != 0 && !detail::candidate_better(lay.rect, lay.z, cur.rect, cur.z)) continue;
      auto& sib = tree.nodes[n.parent].children;
      sib.erase(std::find(sib.begin(), sib.end(), i));
      n.parent = self;
      tree.nodes[self].children.push_back(i);
    }
  }
  return tree;
}

enum class ArcKind : uint8_t { kTree, kSibling, kSelf };

struct Arc {
  int src = 0, dst = 0;
  ArcKind kind = ArcKind::kTree;
};

// Containment-tree arcs (directed parent->child) + complete sibling cliques
// (both directions) + one self-loop per node. Node indices coincide with
// ContainmentTree node indices (0 = root).
struct LayoutGraph {
  int n_nodes = 0;
  std::vector<Arc> arcs;

  std::vector<std::vector<int>> in_neighbors() const {
    std::vector<std::vector<int>> nbr(n_nodes);
    for (const auto& a : arcs) nbr[a.dst].push_back(a.src);
    return nbr;
  }
};

// Arc list flattened to parallel src/dst arrays — the form the segment ops
// consume. dst[i] is the attending (destination) node of arc i.
struct GraphArcs {
  std::vector<int> src, dst;
  int n_nodes = 0;
};

inline GraphArcs flatten_arcs(const LayoutGraph& g) {
  GraphArcs a;
  a.n_nodes = g.n_nodes;
  a.src.reserve(g.arcs.size());
  a.dst.reserve(g.arcs.size());
  for (const auto& arc : g.arcs) {
    a.src.push_back(arc.src);
    a.dst.push_back(arc.dst);
  }
  return a;
}

inline LayoutGraph build_graph(const ContainmentTree& tree) {
  LayoutGraph g;
  g.n_nodes = tree.size();
  for (int i = 0; i < tree.size(); ++i) {
    for (int c : tree.nodes[i].children) g.arcs.push_back({i, c, ArcKind::kTree});
    const auto& sibs = tree.nodes[i].children;
    for (size_t a = 0; a < sibs.size(); ++a)
      for (size_t b = 0; b < sibs.size(); ++b)
        if (a != b) g.arcs.push_back({sibs[a], sibs[b], ArcKind::kSibling});
  }
  for (int i = 0; i < tree.size(); ++i) g.arcs.push_back({i, i, ArcKind::kSelf});
  return g;
}

// Debug dump consumed by tests and the renderer.
inline nlohmann::json graph_to_json(const LayoutGraph& g, const ContainmentTree& tree,
                                    const Window& window) {
  nlohmann::json j;
  auto nodes = nlohmann::json::array();
  for (int i = 0; i < tree.size(); ++i) {
    const auto& n = tree.nodes[i];
    nodes.push_back({{"idx", i},
                     {"layer_id", n.member < 0 ? "" : window.members[n.member].id},
                     {"kind", n.member < 0 ? "canvas" : "layer"}});
  }
  j["nodes"] = std::move(nodes);
  auto arcs = nlohmann::json::array();
  for (const auto& a : g.arcs) {
    const char* k = a.kind == ArcKind::kTree ? "tree"
                    : a.kind == ArcKind::kSibling ? "sibling"
                                                  : "self";
    arcs.push_back({{"src", a.src}, {"dst", a.dst}, {"kind", k}});
  }
  j["arcs"] = std::move(arcs);
  return j;
}

}  // namespace layermerge
