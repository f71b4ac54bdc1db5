#pragma once

#include <algorithm>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "layermerge/geometry.hpp"
#include "layermerge/graph_build.hpp"

namespace layermerge {

struct MergeConfig {
  double tau = 40.0;  // center-distance threshold, design px at 750 scale
};

struct MergeGroup {
  std::string id;
  std::vector<std::string> members;  // layer ids, window order
  Rect bounds;
};

struct MergeResult {
  std::vector<MergeGroup> groups;        // each ≥ 2 members
  std::vector<std::string> singletons;   // positives in no group
};

inline Rect group_bounds(const std::vector<Rect>& rects) {
  if (rects.empty()) throw std::invalid_argument("group_bounds: empty group");
  Rect b = rects[0];
  for (size_t i = 1; i < rects.size(); ++i) b = Rect::hull(b, rects[i]);
  return b;
}

// §-style post-processing over one window: (1) any two positives whose
// centers lie closer than tau merge; (2) walking the containment tree top
// down, a positive non-leaf merges with each positive direct child;
// (3) groups are the connected components, size-1 components reported as
// singletons. The adjacency is built over the positive set only, so
// negative layers can never be dragged into a group.
inline MergeResult merge_fragments(const Window& window, const ContainmentTree& tree,
                                   const std::set<std::string>& positives,
                                   const MergeConfig& config = {}) {
  if (!(config.tau > 0)) throw std::invalid_argument("merge: tau must be positive");
  if (tree.size() != int(window.members.size()) + 1)
    throw std::invalid_argument("merge: tree does not belong to this window");

  // positive node indices, ascending (deterministic output order)
  std::vector<int> pos_nodes;
  std::set<std::string> seen;
  for (int i = 0; i < tree.size(); ++i) {
    int m = tree.nodes[size_t(i)].member;
    if (m < 0) continue;
    const std::string& id = window.members[size_t(m)].id;
    if (positives.count(id)) {
      pos_nodes.push_back(i);
      seen.insert(id);
    }
  }
  for (const auto& id : positives)
    if (!seen.count(id))
      throw std::invalid_argument("merge: positive layer '" + id + "' is not in this window");

  int P = int(pos_nodes.size());
  std::vector<int> node_to_p(size_t(tree.size()), -1);
  for (int p = 0; p < P; ++p) node_to_p[size_t(pos_nodes[size_t(p)])] = p;

  std::vector<std::vector<uint8_t>> adj(size_t(P), std::vector<uint8_t>(size_t(P), 0));
  // rule 1: center proximity
  for (int a = 0; a < P; ++a)
    for (int b = a + 1; b < P; ++b) {
      const Rect& ra = tree.nodes[size_t(pos_nodes[size_t(a)])].rect;
      const Rect& rb = tree.nodes[size_t(pos_nodes[size_t(b)])].rect;
      if (center_distance(ra, rb) < config.tau) adj[size_t(a)][size_t(b)] = adj[size_t(b)][size_t(a)] = 1;
    }
  // rule 2: top-down positive parent ↔ positive direct child
  std::vector<int> stack{0};
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    int pu = node_to_p[size_t(u)];
    for (int c : tree.nodes[size_t(u)].children) {
      int pc = node_to_p[size_t(c)];
      if (pu >= 0 && pc >= 0) adj[size_t(pu)][size_t(pc)] = adj[size_t(pc)][size_t(pu)] = 1;
      stack.push_back(c);
    }
  }

  // connected components by DFS, seeds in ascending node order
  MergeResult out;
  std::vector<int> comp(size_t(P), -1);
  int n_comp = 0;
  for (int s = 0; s < P; ++s) {
    if (comp[size_t(s)] >= 0) continue;
    std::vector<int> dfs{s};
    comp[size_t(s)] = n_comp;
    while (!dfs.empty()) {
      int a = dfs.back();
      dfs.pop_back();
      for (int b = 0; b < P; ++b)
        if (adj[size_t(a)][size_t(b)] && comp[size_t(b)] < 0) {
          comp[size_t(b)] = n_comp;
          dfs.push_back(b);
        }
    }
    ++n_comp;
  }

  for (int c = 0; c < n_comp; ++c) {
    std::vector<std::string> members;
    std::vector<Rect> rects;
    for (int p = 0; p < P; ++p) {
      if (comp[size_t(p)] != c) continue;
      const auto& node = tree.nodes[size_t(pos_nodes[size_t(p)])];
      members.push_back(window.members[size_t(node.member)].id);
      rects.push_back(node.rect);
    }
    if (members.size() == 1) {
      out.singletons.push_back(members[0]);
    } else {
      MergeGroup g;
      g.id = "g" + std::to_string(out.groups.size());
      g.members = std::move(members);
      g.bounds = group_bounds(rects);
      out.groups.push_back(std::move(g));
    }
  }
  return out;
}

inline nlohmann::json merge_result_to_json(int window_index, const MergeResult& r) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : r.groups)
    groups.push_back({{"id", g.id},
                      {"members", g.members},
                      {"bounds",
                       {{"x", g.bounds.x}, {"y", g.bounds.y}, {"w", g.bounds.w}, {"h", g.bounds.h}}}});
  return nlohmann::json{{"window", window_index}, {"groups", groups}, {"singletons", r.singletons}};
}

}  // namespace layermerge
