#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "layermerge/features.hpp"
#include "layermerge/graph_build.hpp"
#include "layermerge/layer_model.hpp"

namespace layermerge {

// One window graph, fully preprocessed for training: topology, constant
// model inputs, and per-node supervision. The raster patch is dropped once
// crops (or the resized RoI patch) are extracted.
struct GraphInstance {
  std::string artboard_id;
  int window_index = 0;
  Window window;  // members only; patch cleared after preprocessing
  ContainmentTree tree;
  LayoutGraph graph;
  GraphArcs arcs;
  GraphInputs<float> inputs;
  std::vector<int> labels;     // per node, root = 0
  std::vector<uint8_t> mask;   // 1 = labeled non-root node
  int n_labeled = 0, n_positive = 0;
};

struct Dataset {
  std::vector<GraphInstance> graphs;
  std::vector<std::string> artboard_ids;  // index order of dataset.json
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Builds the per-window graph instances of one artboard. `shot` may be null
// when no visual features will be used (LE-only training or label-driven
// merging); windows whose members are all unlabeled are skipped.
inline void append_artboard_graphs(const Artboard& ab, const Screenshot* shot,
                                   VisualMethod method, bool want_pixels,
                                   std::vector<GraphInstance>& out) {
  WindowedArtboard wa = want_pixels && shot ? scale_and_window(ab, *shot)
                                            : scale_and_window(ab, nullptr);
  for (auto& win : wa.windows) {
    GraphInstance g;
    g.artboard_id = ab.id;
    g.window_index = win.index;
    g.tree = build_containment_tree(win);
    g.graph = build_graph(g.tree);
    g.arcs = flatten_arcs(g.graph);
    g.inputs = make_graph_inputs<float>(win, g.tree, win.patch.data.empty() ? nullptr : &win.patch,
                                        method);
    g.labels.assign(size_t(g.tree.size()), 0);
    g.mask.assign(size_t(g.tree.size()), 0);
    for (int i = 0; i < g.tree.size(); ++i) {
      int m = g.tree.nodes[size_t(i)].member;
      if (m < 0) continue;
      auto it = ab.labels.find(win.members[size_t(m)].id);
      if (it == ab.labels.end()) continue;
      g.mask[size_t(i)] = 1;
      g.labels[size_t(i)] = it->second.fragmented ? 1 : 0;
      ++g.n_labeled;
      g.n_positive += g.labels[size_t(i)];
    }
    win.patch = FloatImage();  // free the raster
    g.window = std::move(win);
    if (g.n_labeled > 0) out.push_back(std::move(g));
  }
}

// Loads a generated dataset directory (dataset.json index + per-artboard
// manifest/PPM pairs). Pixels are read only when the fusion mode needs
// visual features.
inline Dataset load_dataset(const std::filesystem::path& dir, VisualMethod method,
                            bool want_pixels) {
  Dataset ds;
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(read_file(dir / "dataset.json"));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed dataset index in " + (dir / "dataset.json").string() +
                             ": " + e.what());
  }
  for (const auto& stem_j : index.at("artboards")) {
    std::string stem = stem_j.get<std::string>();
    Artboard ab = parse_artboard(read_file(dir / (stem + ".json")));
    Screenshot shot;
    if (want_pixels) shot = load_screenshot(read_file(dir / (stem + ".ppm")), ab);
    ds.artboard_ids.push_back(ab.id);
    append_artboard_graphs(ab, want_pixels ? &shot : nullptr, method, want_pixels, ds.graphs);
  }
  return ds;
}

}  // namespace layermerge
