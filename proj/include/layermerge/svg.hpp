#pragma once

#include <string>
#include <utility>
#include <vector>

#include "layermerge/io_util.hpp"
#include "layermerge/layer_model.hpp"
#include "layermerge/merge.hpp"

namespace layermerge {

namespace detail {

// distinct, high-contrast stroke colors cycled across groups
inline const char* group_color(size_t i) {
  static const char* palette[] = {"#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4",
                                  "#46f0f0", "#f032e6", "#008080", "#9a6324", "#800000"};
  return palette[i % (sizeof palette / sizeof palette[0])];
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

// Every merge-group member drawn as a stroked rect over the artboard's own
// coordinate space — one shared color per group, fill none — plus a legend
// comment mapping groups to colors and members. Singletons are dashed gray.
inline std::string render_groups_svg(const Artboard& ab,
                                     const std::vector<std::pair<int, MergeResult>>& per_window) {
  std::string w = format_g9(ab.width), h = format_g9(ab.height);
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + w + "\" height=\"" +
                    h + "\" viewBox=\"0 0 " + w + " " + h + "\">\n";

  std::string legend = "<!-- legend\n";
  std::string body;
  size_t color_idx = 0;
  for (const auto& [window_index, result] : per_window) {
    for (const auto& g : result.groups) {
      const char* color = detail::group_color(color_idx++);
      legend += "  window " + std::to_string(window_index) + " " + g.id + " " + color + ":";
      for (const auto& id : g.members) legend += " " + id;
      legend += "\n";
      for (const auto& id : g.members) {
        const LayerNode* l = ab.find(id);
        if (!l) continue;
        body += "  <rect x=\"" + format_g9(l->rect.x) + "\" y=\"" + format_g9(l->rect.y) +
                "\" width=\"" + format_g9(l->rect.w) + "\" height=\"" + format_g9(l->rect.h) +
                "\" fill=\"none\" stroke=\"" + color +
                "\" stroke-width=\"2\"><title>" + detail::xml_escape(id) + "</title></rect>\n";
      }
    }
    for (const auto& id : result.singletons) {
      const LayerNode* l = ab.find(id);
      if (!l) continue;
      body += "  <rect x=\"" + format_g9(l->rect.x) + "\" y=\"" + format_g9(l->rect.y) +
              "\" width=\"" + format_g9(l->rect.w) + "\" height=\"" + format_g9(l->rect.h) +
              "\" fill=\"none\" stroke=\"#808080\" stroke-dasharray=\"4 3\""
              " stroke-width=\"1\"><title>" +
              detail::xml_escape(id) + "</title></rect>\n";
    }
  }
  legend += "-->\n";
  return svg + legend + body + "</svg>\n";
}

}  // namespace layermerge
