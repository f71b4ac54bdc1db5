#pragma once

#include <algorithm>
#include <cmath>

namespace layermerge {

// Axis-aligned rectangle in design pixels, top-left origin.
struct Rect {
  double x = 0, y = 0, w = 0, h = 0;

  double cx() const { return x + w / 2; }
  double cy() const { return y + h / 2; }
  double area() const { return w * h; }
  double x1() const { return x + w; }
  double y1() const { return y + h; }

  // Boundary-inclusive containment: pixel-snapped nested frames still nest.
  bool contains(const Rect& o) const {
    return o.x >= x && o.y >= y && o.x1() <= x1() && o.y1() <= y1();
  }

  // Closed-interval overlap; touching edges count.
  bool intersects(const Rect& o) const {
    return o.x <= x1() && x <= o.x1() && o.y <= y1() && y <= o.y1();
  }

  bool operator==(const Rect& o) const {
    return x == o.x && y == o.y && w == o.w && h == o.h;
  }

  Rect scaled(double s) const { return {x * s, y * s, w * s, h * s}; }

  static Rect hull(const Rect& a, const Rect& b) {
    double nx = std::min(a.x, b.x);
    double ny = std::min(a.y, b.y);
    return {nx, ny, std::max(a.x1(), b.x1()) - nx, std::max(a.y1(), b.y1()) - ny};
  }
};

inline double center_distance(const Rect& a, const Rect& b) {
  double dx = a.cx() - b.cx();
  double dy = a.cy() - b.cy();
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace layermerge
