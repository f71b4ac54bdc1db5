#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "layermerge/geometry.hpp"
#include "layermerge/layer_model.hpp"

namespace layermerge {

// Planar float image, channel-major (c, y, x), values in [0, 1].
struct FloatImage {
  int channels = 0, height = 0, width = 0;
  std::vector<float> data;

  FloatImage() = default;
  FloatImage(int c, int h, int w) : channels(c), height(h), width(w), data(size_t(c) * h * w, 0.f) {}

  float& at(int c, int y, int x) { return data[(size_t(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const { return data[(size_t(c) * height + y) * width + x]; }
};

inline FloatImage to_float_image(const Screenshot& s) {
  FloatImage img(3, s.height, s.width);
  const float inv = 1.f / 255.f;
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x) {
      size_t o = size_t(y * s.width + x) * 3;
      img.at(0, y, x) = s.pixels[o] * inv;
      img.at(1, y, x) = s.pixels[o + 1] * inv;
      img.at(2, y, x) = s.pixels[o + 2] * inv;
    }
  return img;
}

// Bilinear sample at continuous position (px, py), where pixel k covers
// [k, k+1) and its center sits at k + 0.5. Coordinates clamp to the image.
inline float sample_bilinear(const FloatImage& img, int c, double px, double py) {
  double u = px - 0.5, v = py - 0.5;
  double x0f = std::floor(u), y0f = std::floor(v);
  double fx = u - x0f, fy = v - y0f;
  int x0 = std::clamp(int(x0f), 0, img.width - 1);
  int x1 = std::clamp(int(x0f) + 1, 0, img.width - 1);
  int y0 = std::clamp(int(y0f), 0, img.height - 1);
  int y1 = std::clamp(int(y0f) + 1, 0, img.height - 1);
  double a = img.at(c, y0, x0) * (1 - fx) + img.at(c, y0, x1) * fx;
  double b = img.at(c, y1, x0) * (1 - fx) + img.at(c, y1, x1) * fx;
  return float(a * (1 - fy) + b * fy);
}

// Bilinear resample of a sub-rectangle of `img` (in pixel units of `img`)
// onto an out_w x out_h grid, regardless of aspect ratio. Output pixel
// (ox, oy) samples the source at the center of its cell within the region.
inline FloatImage resample_region(const FloatImage& img, const Rect& region, int out_h, int out_w) {
  FloatImage out(img.channels, out_h, out_w);
  if (region.w <= 0 || region.h <= 0) return out;  // zero tensor
  double sx = region.w / out_w, sy = region.h / out_h;
  for (int c = 0; c < img.channels; ++c)
    for (int oy = 0; oy < out_h; ++oy) {
      double py = region.y + (oy + 0.5) * sy;
      for (int ox = 0; ox < out_w; ++ox) {
        double px = region.x + (ox + 0.5) * sx;
        out.at(c, oy, ox) = sample_bilinear(img, c, px, py);
      }
    }
  return out;
}

inline FloatImage resize_bilinear(const FloatImage& img, int out_h, int out_w) {
  return resample_region(img, {0, 0, double(img.width), double(img.height)}, out_h, out_w);
}

}  // namespace layermerge
