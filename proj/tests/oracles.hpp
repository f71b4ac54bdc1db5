// Slow, obviously-correct re-derivations used as oracles by the unit and
// acceptance tests. Nothing here shares logic with the library beyond the
// stated tie rules.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "layermerge/graph_build.hpp"

namespace oracles {

// Quadratic scan: parent of layer i is the container with the smallest
// area, ties broken toward the largest z. An identical rect counts as a
// container only when its z is smaller. -1 means the virtual root.
inline std::vector<int> brute_force_parents(const std::vector<layermerge::WindowLayer>& ls) {
  std::vector<int> parent(ls.size(), -1);
  for (size_t i = 0; i < ls.size(); ++i) {
    int best = -1;
    for (size_t j = 0; j < ls.size(); ++j) {
      if (i == j) continue;
      if (!ls[j].rect.contains(ls[i].rect)) continue;
      if (ls[j].rect == ls[i].rect && ls[j].z > ls[i].z) continue;
      if (best < 0) {
        best = int(j);
        continue;
      }
      const auto& b = ls[size_t(best)];
      if (ls[j].rect.area() < b.rect.area() ||
          (ls[j].rect.area() == b.rect.area() && ls[j].z > b.z))
        best = int(j);
    }
    parent[i] = best;
  }
  return parent;
}

// Member-index parent function extracted from a built tree, aligned with
// brute_force_parents output (-1 = root).
inline std::vector<int> tree_parents(const layermerge::ContainmentTree& tree,
                                     size_t n_members) {
  std::vector<int> parent(n_members, -2);
  for (const auto& n : tree.nodes) {
    if (n.member < 0) continue;
    parent[size_t(n.member)] = tree.nodes[size_t(n.parent)].member;
  }
  return parent;
}

// Dense per-segment softmax computed exactly from the definition, one
// destination at a time.
inline std::vector<double> dense_segment_softmax(const std::vector<double>& scores,
                                                 const std::vector<int>& dst, int n_nodes) {
  std::vector<double> out(scores.size(), 0.0);
  for (int node = 0; node < n_nodes; ++node) {
    std::vector<size_t> members;
    for (size_t e = 0; e < dst.size(); ++e)
      if (dst[e] == node) members.push_back(e);
    if (members.empty()) continue;
    double mx = scores[members[0]];
    for (size_t e : members) mx = std::max(mx, scores[e]);
    double denom = 0.0;
    for (size_t e : members) denom += std::exp(scores[e] - mx);
    for (size_t e : members) out[e] = std::exp(scores[e] - mx) / denom;
  }
  return out;
}

// Convolution evaluated straight from the definition, no im2col.
template <typename S>
std::vector<S> naive_conv2d(const std::vector<S>& x, int B, int Ci, int H, int W,
                            const std::vector<S>& w, int Co, int kh, int kw,
                            const std::vector<S>& b, int stride, int pad) {
  int Ho = (H + 2 * pad - kh) / stride + 1;
  int Wo = (W + 2 * pad - kw) / stride + 1;
  std::vector<S> out(size_t(B) * Co * Ho * Wo);
  for (int n = 0; n < B; ++n)
    for (int co = 0; co < Co; ++co)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          S acc = b[size_t(co)];
          for (int ci = 0; ci < Ci; ++ci)
            for (int dy = 0; dy < kh; ++dy)
              for (int dx = 0; dx < kw; ++dx) {
                int iy = oy * stride + dy - pad, ix = ox * stride + dx - pad;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += x[((size_t(n) * Ci + ci) * H + iy) * W + ix] *
                       w[((size_t(co) * Ci + ci) * kh + dy) * kw + dx];
              }
          out[((size_t(n) * Co + co) * Ho + oy) * Wo + ox] = acc;
        }
  return out;
}

// Plain union-find; used to recompute merge groups from first principles.
struct UnionFind {
  std::vector<int> p;
  explicit UnionFind(int n) : p(size_t(n)) { std::iota(p.begin(), p.end(), 0); }
  int find(int a) { return p[size_t(a)] == a ? a : p[size_t(a)] = find(p[size_t(a)]); }
  void unite(int a, int b) { p[size_t(find(a))] = find(b); }
};

// RoI pooling recomputed from its definition: floor/ceil bins over the
// projected extent, exhaustive per-bin max, empty bins borrowing the
// euclidean-nearest non-empty bin (row-major tie-break).
inline std::vector<float> roi_reference(const float* map, int C, int H, int W, double rx,
                                        double ry, double rw, double rh, int g) {
  struct Bin {
    int y0, y1, x0, x1;
    bool ok;
  };
  std::vector<Bin> bins;
  for (int by = 0; by < g; ++by)
    for (int bx = 0; bx < g; ++bx) {
      double ys = ry + rh * by / g, ye = ry + rh * (by + 1) / g;
      double xs = rx + rw * bx / g, xe = rx + rw * (bx + 1) / g;
      int y0 = std::max(0, int(std::floor(ys))), y1 = std::min(H, int(std::ceil(ye)));
      int x0 = std::max(0, int(std::floor(xs))), x1 = std::min(W, int(std::ceil(xe)));
      bins.push_back({y0, y1, x0, x1, y1 > y0 && x1 > x0});
    }
  std::vector<float> out(size_t(C) * g * g, 0.f);
  bool any = false;
  for (const auto& b : bins) any = any || b.ok;
  if (!any) return out;
  std::vector<int> source(size_t(g) * g);
  for (int by = 0; by < g; ++by)
    for (int bx = 0; bx < g; ++bx) {
      int i = by * g + bx;
      if (bins[size_t(i)].ok) {
        source[size_t(i)] = i;
        continue;
      }
      long best_d = std::numeric_limits<long>::max();
      for (int dy = 0; dy < g; ++dy)
        for (int dx = 0; dx < g; ++dx) {
          if (!bins[size_t(dy * g + dx)].ok) continue;
          long d = long(dy - by) * (dy - by) + long(dx - bx) * (dx - bx);
          if (d < best_d) {
            best_d = d;
            source[size_t(i)] = dy * g + dx;
          }
        }
    }
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < g * g; ++i) {
      const Bin& b = bins[size_t(source[size_t(i)])];
      float mx = -std::numeric_limits<float>::infinity();
      for (int y = b.y0; y < b.y1; ++y)
        for (int x = b.x0; x < b.x1; ++x)
          mx = std::max(mx, map[(size_t(c) * H + y) * W + x]);
      out[size_t(c) * g * g + size_t(i)] = mx;
    }
  return out;
}

// One GAT layer evaluated densely with the concatenated attention vector
// a = [a_dst ; a_src], per-destination softmax, attention-weighted sums,
// optional ELU, concat-or-average head combine, plus the FC skip.
inline std::vector<std::vector<double>> dense_gat_layer(
    const std::vector<std::vector<double>>& h,
    const std::vector<std::vector<std::vector<double>>>& W,  // heads × F × F'
    const std::vector<std::vector<double>>& a,                // heads × 2F'
    const std::vector<std::pair<int, int>>& arcs,             // (src, dst)
    bool activate, bool average, const std::vector<std::vector<double>>& skip_w,
    const std::vector<double>& skip_b) {
  size_t N = h.size(), F = h[0].size(), heads = W.size(), Fp = W[0][0].size();
  std::vector<std::vector<std::vector<double>>> head_out(
      heads, std::vector<std::vector<double>>(N, std::vector<double>(Fp, 0.0)));
  for (size_t k = 0; k < heads; ++k) {
    std::vector<std::vector<double>> Wh(N, std::vector<double>(Fp, 0.0));
    for (size_t i = 0; i < N; ++i)
      for (size_t f = 0; f < F; ++f)
        for (size_t o = 0; o < Fp; ++o) Wh[i][o] += h[i][f] * W[k][f][o];
    std::vector<double> e(arcs.size());
    for (size_t idx = 0; idx < arcs.size(); ++idx) {
      auto [s, d] = arcs[idx];
      double dot = 0.0;  // a · [Wh_dst ‖ Wh_src]
      for (size_t o = 0; o < Fp; ++o) dot += a[k][o] * Wh[size_t(d)][o];
      for (size_t o = 0; o < Fp; ++o) dot += a[k][Fp + o] * Wh[size_t(s)][o];
      e[idx] = dot > 0 ? dot : 0.2 * dot;
    }
    for (size_t node = 0; node < N; ++node) {
      std::vector<size_t> in;
      for (size_t idx = 0; idx < arcs.size(); ++idx)
        if (arcs[idx].second == int(node)) in.push_back(idx);
      if (in.empty()) continue;
      double mx = e[in[0]];
      for (size_t idx : in) mx = std::max(mx, e[idx]);
      double denom = 0.0;
      for (size_t idx : in) denom += std::exp(e[idx] - mx);
      for (size_t idx : in) {
        double alpha = std::exp(e[idx] - mx) / denom;
        for (size_t o = 0; o < Fp; ++o)
          head_out[k][node][o] += alpha * Wh[size_t(arcs[idx].first)][o];
      }
    }
    if (activate)
      for (auto& row : head_out[k])
        for (auto& v : row) v = v > 0 ? v : std::expm1(v);
  }
  size_t out_dim = average ? Fp : heads * Fp;
  std::vector<std::vector<double>> out(N, std::vector<double>(out_dim, 0.0));
  for (size_t i = 0; i < N; ++i) {
    if (average) {
      for (size_t k = 0; k < heads; ++k)
        for (size_t o = 0; o < Fp; ++o) out[i][o] += head_out[k][i][o] / double(heads);
    } else {
      for (size_t k = 0; k < heads; ++k)
        for (size_t o = 0; o < Fp; ++o) out[i][k * Fp + o] = head_out[k][i][o];
    }
    for (size_t o = 0; o < out_dim; ++o) {
      double s = skip_b[o];
      for (size_t f = 0; f < F; ++f) s += h[i][f] * skip_w[f][o];
      out[i][o] += s;
    }
  }
  return out;
}

}  // namespace oracles
