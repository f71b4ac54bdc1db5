#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "layermerge/rng.hpp"
#include "layermerge/tensor.hpp"

namespace layermerge {

// Named, ordered collection of trainable tensors. Registration order is the
// checkpoint manifest order and the Adam state layout, so it must be
// deterministic for a given architecture.
template <typename S>
class ParamSet {
 public:
  Tensor<S> add(const std::string& name, std::vector<int> shape) {
    for (const auto& e : entries_)
      if (e.name == name) throw std::invalid_argument("duplicate parameter '" + name + "'");
    Entry e{name, Tensor<S>(std::move(shape))};
    e.tensor.set_requires_grad(true);
    entries_.push_back(e);
    return entries_.back().tensor;
  }

  struct Entry {
    std::string name;
    Tensor<S> tensor;
  };

  size_t size() const { return entries_.size(); }
  const Entry& entry(size_t i) const { return entries_[i]; }
  Entry& entry(size_t i) { return entries_[i]; }

  Tensor<S> find(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.name == name) return e.tensor;
    throw std::invalid_argument("no parameter named '" + name + "'");
  }

  void zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

  size_t scalar_count() const {
    size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::vector<Entry> entries_;
};

// Draws are made in double and narrowed to S, so a given seed yields the
// same float parameters everywhere.
template <typename S>
void fill_uniform(Tensor<S>& t, Rng& rng, double lo, double hi) {
  for (size_t i = 0; i < t.numel(); ++i) t.data()[i] = S(rng.uniform(lo, hi));
}

template <typename S>
void glorot_init(Tensor<S>& t, Rng& rng, int fan_in, int fan_out) {
  double limit = std::sqrt(6.0 / (fan_in + fan_out));
  fill_uniform(t, rng, -limit, limit);
}

template <typename S>
Tensor<S> linear(Tape<S>* tape, const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  return add_bias(tape, matmul(tape, x, w), b);
}

// Three conv+ReLU+pool stages and a fully-connected projection to 128.
// In crop mode the FC consumes the 8×8×64 block left from a 64×64 input;
// in roi mode it consumes a 5×5×64 RoI-pooled block, and the conv stack is
// instead run over the (resized) window patch to produce the feature map.
template <typename S>
struct SmallCnn {
  enum class Mode { kCrop, kRoi };

  static constexpr int kOutDim = 128;
  // roi mode: the 750 patch is resampled to this square before the conv
  // stack; three 2× pools then give a 24×24 map, i.e. stride 8.
  static constexpr int kRoiInput = 192;
  static constexpr int kRoiGrid = 5;

  Mode mode = Mode::kCrop;
  Tensor<S> w1, b1, w2, b2, w3, b3, fcw, fcb;

  SmallCnn() = default;

  SmallCnn(ParamSet<S>& ps, Rng& rng, Mode m, const std::string& prefix = "cnn.") : mode(m) {
    w1 = ps.add(prefix + "conv1.w", {16, 3, 3, 3});
    b1 = ps.add(prefix + "conv1.b", {16});
    w2 = ps.add(prefix + "conv2.w", {32, 16, 3, 3});
    b2 = ps.add(prefix + "conv2.b", {32});
    w3 = ps.add(prefix + "conv3.w", {64, 32, 3, 3});
    b3 = ps.add(prefix + "conv3.b", {64});
    int fc_in = m == Mode::kCrop ? 64 * 8 * 8 : 64 * kRoiGrid * kRoiGrid;
    fcw = ps.add(prefix + "fc.w", {fc_in, kOutDim});
    fcb = ps.add(prefix + "fc.b", {kOutDim});
    glorot_init(w1, rng, 3 * 9, 16 * 9);
    glorot_init(w2, rng, 16 * 9, 32 * 9);
    glorot_init(w3, rng, 32 * 9, 64 * 9);
    glorot_init(fcw, rng, fc_in, kOutDim);
  }

  // conv stack only: B×3×H×W → B×64×(H/8)×(W/8).
  Tensor<S> backbone(Tape<S>* tape, const Tensor<S>& x) const {
    Tensor<S> h = maxpool2d(tape, relu(tape, conv2d(tape, x, w1, b1)), 2, 2);
    h = maxpool2d(tape, relu(tape, conv2d(tape, h, w2, b2)), 2, 2);
    return maxpool2d(tape, relu(tape, conv2d(tape, h, w3, b3)), 2, 2);
  }

  Tensor<S> head(Tape<S>* tape, const Tensor<S>& flat) const {
    return linear(tape, flat, fcw, fcb);
  }

  // crop mode end-to-end: B×3×64×64 → B×128.
  Tensor<S> forward_crops(Tape<S>* tape, const Tensor<S>& crops) const {
    Tensor<S> h = backbone(tape, crops);
    h = reshape(tape, h, {h.dim(0), h.dim(1) * h.dim(2) * h.dim(3)});
    return head(tape, h);
  }
};

// Standard bias-corrected Adam over a ParamSet, moments laid out in
// registration order.
template <typename S>
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int64_t t = 0;
  std::vector<std::vector<S>> m, v;

  explicit AdamState(const ParamSet<S>& ps, double lr_init = 1e-3) : lr(lr_init) {
    for (const auto& e : ps) {
      m.emplace_back(e.tensor.numel(), S(0));
      v.emplace_back(e.tensor.numel(), S(0));
    }
  }
};

template <typename S>
void adam_step(ParamSet<S>& ps, AdamState<S>& st) {
  if (st.m.size() != ps.size())
    throw std::invalid_argument("adam state does not match parameter set");
  ++st.t;
  double c1 = 1.0 - std::pow(st.beta1, double(st.t));
  double c2 = 1.0 - std::pow(st.beta2, double(st.t));
  for (size_t p = 0; p < ps.size(); ++p) {
    auto& e = ps.entry(p);
    S* w = e.tensor.data();
    const S* g = e.tensor.grad();
    S* m = st.m[p].data();
    S* v = st.v[p].data();
    for (size_t i = 0; i < e.tensor.numel(); ++i) {
      if (!std::isfinite(double(g[i])))
        throw std::runtime_error("non-finite gradient in parameter '" + e.name + "'");
      m[i] = S(st.beta1) * m[i] + S(1 - st.beta1) * g[i];
      v[i] = S(st.beta2) * v[i] + S(1 - st.beta2) * g[i] * g[i];
      double mhat = double(m[i]) / c1;
      double vhat = double(v[i]) / c2;
      w[i] -= S(st.lr * mhat / (std::sqrt(vhat) + st.eps));
    }
  }
}

// Halves the lr after `patience` consecutive epochs without the validation
// loss improving by more than `min_improve`; never raises it; floors at
// 1e-6. Call once per epoch.
struct PlateauSchedule {
  int patience = 10;
  double factor = 0.5;
  double floor_lr = 1e-6;
  double min_improve = 1e-5;

  double best = std::numeric_limits<double>::infinity();
  int stale = 0;

  double update(double val_loss, double lr) {
    if (val_loss < best - min_improve) {
      best = val_loss;
      stale = 0;
      return lr;
    }
    if (++stale >= patience) {
      stale = 0;
      lr = std::max(floor_lr, lr * factor);
    }
    return lr;
  }
};

}  // namespace layermerge
