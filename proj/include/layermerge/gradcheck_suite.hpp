#pragma once

#include <string>
#include <vector>

#include "layermerge/features.hpp"
#include "layermerge/gnn.hpp"
#include "layermerge/gradcheck.hpp"
#include "layermerge/graph_build.hpp"
#include "layermerge/nn.hpp"
#include "layermerge/rng.hpp"
#include "layermerge/tensor.hpp"

namespace layermerge {

struct SuiteCheck {
  std::string name;
  FdReport report;
};

struct SuiteResult {
  double tolerance = 1e-4;
  std::vector<SuiteCheck> checks;

  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.report.pass(tolerance)) return false;
    return true;
  }
};

// Double-precision central finite-difference checks over every primitive,
// the CNN composites, one full GAT layer, and the end-to-end model on a
// 5-node graph. Deterministic; used by the self-check command and the
// acceptance gate. The reduction to a scalar is a fixed random weighting so
// every output element influences the loss.
inline SuiteResult run_gradient_suite() {
  SuiteResult result;
  Rng rng(0xfdc0de);

  auto rnd = [&](std::vector<int> shape, double lo = -1, double hi = 1) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.values()) {
      v = rng.uniform(lo, hi);
      if (std::abs(v) < 0.05) v = v < 0 ? v - 0.05 : v + 0.05;  // keep off kinks
    }
    return t;
  };
  auto rnd_w = [&](size_t n) {
    std::vector<double> w(n);
    for (auto& v : w) v = rng.uniform(-1, 1);
    return w;
  };
  auto add_check = [&](const std::string& name, FdReport rep) {
    result.checks.push_back({name, rep});
  };

  {
    Tensor<double> a = rnd({3, 4}), b = rnd({4, 2});
    std::vector<double> w = rnd_w(6);
    add_check("matmul", fd_check<double>({{"a", a}, {"b", b}}, [&](Tape<double>* t) {
      return weighted_sum(t, matmul(t, a, b), w);
    }));
  }
  {
    Tensor<double> a = rnd({2, 5}), b = rnd({2, 5});
    std::vector<double> w = rnd_w(10);
    add_check("add", fd_check<double>({{"a", a}, {"b", b}}, [&](Tape<double>* t) {
      return weighted_sum(t, add(t, a, b), w);
    }));
  }
  {
    Tensor<double> x = rnd({3, 4}), b = rnd({4});
    std::vector<double> w = rnd_w(12);
    add_check("add_bias", fd_check<double>({{"x", x}, {"b", b}}, [&](Tape<double>* t) {
      return weighted_sum(t, add_bias(t, x, b), w);
    }));
  }
  for (const char* act : {"relu", "leaky_relu", "elu"}) {
    Tensor<double> x = rnd({3, 4});
    std::vector<double> w = rnd_w(12);
    std::string name = act;
    add_check(name, fd_check<double>({{"x", x}}, [&, name](Tape<double>* t) {
      Tensor<double> y = name == "relu"        ? relu(t, x)
                         : name == "leaky_relu" ? leaky_relu(t, x)
                                                : elu(t, x);
      return weighted_sum(t, y, w);
    }));
  }
  {
    Tensor<double> a = rnd({2, 3}), b = rnd({2, 2});
    std::vector<double> w = rnd_w(10);
    add_check("concat_cols", fd_check<double>({{"a", a}, {"b", b}}, [&](Tape<double>* t) {
      return weighted_sum(t, concat_cols(t, {a, b}), w);
    }));
  }
  {
    Tensor<double> a = rnd({2, 3}), b = rnd({1, 3});
    std::vector<double> w = rnd_w(9);
    add_check("stack_rows", fd_check<double>({{"a", a}, {"b", b}}, [&](Tape<double>* t) {
      return weighted_sum(t, stack_rows(t, {a, b}), w);
    }));
  }
  {
    Tensor<double> x = rnd({2, 6});
    std::vector<double> w = rnd_w(12);
    add_check("reshape", fd_check<double>({{"x", x}}, [&](Tape<double>* t) {
      return weighted_sum(t, reshape(t, x, {3, 4}), w);
    }));
  }
  {
    Tensor<double> x = rnd({4, 3});
    std::vector<int> idx{2, 0, 2, 1, 3};
    std::vector<double> w = rnd_w(15);
    add_check("index_rows", fd_check<double>({{"x", x}}, [&](Tape<double>* t) {
      return weighted_sum(t, index_rows(t, x, idx), w);
    }));
  }
  {
    Tensor<double> x = rnd({4, 3}), s = rnd({4});
    std::vector<double> w = rnd_w(12);
    add_check("scale_rows", fd_check<double>({{"x", x}, {"s", s}}, [&](Tape<double>* t) {
      return weighted_sum(t, scale_rows(t, x, s), w);
    }));
  }
  {
    Tensor<double> x = rnd({5, 3});
    std::vector<int> dst{0, 1, 1, 2, 0};
    std::vector<double> w = rnd_w(9);
    add_check("segment_sum", fd_check<double>({{"x", x}}, [&](Tape<double>* t) {
      return weighted_sum(t, segment_sum(t, x, dst, 3), w);
    }));
  }
  {
    Tensor<double> s = rnd({7});
    std::vector<int> dst{0, 0, 1, 2, 2, 2, 1};
    std::vector<double> w = rnd_w(7);
    add_check("segment_softmax", fd_check<double>({{"s", s}}, [&](Tape<double>* t) {
      Tensor<double> y = segment_softmax(t, s, dst, 3);
      return weighted_sum(t, reshape(t, y, {1, 7}), w);
    }));
  }
  {
    Tensor<double> x = rnd({2, 2, 5, 5}), w = rnd({3, 2, 3, 3}), b = rnd({3});
    std::vector<double> ww = rnd_w(150);
    add_check("conv2d",
              fd_check<double>({{"x", x}, {"w", w}, {"b", b}}, [&](Tape<double>* t) {
                Tensor<double> y = conv2d(t, x, w, b);
                return weighted_sum(t, reshape(t, y, {1, int(y.numel())}), ww);
              }));
  }
  {
    Tensor<double> x = rnd({1, 2, 6, 6});
    std::vector<double> w = rnd_w(18);
    add_check("maxpool2d", fd_check<double>({{"x", x}}, [&](Tape<double>* t) {
      Tensor<double> y = maxpool2d(t, x, 2, 2);
      return weighted_sum(t, reshape(t, y, {1, int(y.numel())}), w);
    }));
  }
  {
    Tensor<double> fmap = rnd({2, 6, 6});
    Rect r{0.7, 1.1, 4.6, 3.8};
    std::vector<double> w = rnd_w(50);
    add_check("roi_maxpool", fd_check<double>({{"fmap", fmap}}, [&](Tape<double>* t) {
      Tensor<double> y = roi_maxpool(t, fmap, r);
      return weighted_sum(t, reshape(t, y, {1, int(y.numel())}), w);
    }));
  }
  {
    Tensor<double> logits = rnd({4, 2});
    std::vector<int> labels{0, 1, 1, 0};
    std::vector<uint8_t> mask{1, 1, 0, 1};
    add_check("cross_entropy", fd_check<double>({{"logits", logits}}, [&](Tape<double>* t) {
      return cross_entropy(t, logits, labels, mask);
    }));
  }
  {
    ParamSet<double> ps;
    SmallCnn<double> cnn(ps, rng, SmallCnn<double>::Mode::kCrop);
    Tensor<double> crops = rnd({1, 3, kCropSize, kCropSize}, 0, 1);
    std::vector<double> w = rnd_w(size_t(SmallCnn<double>::kOutDim));
    std::vector<NamedTensor<double>> named{{"crops", crops}};
    for (const auto& e : ps) named.push_back({e.name, e.tensor});
    add_check("smallcnn_crop",
              fd_check<double>(named,
                               [&](Tape<double>* t) {
                                 return weighted_sum(t, cnn.forward_crops(t, crops), w);
                               },
                               1e-5, 40, 1));
  }
  {
    ParamSet<double> ps;
    GatLayer<double> layer(ps, rng, "gat.", 6, 3, 2, false, true);
    GraphArcs g;
    g.n_nodes = 4;
    for (auto [s, d] : {std::pair<int, int>{0, 0}, {1, 1}, {2, 2}, {3, 3},
                        {0, 1}, {1, 0}, {2, 3}, {1, 3}, {3, 2}}) {
      g.src.push_back(s);
      g.dst.push_back(d);
    }
    Tensor<double> h = rnd({4, 6});
    std::vector<double> w = rnd_w(24);
    std::vector<NamedTensor<double>> named{{"h", h}};
    for (const auto& e : ps) named.push_back({e.name, e.tensor});
    add_check("gat_layer", fd_check<double>(named, [&](Tape<double>* t) {
      return weighted_sum(t, layer.forward(t, g, h), w);
    }));
  }
  {
    // classifier head in isolation
    ParamSet<double> ps;
    Tensor<double> w1 = ps.add("w1", {6, 4}), b1 = ps.add("b1", {4});
    Tensor<double> w2 = ps.add("w2", {4, 2}), b2 = ps.add("b2", {2});
    glorot_init(w1, rng, 6, 4);
    glorot_init(w2, rng, 4, 2);
    Tensor<double> x = rnd({3, 6});
    std::vector<int> labels{1, 0, 1};
    std::vector<uint8_t> mask{1, 1, 1};
    std::vector<NamedTensor<double>> named{{"x", x}, {"w1", w1}, {"b1", b1}, {"w2", w2}, {"b2", b2}};
    add_check("classifier_head", fd_check<double>(named, [&](Tape<double>* t) {
      Tensor<double> hidden = relu(t, linear(t, x, w1, b1));
      return cross_entropy(t, linear(t, hidden, w2, b2), labels, mask);
    }));
  }
  {
    // end-to-end: real architecture, 5-node window graph, sampled probes
    Window w;
    w.index = 0;
    for (int i = 0; i < 4; ++i) {
      WindowLayer l;
      l.id = "L" + std::to_string(i);
      l.name = l.id;
      l.type = LayerType(i % kLayerTypeCount);
      double s = 40 + 30 * i;
      l.rect = {40.0 + 120 * i, 60.0 + 40 * i, s, s};
      l.z = i;
      w.members.push_back(l);
    }
    ContainmentTree tree = build_containment_tree(w);
    LayoutGraph lg = build_graph(tree);
    GraphArcs arcs = flatten_arcs(lg);
    FloatImage patch;
    patch.channels = 3;
    patch.height = 750;
    patch.width = 750;
    patch.data.assign(size_t(3) * 750 * 750, 0.f);
    Rng prng(4242);
    for (auto& v : patch.data) v = float(prng.uniform());
    GraphInputs<double> in =
        make_graph_inputs<double>(w, tree, &patch, VisualMethod::kCrop);
    // Overlapping crops resample the same pixels to bit-identical values,
    // which ties maxpool windows exactly; at a tie the loss is only
    // subdifferentiable and central differences read the branch average.
    // Jitter keeps the probe point differentiable without touching the
    // code under test.
    for (auto& v : in.crops.values()) v += rng.uniform(0, 0.02);

    ModelConfig cfg;
    cfg.kind = ModelKind::kGat;
    cfg.visual = VisualMethod::kCrop;
    cfg.fusion = FusionMode::kLeVf;
    cfg.seed = 99;
    Model<double> model(cfg);
    std::vector<int> labels{0, 1, 0, 1, 1};
    std::vector<uint8_t> mask{0, 1, 1, 1, 1};
    std::vector<NamedTensor<double>> named;
    for (const auto& e : model.params) named.push_back({e.name, e.tensor});
    add_check("model_5node", fd_check<double>(
                                 named,
                                 [&](Tape<double>* t) {
                                   return cross_entropy(t, model_forward(t, arcs, in, model),
                                                        labels, mask);
                                 },
                                 1e-5, 8, 2));
  }

  return result;
}

}  // namespace layermerge
