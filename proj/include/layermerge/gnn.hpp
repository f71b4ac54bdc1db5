#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "layermerge/dataset.hpp"
#include "layermerge/features.hpp"
#include "layermerge/nn.hpp"
#include "layermerge/rng.hpp"
#include "layermerge/tensor.hpp"

namespace layermerge {

constexpr int kGnnHidden = 256;   // F: width after the input projection
constexpr int kGnnHeadDim = 64;   // F′ per attention head
constexpr int kGnnOut = 64;       // final GNN state width (6 heads averaged)
constexpr int kHeadHidden = 128;  // classifier hidden width

enum class ModelKind { kGat, kGcn, kNone };

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "gat") return ModelKind::kGat;
  if (s == "gcn") return ModelKind::kGcn;
  if (s == "none") return ModelKind::kNone;
  throw std::invalid_argument("unknown model '" + s + "' (expected gat|gcn|none)");
}

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::kGat: return "gat";
    case ModelKind::kGcn: return "gcn";
    case ModelKind::kNone: return "none";
  }
  return "?";
}

inline const char* to_string(VisualMethod v) {
  return v == VisualMethod::kCrop ? "crop" : "roi";
}

inline const char* to_string(FusionMode f) {
  switch (f) {
    case FusionMode::kLe: return "le";
    case FusionMode::kVf: return "vf";
    case FusionMode::kLeVf: return "le+vf";
  }
  return "?";
}

// One multi-head attention layer. Per head: e_ij = LeakyReLU(a·[Wh_i ‖ Wh_j])
// over arcs j→i, α = per-destination softmax, h′_i = σ(Σ_j α_ij W h_j).
// Heads are concatenated or averaged, then a single-FC skip of the previous
// states is added. σ is ELU on hidden layers and identity on the last.
template <typename S>
struct GatLayer {
  int heads = 1;
  bool average = false;
  bool activate = true;  // apply ELU inside Eq. 4
  std::vector<Tensor<S>> W;      // per head: in_dim × F′
  std::vector<Tensor<S>> a_dst;  // per head: F′ × 1 (the [Wh_i] half of a)
  std::vector<Tensor<S>> a_src;  // per head: F′ × 1 (the [Wh_j] half of a)
  Tensor<S> skip_w, skip_b;      // in_dim × out_dim

  GatLayer() = default;

  GatLayer(ParamSet<S>& ps, Rng& rng, const std::string& prefix, int in_dim, int f_prime,
           int n_heads, bool avg, bool act)
      : heads(n_heads), average(avg), activate(act) {
    for (int h = 0; h < n_heads; ++h) {
      std::string hp = prefix + "head" + std::to_string(h) + ".";
      W.push_back(ps.add(hp + "W", {in_dim, f_prime}));
      a_dst.push_back(ps.add(hp + "a_dst", {f_prime, 1}));
      a_src.push_back(ps.add(hp + "a_src", {f_prime, 1}));
      glorot_init(W.back(), rng, in_dim, f_prime);
      glorot_init(a_dst.back(), rng, f_prime, 1);
      glorot_init(a_src.back(), rng, f_prime, 1);
    }
    int out_dim = avg ? f_prime : n_heads * f_prime;
    skip_w = ps.add(prefix + "skip.w", {in_dim, out_dim});
    skip_b = ps.add(prefix + "skip.b", {out_dim});
    glorot_init(skip_w, rng, in_dim, out_dim);
  }

  int out_dim() const { return average ? W[0].dim(1) : heads * W[0].dim(1); }

  // α for one head, in arc order (forward-only helper for checks).
  Tensor<S> attention(const GraphArcs& g, const Tensor<S>& h, int head) const {
    Tensor<S> Wh = matmul<S>(nullptr, h, W[size_t(head)]);
    Tensor<S> al = matmul<S>(nullptr, Wh, a_dst[size_t(head)]);
    Tensor<S> ar = matmul<S>(nullptr, Wh, a_src[size_t(head)]);
    Tensor<S> e = leaky_relu<S>(
        nullptr, add<S>(nullptr, index_rows<S>(nullptr, al, g.dst), index_rows<S>(nullptr, ar, g.src)));
    return segment_softmax<S>(nullptr, reshape<S>(nullptr, e, {int(g.dst.size())}), g.dst,
                              g.n_nodes);
  }

  Tensor<S> forward(Tape<S>* tape, const GraphArcs& g, const Tensor<S>& h) const {
    int E = int(g.dst.size());
    std::vector<Tensor<S>> head_outs;
    for (int k = 0; k < heads; ++k) {
      Tensor<S> Wh = matmul(tape, h, W[size_t(k)]);
      Tensor<S> al = matmul(tape, Wh, a_dst[size_t(k)]);  // N×1
      Tensor<S> ar = matmul(tape, Wh, a_src[size_t(k)]);
      Tensor<S> e = leaky_relu(
          tape, add(tape, index_rows(tape, al, g.dst), index_rows(tape, ar, g.src)));
      Tensor<S> alpha = segment_softmax(tape, reshape(tape, e, {E}), g.dst, g.n_nodes);
      Tensor<S> msg = index_rows(tape, Wh, g.src);
      Tensor<S> agg = segment_sum(tape, scale_rows(tape, msg, alpha), g.dst, g.n_nodes);
      head_outs.push_back(activate ? elu(tape, agg) : agg);
    }
    Tensor<S> combined;
    if (average) {
      combined = head_outs[0];
      for (int k = 1; k < heads; ++k) combined = add(tape, combined, head_outs[size_t(k)]);
      Tensor<S> inv({g.n_nodes}, S(1) / S(heads));
      combined = scale_rows(tape, combined, inv);
    } else {
      combined = concat_cols(tape, head_outs);
    }
    return add(tape, combined, linear(tape, h, skip_w, skip_b));
  }
};

// Spatial graph convolution: mean over in-neighbors, then linear + ReLU,
// plus the same single-FC skip as the GAT layers.
template <typename S>
struct GcnLayer {
  Tensor<S> w, b, skip_w, skip_b;

  GcnLayer() = default;

  GcnLayer(ParamSet<S>& ps, Rng& rng, const std::string& prefix, int in_dim, int out_dim) {
    w = ps.add(prefix + "w", {in_dim, out_dim});
    b = ps.add(prefix + "b", {out_dim});
    skip_w = ps.add(prefix + "skip.w", {in_dim, out_dim});
    skip_b = ps.add(prefix + "skip.b", {out_dim});
    glorot_init(w, rng, in_dim, out_dim);
    glorot_init(skip_w, rng, in_dim, out_dim);
  }

  Tensor<S> forward(Tape<S>* tape, const GraphArcs& g, const Tensor<S>& h) const {
    Tensor<S> summed = segment_sum(tape, index_rows(tape, h, g.src), g.dst, g.n_nodes);
    Tensor<S> inv_deg({g.n_nodes});
    for (int d : g.dst) inv_deg.data()[d] += S(1);
    for (int i = 0; i < g.n_nodes; ++i)
      inv_deg.data()[i] = inv_deg.data()[i] > S(0) ? S(1) / inv_deg.data()[i] : S(0);
    Tensor<S> mean = scale_rows(tape, summed, inv_deg);
    Tensor<S> out = relu(tape, linear(tape, mean, w, b));
    return add(tape, out, linear(tape, h, skip_w, skip_b));
  }
};

struct ModelConfig {
  ModelKind kind = ModelKind::kGat;
  VisualMethod visual = VisualMethod::kCrop;
  FusionMode fusion = FusionMode::kLeVf;
  uint64_t seed = 1;
};

// The full detector: embeddings and/or CNN for node inits, optional GNN
// trunk, and the 2-logit classifier head. Parameter registration order is
// fixed by the config, which pins the checkpoint manifest.
template <typename S>
struct Model {
  ModelConfig cfg;
  ParamSet<S> params;
  EmbeddingParams<S> embed;  // fusion != vf
  SmallCnn<S> cnn;           // fusion != le
  Tensor<S> proj_w, proj_b;  // kind != none
  std::vector<GatLayer<S>> gat_layers;
  std::vector<GcnLayer<S>> gcn_layers;
  Tensor<S> head_w1, head_b1, head_w2, head_b2;

  bool use_le() const { return cfg.fusion != FusionMode::kVf; }
  bool use_vf() const { return cfg.fusion != FusionMode::kLe; }

  int head_in_dim() const {
    if (cfg.kind == ModelKind::kNone) return fused_dim(cfg.fusion);
    return kGnnOut + (use_vf() ? kVisualDim : 0);
  }

  explicit Model(const ModelConfig& c) : cfg(c) {
    Rng rng(c.seed ^ 0x6d6f64656cULL);
    if (use_le()) embed = EmbeddingParams<S>(params, rng);
    if (use_vf())
      cnn = SmallCnn<S>(params, rng,
                        c.visual == VisualMethod::kCrop ? SmallCnn<S>::Mode::kCrop
                                                        : SmallCnn<S>::Mode::kRoi);
    if (cfg.kind != ModelKind::kNone) {
      int d0 = fused_dim(cfg.fusion);
      proj_w = params.add("proj.w", {d0, kGnnHidden});
      proj_b = params.add("proj.b", {kGnnHidden});
      glorot_init(proj_w, rng, d0, kGnnHidden);
    }
    if (cfg.kind == ModelKind::kGat) {
      // 4 layers: heads 4,4,4 concat + ELU; final 6 heads averaged, no ELU
      gat_layers.emplace_back(params, rng, "gat1.", kGnnHidden, kGnnHeadDim, 4, false, true);
      gat_layers.emplace_back(params, rng, "gat2.", kGnnHidden, kGnnHeadDim, 4, false, true);
      gat_layers.emplace_back(params, rng, "gat3.", kGnnHidden, kGnnHeadDim, 4, false, true);
      gat_layers.emplace_back(params, rng, "gat4.", kGnnHidden, kGnnHeadDim, 6, true, false);
    } else if (cfg.kind == ModelKind::kGcn) {
      gcn_layers.emplace_back(params, rng, "gcn1.", kGnnHidden, kGnnHidden);
      gcn_layers.emplace_back(params, rng, "gcn2.", kGnnHidden, kGnnHidden);
      gcn_layers.emplace_back(params, rng, "gcn3.", kGnnHidden, kGnnOut);
    }
    int hd = head_in_dim();
    head_w1 = params.add("head.fc1.w", {hd, kHeadHidden});
    head_b1 = params.add("head.fc1.b", {kHeadHidden});
    head_w2 = params.add("head.fc2.w", {kHeadHidden, 2});
    head_b2 = params.add("head.fc2.b", {2});
    glorot_init(head_w1, rng, hd, kHeadHidden);
    glorot_init(head_w2, rng, kHeadHidden, 2);
  }
};

// N×2 logits for one window graph.
template <typename S>
Tensor<S> model_forward(Tape<S>* tape, const GraphArcs& g, const GraphInputs<S>& in,
                        const Model<S>& m) {
  Tensor<S> type_v, geom_v, visual;
  if (m.use_le()) {
    type_v = matmul(tape, in.type_onehot, m.embed.type_embed);
    geom_v = matmul(tape, in.geom_raw, m.embed.geom_embed);
  }
  if (m.use_vf()) visual = visual_features(tape, in, m.cnn);
  Tensor<S> init = fuse(tape, type_v, geom_v, visual, m.cfg.fusion);

  Tensor<S> head_in;
  if (m.cfg.kind == ModelKind::kNone) {
    head_in = init;
  } else {
    Tensor<S> h = linear(tape, init, m.proj_w, m.proj_b);
    for (const auto& l : m.gat_layers) h = l.forward(tape, g, h);
    for (const auto& l : m.gcn_layers) h = l.forward(tape, g, h);
    head_in = m.use_vf() ? concat_cols(tape, {h, visual}) : h;
  }
  Tensor<S> hidden = relu(tape, linear(tape, head_in, m.head_w1, m.head_b1));
  return linear(tape, hidden, m.head_w2, m.head_b2);
}

// Micro confusion counts over labeled nodes; positive class = fragmented.
struct Metrics {
  long long tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0, recall = 0, accuracy = 0, f1 = 0;
  bool precision_zero_den = false, recall_zero_den = false, f1_zero_den = false,
       accuracy_zero_den = false;

  void finalize() {
    precision_zero_den = tp + fp == 0;
    recall_zero_den = tp + fn == 0;
    accuracy_zero_den = tp + fp + fn + tn == 0;
    precision = precision_zero_den ? 0 : double(tp) / double(tp + fp);
    recall = recall_zero_den ? 0 : double(tp) / double(tp + fn);
    accuracy = accuracy_zero_den ? 0 : double(tp + tn) / double(tp + fp + fn + tn);
    f1_zero_den = precision + recall <= 0;
    f1 = f1_zero_den ? 0 : 2 * precision * recall / (precision + recall);
  }
};

// P(fragmented) per node from the 2-logit rows.
template <typename S>
std::vector<double> positive_probs(const Tensor<S>& logits) {
  std::vector<double> p(size_t(logits.dim(0)));
  for (int i = 0; i < logits.dim(0); ++i) {
    double a = double(logits.at(i, 0)), b = double(logits.at(i, 1));
    double mx = std::max(a, b);
    double ea = std::exp(a - mx), eb = std::exp(b - mx);
    p[size_t(i)] = eb / (ea + eb);
  }
  return p;
}

struct EvalResult {
  double loss = 0;
  Metrics metrics;
};

template <typename S>
EvalResult evaluate(const Model<S>& model, const std::vector<const GraphInstance*>& graphs,
                    double threshold = 0.5) {
  EvalResult r;
  int counted = 0;
  for (const auto* g : graphs) {
    Tensor<S> logits = model_forward<S>(nullptr, g->arcs, convert_inputs<S>(g->inputs), model);
    r.loss += double(cross_entropy<S>(nullptr, logits, g->labels, g->mask).data()[0]);
    ++counted;
    auto probs = positive_probs(logits);
    for (size_t i = 0; i < g->mask.size(); ++i) {
      if (!g->mask[i]) continue;
      bool pred = probs[i] > threshold;
      bool pos = g->labels[i] == 1;
      if (pred && pos) ++r.metrics.tp;
      else if (pred && !pos) ++r.metrics.fp;
      else if (!pred && pos) ++r.metrics.fn;
      else ++r.metrics.tn;
    }
  }
  if (counted) r.loss /= counted;
  r.metrics.finalize();
  return r;
}

struct SplitIds {
  std::vector<std::string> train, val, test;
};

// Shuffles artboards (not graphs) by seed and cuts them train/val/test, so
// all windows of an artboard land in one split.
inline SplitIds split_by_artboard(std::vector<std::string> ids, double train_ratio,
                                  double val_ratio, double test_ratio, uint64_t seed) {
  if ((val_ratio > 0 || test_ratio > 0) && ids.size() < 3)
    throw std::invalid_argument("split_by_artboard: fewer than 3 artboards (" +
                                std::to_string(ids.size()) + ")");
  (void)train_ratio;
  Rng rng(seed ^ 0x73706c6974ULL);
  rng.shuffle(ids);
  size_t n = ids.size();
  size_t n_val = val_ratio > 0 ? std::max<size_t>(1, size_t(double(n) * val_ratio)) : 0;
  size_t n_test = test_ratio > 0 ? std::max<size_t>(1, size_t(double(n) * test_ratio)) : 0;
  if (n_val + n_test >= n)
    throw std::invalid_argument("split_by_artboard: no artboards left for training");
  SplitIds s;
  s.train.assign(ids.begin(), ids.end() - long(n_val + n_test));
  s.val.assign(ids.end() - long(n_val + n_test), ids.end() - long(n_test));
  s.test.assign(ids.end() - long(n_test), ids.end());
  return s;
}

struct TrainConfig {
  uint64_t seed = 1;
  int epochs = 50;
  double lr = 1e-3;
  int patience = 10;
  double min_lr = 1e-6;
  double threshold = 0.5;
  double train_ratio = 0.8, val_ratio = 0.1, test_ratio = 0.1;
  // Stop once validation accuracy reaches this value; > 1 never triggers.
  double stop_accuracy = 2.0;
};

struct HistoryRow {
  int epoch = 0;
  double train_loss = 0, val_loss = 0;
  double val_precision = 0, val_recall = 0, val_accuracy = 0, val_f1 = 0;
  double lr = 0;
};

struct TrainOutcome {
  std::vector<HistoryRow> history;
  SplitIds split;
  int best_epoch = 0;
  double best_val_f1 = -1;
};

namespace detail {

inline std::vector<const GraphInstance*> graphs_of(const Dataset& ds,
                                                   const std::vector<std::string>& ids) {
  std::vector<const GraphInstance*> out;
  for (const auto& g : ds.graphs)
    for (const auto& id : ids)
      if (g.artboard_id == id) {
        out.push_back(&g);
        break;
      }
  return out;
}

}  // namespace detail

// Full-batch gradient step per graph, graphs visited in seeded shuffled
// order each epoch; Adam + plateau schedule; the best-validation-F1
// parameters are restored into the model before returning. val_ratio = 0
// trains and validates on the same graphs (overfit checks).
template <typename S>
TrainOutcome train(Model<S>& model, const Dataset& ds, const TrainConfig& cfg) {
  TrainOutcome out;
  out.split = split_by_artboard(ds.artboard_ids, cfg.train_ratio, cfg.val_ratio, cfg.test_ratio,
                                cfg.seed);
  auto train_graphs = detail::graphs_of(ds, out.split.train);
  auto val_graphs = cfg.val_ratio > 0 ? detail::graphs_of(ds, out.split.val) : train_graphs;
  if (train_graphs.empty()) throw std::invalid_argument("train: empty training split");
  if (val_graphs.empty()) throw std::invalid_argument("train: empty validation split");
  long long positives = 0;
  for (const auto* g : train_graphs) positives += g->n_positive;
  if (positives == 0)
    throw std::invalid_argument("train: no positive labels in the training split");

  AdamState<S> adam(model.params, cfg.lr);
  PlateauSchedule sched;
  sched.patience = cfg.patience;
  sched.floor_lr = cfg.min_lr;

  std::vector<size_t> order(train_graphs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng shuffler(cfg.seed ^ 0x65706f6368ULL);

  std::vector<std::vector<S>> best_params;
  auto snapshot = [&] {
    best_params.clear();
    for (const auto& e : model.params) best_params.push_back(e.tensor.values());
  };
  snapshot();  // epochs = 0 returns the initialization

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffler.shuffle(order);
    double train_loss = 0;
    for (size_t oi : order) {
      const GraphInstance* g = train_graphs[oi];
      model.params.zero_grad();
      Tape<S> tape;
      Tensor<S> logits = model_forward(&tape, g->arcs, convert_inputs<S>(g->inputs), model);
      Tensor<S> loss = cross_entropy(&tape, logits, g->labels, g->mask);
      train_loss += double(loss.data()[0]);
      tape.backward(loss);
      adam_step(model.params, adam);
    }
    train_loss /= double(train_graphs.size());

    EvalResult val = evaluate(model, val_graphs, cfg.threshold);
    HistoryRow row;
    row.epoch = epoch;
    row.train_loss = train_loss;
    row.val_loss = val.loss;
    row.val_precision = val.metrics.precision;
    row.val_recall = val.metrics.recall;
    row.val_accuracy = val.metrics.accuracy;
    row.val_f1 = val.metrics.f1;
    row.lr = adam.lr;
    out.history.push_back(row);

    if (val.metrics.f1 > out.best_val_f1) {
      out.best_val_f1 = val.metrics.f1;
      out.best_epoch = epoch;
      snapshot();
    }
    if (val.metrics.accuracy >= cfg.stop_accuracy) {
      snapshot();  // keep the parameters that reached the target
      out.best_epoch = epoch;
      out.best_val_f1 = std::max(out.best_val_f1, val.metrics.f1);
      break;
    }
    adam.lr = sched.update(val.loss, adam.lr);
  }

  // restore the best-validation parameters
  size_t i = 0;
  for (auto& e : model.params) e.tensor.values() = best_params[i++];
  return out;
}

}  // namespace layermerge
