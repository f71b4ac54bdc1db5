#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "layermerge/checkpoint.hpp"
#include "layermerge/dataset.hpp"
#include "layermerge/gnn.hpp"
#include "layermerge/gradcheck_suite.hpp"
#include "layermerge/graph_build.hpp"
#include "layermerge/io_util.hpp"
#include "layermerge/merge.hpp"
#include "layermerge/svg.hpp"
#include "layermerge/synthgen.hpp"

using namespace layermerge;
namespace fs = std::filesystem;

namespace {

fs::path parent_or_dot(const fs::path& p) {
  fs::path d = p.parent_path();
  return d.empty() ? fs::path(".") : d;
}

fs::path ensure_parent(const fs::path& p) {
  fs::path d = parent_or_dot(p);
  fs::create_directories(d);
  return d;
}

// artboard manifest + (optionally) its sibling screenshot
Artboard load_artboard(const fs::path& json_path) {
  return parse_artboard(read_file(json_path));
}

Screenshot load_sibling_screenshot(const fs::path& json_path, const Artboard& ab) {
  fs::path ppm = json_path;
  ppm.replace_extension(".ppm");
  if (!fs::exists(ppm))
    throw std::runtime_error("missing screenshot " + ppm.string() +
                             " (needed for visual features)");
  return load_screenshot(read_file(ppm), ab);
}

nlohmann::json metrics_json(const EvalResult& er, double threshold, size_t n_graphs) {
  return nlohmann::json{{"loss", er.loss},
                        {"precision", er.metrics.precision},
                        {"recall", er.metrics.recall},
                        {"accuracy", er.metrics.accuracy},
                        {"f1", er.metrics.f1},
                        {"tp", er.metrics.tp},
                        {"fp", er.metrics.fp},
                        {"fn", er.metrics.fn},
                        {"tn", er.metrics.tn},
                        {"n_graphs", n_graphs},
                        {"threshold", threshold}};
}

std::vector<const GraphInstance*> graphs_in(const Dataset& ds,
                                            const std::vector<std::string>& ids) {
  std::set<std::string> want(ids.begin(), ids.end());
  std::vector<const GraphInstance*> out;
  for (const auto& g : ds.graphs)
    if (want.count(g.artboard_id)) out.push_back(&g);
  return out;
}

struct GenOpts {
  std::string out;
  int n = 300;
  uint64_t seed = 1;
};

int cmd_gen(const GenOpts& o) {
  GenConfig cfg;
  cfg.n_artboards = o.n;
  cfg.seed = o.seed;
  GenSummary sum = gen_dataset(cfg, o.out);
  std::printf("generated %d artboards (%lld layers, %lld fragmented = %.1f%%, %lld groups) in %s\n",
              sum.artboards, sum.layers, sum.fragmented, 100.0 * sum.fragmented_fraction(),
              sum.groups, o.out.c_str());
  nlohmann::json flags{{"out", o.out}, {"n", o.n}, {"seed", o.seed}};
  write_run_manifest(o.out, "gen", flags, {(fs::path(o.out) / "dataset.json").string()});
  return 0;
}

struct TrainOpts {
  std::string data, out;
  std::string model = "gat", visual = "crop", features = "le+vf";
  int epochs = 50;
  uint64_t seed = 1;
  double lr = 1e-3, tau = 40.0, threshold = 0.5;
};

int cmd_train(const TrainOpts& o) {
  ModelConfig mc;
  mc.kind = model_kind_from_string(o.model);
  mc.visual = visual_method_from_string(o.visual);
  mc.fusion = fusion_mode_from_string(o.features);
  mc.seed = o.seed;
  bool want_pixels = mc.fusion != FusionMode::kLe;
  Dataset ds = load_dataset(o.data, mc.visual, want_pixels);

  Model<float> model(mc);
  TrainConfig tc;
  tc.seed = o.seed;
  tc.epochs = o.epochs;
  tc.lr = o.lr;
  tc.threshold = o.threshold;
  TrainOutcome outcome = train(model, ds, tc);

  fs::path ckpt(o.out);
  ensure_parent(ckpt);
  save_checkpoint(ckpt, model);
  fs::path history = ckpt;
  history.replace_extension(".history.csv");
  atomic_write_file(history, history_csv(outcome.history));

  std::printf("trained %s/%s/%s on %zu graphs (%zu artboards): best epoch %d, val f1 %.4f\n",
              o.model.c_str(), o.visual.c_str(), o.features.c_str(), ds.graphs.size(),
              ds.artboard_ids.size(), outcome.best_epoch, outcome.best_val_f1);
  auto test_graphs = graphs_in(ds, outcome.split.test);
  if (!test_graphs.empty()) {
    EvalResult er = evaluate(model, test_graphs, o.threshold);
    std::printf("test: precision %.4f recall %.4f accuracy %.4f f1 %.4f (loss %.4f)\n",
                er.metrics.precision, er.metrics.recall, er.metrics.accuracy, er.metrics.f1,
                er.loss);
  }

  nlohmann::json flags{{"data", o.data},       {"model", o.model},   {"visual", o.visual},
                       {"features", o.features}, {"epochs", o.epochs}, {"seed", o.seed},
                       {"lr", o.lr},           {"tau", o.tau},       {"threshold", o.threshold},
                       {"out", o.out}};
  write_run_manifest(parent_or_dot(ckpt), "train", flags, {ckpt.string(), history.string()});
  return 0;
}

struct EvalOpts {
  std::string data, checkpoint, out;
  double threshold = 0.5;
};

int cmd_eval(const EvalOpts& o) {
  Model<float> model = load_checkpoint(o.checkpoint);
  bool want_pixels = model.cfg.fusion != FusionMode::kLe;
  Dataset ds = load_dataset(o.data, model.cfg.visual, want_pixels);
  std::vector<const GraphInstance*> graphs;
  for (const auto& g : ds.graphs) graphs.push_back(&g);
  EvalResult er = evaluate(model, graphs, o.threshold);
  nlohmann::json j = metrics_json(er, o.threshold, graphs.size());
  ensure_parent(o.out);
  atomic_write_file(o.out, j.dump(2) + "\n");
  std::printf("eval %zu graphs: precision %.4f recall %.4f accuracy %.4f f1 %.4f\n",
              graphs.size(), er.metrics.precision, er.metrics.recall, er.metrics.accuracy,
              er.metrics.f1);
  nlohmann::json flags{{"data", o.data},
                       {"checkpoint", o.checkpoint},
                       {"threshold", o.threshold},
                       {"out", o.out}};
  write_run_manifest(parent_or_dot(o.out), "eval", flags, {o.out});
  return 0;
}

struct DetectOpts {
  std::string artboard, checkpoint, out;
  double threshold = 0.5;
};

int cmd_detect(const DetectOpts& o) {
  Model<float> model = load_checkpoint(o.checkpoint);
  Artboard ab = load_artboard(o.artboard);
  bool want_pixels = model.cfg.fusion != FusionMode::kLe;
  Screenshot shot;
  if (want_pixels) shot = load_sibling_screenshot(o.artboard, ab);
  WindowedArtboard wab = scale_and_window(ab, want_pixels ? &shot : nullptr);

  nlohmann::json windows = nlohmann::json::array();
  for (const auto& win : wab.windows) {
    ContainmentTree tree = build_containment_tree(win);
    GraphArcs arcs = flatten_arcs(build_graph(tree));
    GraphInputs<float> in = make_graph_inputs<float>(
        win, tree, win.patch.data.empty() ? nullptr : &win.patch, model.cfg.visual);
    Tensor<float> logits = model_forward<float>(nullptr, arcs, in, model);
    std::vector<double> probs = positive_probs(logits);

    nlohmann::json layers = nlohmann::json::array();
    std::vector<double> member_prob(win.members.size(), 0.0);
    for (int n = 0; n < tree.size(); ++n)
      if (tree.nodes[size_t(n)].member >= 0)
        member_prob[size_t(tree.nodes[size_t(n)].member)] = probs[size_t(n)];
    for (size_t m = 0; m < win.members.size(); ++m)
      layers.push_back({{"id", win.members[m].id},
                        {"prob", member_prob[m]},
                        {"label", member_prob[m] > o.threshold ? 1 : 0}});
    windows.push_back({{"index", win.index}, {"layers", layers}});
  }
  nlohmann::json j{{"artboard", ab.id}, {"windows", windows}};
  ensure_parent(o.out);
  atomic_write_file(o.out, j.dump(2) + "\n");
  std::printf("detect %s: %zu windows -> %s\n", ab.id.c_str(), wab.windows.size(), o.out.c_str());
  nlohmann::json flags{{"artboard", o.artboard},
                       {"checkpoint", o.checkpoint},
                       {"threshold", o.threshold},
                       {"out", o.out}};
  write_run_manifest(parent_or_dot(o.out), "detect", flags, {o.out});
  return 0;
}

struct MergeOpts {
  std::string artboard, detections, out;
  bool oracle_labels = false;
  double tau = 40.0;
};

int cmd_merge(const MergeOpts& o) {
  if (o.oracle_labels == !o.detections.empty())
    throw std::runtime_error("merge needs exactly one of --detections or --oracle-labels");
  Artboard ab = load_artboard(o.artboard);
  WindowedArtboard wab = scale_and_window(ab, nullptr);

  // positives per window index
  std::map<int, std::set<std::string>> positives;
  if (o.oracle_labels) {
    for (const auto& win : wab.windows)
      for (const auto& m : win.members) {
        auto it = ab.labels.find(m.id);
        if (it != ab.labels.end() && it->second.fragmented) positives[win.index].insert(m.id);
      }
  } else {
    nlohmann::json det = nlohmann::json::parse(read_file(o.detections));
    if (det.at("artboard").get<std::string>() != ab.id)
      throw std::runtime_error("detections are for artboard '" +
                               det.at("artboard").get<std::string>() + "', not '" + ab.id + "'");
    std::set<int> known;
    for (const auto& win : wab.windows) known.insert(win.index);
    for (const auto& wj : det.at("windows")) {
      int idx = wj.at("index").get<int>();
      if (!known.count(idx))
        throw std::runtime_error("detection window " + std::to_string(idx) +
                                 " not produced by this artboard");
      for (const auto& lj : wj.at("layers"))
        if (lj.at("label").get<int>() == 1)
          positives[idx].insert(lj.at("id").get<std::string>());
    }
  }

  MergeConfig mc;
  mc.tau = o.tau;
  nlohmann::json windows = nlohmann::json::array();
  size_t n_groups = 0;
  for (const auto& win : wab.windows) {
    ContainmentTree tree = build_containment_tree(win);
    auto it = positives.find(win.index);
    MergeResult r = merge_fragments(win, tree, it == positives.end() ? std::set<std::string>{} : it->second, mc);
    n_groups += r.groups.size();
    windows.push_back(merge_result_to_json(win.index, r));
  }
  nlohmann::json j{{"artboard", ab.id}, {"tau", o.tau}, {"windows", windows}};
  ensure_parent(o.out);
  atomic_write_file(o.out, j.dump(2) + "\n");
  std::printf("merge %s: %zu groups across %zu windows -> %s\n", ab.id.c_str(), n_groups,
              wab.windows.size(), o.out.c_str());
  nlohmann::json flags{{"artboard", o.artboard},
                       {"detections", o.detections},
                       {"oracle_labels", o.oracle_labels},
                       {"tau", o.tau},
                       {"out", o.out}};
  write_run_manifest(parent_or_dot(o.out), "merge", flags, {o.out});
  return 0;
}

struct RenderOpts {
  std::string artboard, merges, out;
};

int cmd_render(const RenderOpts& o) {
  Artboard ab = load_artboard(o.artboard);
  nlohmann::json mj = nlohmann::json::parse(read_file(o.merges));
  if (mj.at("artboard").get<std::string>() != ab.id)
    throw std::runtime_error("merge file is for artboard '" +
                             mj.at("artboard").get<std::string>() + "', not '" + ab.id + "'");
  std::vector<std::pair<int, MergeResult>> per_window;
  for (const auto& wj : mj.at("windows")) {
    MergeResult r;
    for (const auto& gj : wj.at("groups")) {
      MergeGroup g;
      g.id = gj.at("id").get<std::string>();
      g.members = gj.at("members").get<std::vector<std::string>>();
      const auto& b = gj.at("bounds");
      g.bounds = {b.at("x").get<double>(), b.at("y").get<double>(), b.at("w").get<double>(),
                  b.at("h").get<double>()};
      r.groups.push_back(std::move(g));
    }
    r.singletons = wj.at("singletons").get<std::vector<std::string>>();
    per_window.push_back({wj.at("window").get<int>(), std::move(r)});
  }
  ensure_parent(o.out);
  atomic_write_file(o.out, render_groups_svg(ab, per_window));
  std::printf("render %s -> %s\n", ab.id.c_str(), o.out.c_str());
  nlohmann::json flags{{"artboard", o.artboard}, {"merges", o.merges}, {"out", o.out}};
  write_run_manifest(parent_or_dot(o.out), "render", flags, {o.out});
  return 0;
}

int cmd_gradcheck() {
  SuiteResult r = run_gradient_suite();
  for (const auto& c : r.checks)
    std::printf("%-18s max_rel %.3e (%d probes, worst %s) %s\n", c.name.c_str(),
                c.report.max_rel, c.report.checked, c.report.worst.c_str(),
                c.report.pass(r.tolerance) ? "ok" : "FAIL");
  std::printf("%s: %zu checks, tolerance %g\n", r.all_pass() ? "PASS" : "FAIL",
              r.checks.size(), r.tolerance);
  return r.all_pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fragmented-layer detection and merging for design drafts"};
  app.require_subcommand(1);

  GenOpts g;
  CLI::App* gen = app.add_subcommand("gen", "generate a labeled synthetic dataset");
  gen->add_option("--out", g.out, "output directory")->required();
  gen->add_option("--n", g.n, "number of artboards");
  gen->add_option("--seed", g.seed, "master seed");

  TrainOpts t;
  CLI::App* train = app.add_subcommand("train", "train a detector");
  train->add_option("--data", t.data, "dataset directory")->required();
  train->add_option("--model", t.model, "gat|gcn|none");
  train->add_option("--visual", t.visual, "crop|roi");
  train->add_option("--features", t.features, "le|vf|le+vf");
  train->add_option("--epochs", t.epochs, "max training epochs");
  train->add_option("--seed", t.seed, "init/shuffle/split seed");
  train->add_option("--lr", t.lr, "initial learning rate");
  train->add_option("--tau", t.tau, "merge distance threshold (recorded for downstream merge)");
  train->add_option("--threshold", t.threshold, "positive probability threshold");
  train->add_option("--out", t.out, "checkpoint path")->required();

  EvalOpts e;
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval->add_option("--data", e.data, "dataset directory")->required();
  eval->add_option("--checkpoint", e.checkpoint, "trained checkpoint")->required();
  eval->add_option("--threshold", e.threshold, "positive probability threshold");
  eval->add_option("--out", e.out, "metrics JSON path")->required();

  DetectOpts d;
  CLI::App* detect = app.add_subcommand("detect", "per-layer fragmented probabilities");
  detect->add_option("--artboard", d.artboard, "artboard manifest (.json)")->required();
  detect->add_option("--checkpoint", d.checkpoint, "trained checkpoint")->required();
  detect->add_option("--threshold", d.threshold, "positive probability threshold");
  detect->add_option("--out", d.out, "detection JSON path")->required();

  MergeOpts m;
  CLI::App* merge = app.add_subcommand("merge", "cluster positive layers into merge groups");
  merge->add_option("--artboard", m.artboard, "artboard manifest (.json)")->required();
  merge->add_option("--detections", m.detections, "detection JSON from `detect`");
  merge->add_flag("--oracle-labels", m.oracle_labels, "use ground-truth labels instead");
  merge->add_option("--tau", m.tau, "center-distance threshold (design px)");
  merge->add_option("--out", m.out, "merge JSON path")->required();

  RenderOpts r;
  CLI::App* render = app.add_subcommand("render", "draw merge groups as an SVG overlay");
  render->add_option("--artboard", r.artboard, "artboard manifest (.json)")->required();
  render->add_option("--merges", r.merges, "merge JSON from `merge`")->required();
  render->add_option("--out", r.out, "SVG path")->required();

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient self-check");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(g);
    if (train->parsed()) return cmd_train(t);
    if (eval->parsed()) return cmd_eval(e);
    if (detect->parsed()) return cmd_detect(d);
    if (merge->parsed()) return cmd_merge(m);
    if (render->parsed()) return cmd_render(r);
    if (gradcheck->parsed()) return cmd_gradcheck();
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "layermerge: %s\n", ex.what());
    return 1;
  }
  return 1;
}
