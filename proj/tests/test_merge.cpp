#include <catch_amalgamated.hpp>

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "layermerge/graph_build.hpp"
#include "layermerge/merge.hpp"
#include "layermerge/rng.hpp"
#include "oracles.hpp"

using namespace layermerge;

namespace {

Window make_window(const std::vector<Rect>& rects) {
  Window w;
  w.index = 0;
  for (size_t i = 0; i < rects.size(); ++i) {
    WindowLayer l;
    l.id = "L" + std::to_string(i);
    l.name = l.id;
    l.type = LayerType::kRectangle;
    l.rect = rects[i];
    l.z = int(i);
    w.members.push_back(l);
  }
  return w;
}

Window random_window(Rng& rng, int n) {
  Window w;
  w.index = 0;
  for (int i = 0; i < n; ++i) {
    WindowLayer l;
    l.id = "L" + std::to_string(i);
    l.name = l.id;
    l.type = LayerType::kRectangle;
    l.z = i;
    if (i > 0 && rng.chance(0.45)) {
      // nest inside an earlier layer so rule 2 has real material
      const Rect& pr = w.members[size_t(rng.uniform_int(0, i - 1))].rect;
      double mw = std::min(pr.w, std::max(3.0, pr.w * rng.uniform(0.2, 0.8)));
      double mh = std::min(pr.h, std::max(3.0, pr.h * rng.uniform(0.2, 0.8)));
      l.rect = {pr.x + rng.uniform(0, pr.w - mw), pr.y + rng.uniform(0, pr.h - mh), mw, mh};
    } else {
      double rw = rng.uniform(8, 200), rh = rng.uniform(8, 200);
      l.rect = {rng.uniform(0, 750 - rw), rng.uniform(0, 750 - rh), rw, rh};
    }
    w.members.push_back(l);
  }
  return w;
}

using Partition = std::set<std::set<std::string>>;

Partition result_partition(const MergeResult& r) {
  Partition p;
  for (const auto& g : r.groups) p.insert({g.members.begin(), g.members.end()});
  for (const auto& s : r.singletons) p.insert({s});
  return p;
}

// Independent partition: union-find over the literal pair rules, with
// parenthood recomputed by exhaustive scan.
Partition oracle_partition(const Window& w, const std::set<std::string>& positives, double tau) {
  std::vector<int> pos;
  for (size_t i = 0; i < w.members.size(); ++i)
    if (positives.count(w.members[i].id)) pos.push_back(int(i));
  int P = int(pos.size());
  oracles::UnionFind uf(P);
  for (int a = 0; a < P; ++a)
    for (int b = a + 1; b < P; ++b)
      if (center_distance(w.members[size_t(pos[size_t(a)])].rect,
                          w.members[size_t(pos[size_t(b)])].rect) < tau)
        uf.unite(a, b);
  std::vector<int> parent = oracles::brute_force_parents(w.members);
  std::map<int, int> member_to_p;
  for (int p = 0; p < P; ++p) member_to_p[pos[size_t(p)]] = p;
  for (int p = 0; p < P; ++p) {
    int par = parent[size_t(pos[size_t(p)])];
    if (par >= 0 && member_to_p.count(par)) uf.unite(p, member_to_p[par]);
  }
  std::map<int, std::set<std::string>> comps;
  for (int p = 0; p < P; ++p) comps[uf.find(p)].insert(w.members[size_t(pos[size_t(p)])].id);
  Partition out;
  for (auto& [root, ids] : comps) out.insert(ids);
  return out;
}

MergeResult run_merge(const Window& w, const std::set<std::string>& positives, double tau = 40) {
  ContainmentTree tree = build_containment_tree(w);
  MergeConfig cfg;
  cfg.tau = tau;
  return merge_fragments(w, tree, positives, cfg);
}

}  // namespace

TEST_CASE("merging an empty positive set yields nothing") {
  Window w = make_window({{10, 10, 50, 50}, {15, 15, 20, 20}});
  MergeResult r = run_merge(w, {});
  CHECK(r.groups.empty());
  CHECK(r.singletons.empty());
}

TEST_CASE("two nearby positive leaves form one group") {
  // 20x20 squares, centers (20,20) and (30,20): distance 10 < 40
  Window w = make_window({{10, 10, 20, 20}, {20, 10, 20, 20}});
  MergeResult r = run_merge(w, {"L0", "L1"});
  REQUIRE(r.groups.size() == 1);
  CHECK(r.singletons.empty());
  CHECK(r.groups[0].id == "g0");
  CHECK(r.groups[0].members == std::vector<std::string>{"L0", "L1"});
  Rect b = r.groups[0].bounds;
  CHECK(b.x == 10);
  CHECK(b.y == 10);
  CHECK(b.w == 30);
  CHECK(b.h == 20);
}

TEST_CASE("the distance threshold is strict") {
  // centers exactly 40 apart: no merge at tau=40, merge at tau=40.0001
  Window w = make_window({{0, 0, 20, 20}, {40, 0, 20, 20}});
  MergeResult at = run_merge(w, {"L0", "L1"}, 40);
  CHECK(at.groups.empty());
  CHECK(at.singletons.size() == 2);
  MergeResult above = run_merge(w, {"L0", "L1"}, 40.0001);
  CHECK(above.groups.size() == 1);
}

TEST_CASE("a positive container bridges distant positive children") {
  // children centers are ~500px apart, far beyond tau, but both are direct
  // children of the positive container
  Window w = make_window({{0, 0, 600, 300}, {10, 10, 50, 50}, {500, 220, 80, 60}});
  MergeResult r = run_merge(w, {"L0", "L1", "L2"});
  REQUIRE(r.groups.size() == 1);
  CHECK(r.groups[0].members == std::vector<std::string>{"L0", "L1", "L2"});
  CHECK(r.singletons.empty());
}

TEST_CASE("a negative container does not bridge its children") {
  Window w = make_window({{0, 0, 600, 300}, {10, 10, 50, 50}, {500, 220, 80, 60}});
  MergeResult r = run_merge(w, {"L1", "L2"});
  CHECK(r.groups.empty());
  CHECK(r.singletons == std::vector<std::string>{"L1", "L2"});
}

TEST_CASE("containment merging only spans direct children") {
  // grandparent L0 > middle L1 (negative) > grandchild L2; everything far
  // apart in centers, so without a direct edge nothing merges
  Window w = make_window({{0, 0, 700, 700}, {400, 400, 280, 280}, {600, 600, 20, 20}});
  MergeResult r = run_merge(w, {"L0", "L2"});
  CHECK(r.groups.empty());
  CHECK(r.singletons == std::vector<std::string>{"L0", "L2"});
}

TEST_CASE("proximity chains merge transitively") {
  // L0-L1 close, L1-L2 close, L0-L2 far: still one component
  Window w = make_window({{0, 0, 10, 10}, {30, 0, 10, 10}, {60, 0, 10, 10}});
  REQUIRE(center_distance(w.members[0].rect, w.members[2].rect) >= 40);
  MergeResult r = run_merge(w, {"L0", "L1", "L2"});
  REQUIRE(r.groups.size() == 1);
  CHECK(r.groups[0].members.size() == 3);
}

TEST_CASE("negative layers never appear in the output") {
  Rng rng(901);
  for (int trial = 0; trial < 20; ++trial) {
    Window w = random_window(rng, int(rng.uniform_int(3, 15)));
    std::set<std::string> positives;
    for (const auto& m : w.members)
      if (rng.chance(0.4)) positives.insert(m.id);
    MergeResult r = run_merge(w, positives);
    std::set<std::string> out_ids;
    for (const auto& g : r.groups) {
      CHECK(g.members.size() >= 2);
      for (const auto& id : g.members) {
        CHECK(positives.count(id) == 1);
        CHECK(out_ids.insert(id).second);  // partition: no duplicates
      }
    }
    for (const auto& id : r.singletons) {
      CHECK(positives.count(id) == 1);
      CHECK(out_ids.insert(id).second);
    }
    CHECK(out_ids == positives);  // partition: everything covered
  }
}

TEST_CASE("500 random instances match the union-find oracle") {
  Rng rng(77);
  const double taus[] = {15, 40, 90};
  for (int trial = 0; trial < 500; ++trial) {
    Window w = random_window(rng, int(rng.uniform_int(2, 24)));
    std::set<std::string> positives;
    for (const auto& m : w.members)
      if (rng.chance(0.5)) positives.insert(m.id);
    double tau = taus[rng.uniform_int(0, 2)];
    MergeResult r = run_merge(w, positives, tau);
    REQUIRE(result_partition(r) == oracle_partition(w, positives, tau));
  }
}

TEST_CASE("growing tau only coarsens the partition") {
  Rng rng(4031);
  for (int trial = 0; trial < 40; ++trial) {
    Window w = random_window(rng, int(rng.uniform_int(4, 20)));
    std::set<std::string> positives;
    for (const auto& m : w.members)
      if (rng.chance(0.5)) positives.insert(m.id);
    if (positives.empty()) continue;
    Partition prev;
    bool first = true;
    for (double tau : {10.0, 30.0, 60.0, 120.0, 400.0}) {
      Partition cur = result_partition(run_merge(w, positives, tau));
      if (!first) {
        CHECK(cur.size() <= prev.size());
        for (const auto& small : prev) {
          bool contained = false;
          for (const auto& big : cur)
            if (std::includes(big.begin(), big.end(), small.begin(), small.end()))
              contained = true;
          CHECK(contained);  // refinement: old cells stay together
        }
      }
      prev = std::move(cur);
      first = false;
    }
  }
}

TEST_CASE("the grouping ignores positive iteration order") {
  // same geometry, members listed in reversed order (ids follow the rects)
  std::vector<Rect> rects{{0, 0, 600, 300}, {10, 10, 50, 50}, {500, 220, 80, 60},
                          {300, 50, 30, 30}, {320, 60, 30, 30}};
  Window fwd = make_window(rects);
  Window rev;
  rev.index = 0;
  for (int i = int(rects.size()) - 1; i >= 0; --i) {
    WindowLayer l = fwd.members[size_t(i)];
    rev.members.push_back(l);  // keep id, rect and z attached together
  }
  std::set<std::string> positives{"L0", "L1", "L2", "L3", "L4"};
  Partition a = result_partition(run_merge(fwd, positives));
  Partition b = result_partition(run_merge(rev, positives));
  CHECK(a == b);
}

TEST_CASE("group ids are assigned in discovery order") {
  // two separate pairs: first pair seen first gets g0
  Window w = make_window({{0, 0, 10, 10}, {12, 0, 10, 10}, {500, 500, 10, 10}, {512, 500, 10, 10}});
  MergeResult r = run_merge(w, {"L0", "L1", "L2", "L3"});
  REQUIRE(r.groups.size() == 2);
  CHECK(r.groups[0].id == "g0");
  CHECK(r.groups[0].members == std::vector<std::string>{"L0", "L1"});
  CHECK(r.groups[1].id == "g1");
  CHECK(r.groups[1].members == std::vector<std::string>{"L2", "L3"});
}

TEST_CASE("group bounds hull the member rectangles") {
  CHECK_THROWS_AS(group_bounds({}), std::invalid_argument);
  Rect one = group_bounds({{5, 6, 7, 8}});
  CHECK(one == Rect{5, 6, 7, 8});
  Rect two = group_bounds({{0, 0, 10, 10}, {20, 5, 10, 25}});
  CHECK(two == Rect{0, 0, 30, 30});
  // hull contains every input
  Rng rng(15);
  std::vector<Rect> rects;
  for (int i = 0; i < 12; ++i)
    rects.push_back({rng.uniform(0, 700), rng.uniform(0, 700), rng.uniform(1, 50), rng.uniform(1, 50)});
  Rect h = group_bounds(rects);
  for (const auto& r : rects) CHECK(h.contains(r));
}

TEST_CASE("merge results serialize with the documented shape") {
  Window w = make_window({{10, 10, 20, 20}, {20, 10, 20, 20}, {700, 700, 10, 10}});
  MergeResult r = run_merge(w, {"L0", "L1", "L2"});
  nlohmann::json j = merge_result_to_json(3, r);
  CHECK(j["window"] == 3);
  REQUIRE(j["groups"].size() == 1);
  CHECK(j["groups"][0]["id"] == "g0");
  CHECK(j["groups"][0]["members"] == std::vector<std::string>{"L0", "L1"});
  CHECK(j["groups"][0]["bounds"]["x"] == 10.0);
  CHECK(j["groups"][0]["bounds"]["w"] == 30.0);
  CHECK(j["singletons"] == std::vector<std::string>{"L2"});
}

TEST_CASE("merge rejects bad arguments") {
  Window w = make_window({{10, 10, 20, 20}, {20, 10, 20, 20}});
  ContainmentTree tree = build_containment_tree(w);
  MergeConfig bad;
  bad.tau = 0;
  CHECK_THROWS_WITH(merge_fragments(w, tree, {}, bad),
                    Catch::Matchers::ContainsSubstring("tau must be positive"));
  bad.tau = -4;
  CHECK_THROWS_WITH(merge_fragments(w, tree, {}, bad),
                    Catch::Matchers::ContainsSubstring("tau must be positive"));
  CHECK_THROWS_WITH(merge_fragments(w, tree, {"nope"}),
                    Catch::Matchers::ContainsSubstring("'nope' is not in this window"));
  Window other = make_window({{0, 0, 5, 5}});
  CHECK_THROWS_WITH(merge_fragments(other, tree, {}),
                    Catch::Matchers::ContainsSubstring("does not belong"));
}
