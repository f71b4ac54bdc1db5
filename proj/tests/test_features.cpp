#include <catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <vector>

#include "layermerge/features.hpp"
#include "layermerge/gradcheck.hpp"
#include "layermerge/graph_build.hpp"
#include "layermerge/rng.hpp"
#include "oracles.hpp"

using namespace layermerge;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::MessageMatches;
using Catch::Matchers::WithinAbs;

namespace {

Window make_window(int index, std::vector<Rect> rects) {
  Window w;
  w.index = index;
  int z = 0;
  for (const auto& r : rects) {
    WindowLayer l;
    l.id = "L" + std::to_string(z);
    l.name = l.id;
    l.type = LayerType::kRectangle;
    l.rect = r;
    l.z = z++;
    w.members.push_back(l);
  }
  return w;
}

FloatImage random_patch(uint64_t seed, int h = 750, int w = 750) {
  FloatImage img;
  img.channels = 3;
  img.height = h;
  img.width = w;
  img.data.assign(size_t(3) * h * w, 0.f);
  Rng rng(seed);
  for (auto& v : img.data) v = float(rng.uniform());
  return img;
}

}  // namespace

TEST_CASE("raw geometry normalizes against the window origin") {
  Window w0 = make_window(0, {});
  auto full = raw_geometry({0, 0, 750, 750}, w0);
  CHECK(full == std::array<double, 4>{0, 0, 1, 1});

  auto mid = raw_geometry({375, 375, 75, 75}, w0);
  CHECK_THAT(mid[0], WithinAbs(0.5, 1e-12));
  CHECK_THAT(mid[1], WithinAbs(0.5, 1e-12));
  CHECK_THAT(mid[2], WithinAbs(0.1, 1e-12));
  CHECK_THAT(mid[3], WithinAbs(0.1, 1e-12));

  // window 1 starts at y = 750; same relative placement, same vector
  Window w1 = make_window(1, {});
  auto shifted = raw_geometry({375, 1125, 75, 75}, w1);
  for (int i = 0; i < 4; ++i) CHECK_THAT(shifted[size_t(i)], WithinAbs(mid[size_t(i)], 1e-12));

  // overflowing layers may leave [0,1]
  auto over = raw_geometry({-75, 0, 900, 750}, w0);
  CHECK(over[0] < 0);
  CHECK(over[2] > 1);
}

TEST_CASE("geometry encoding with an identity matrix returns the raw vector") {
  Tensor<double> eye({4, 4});
  for (int i = 0; i < 4; ++i) eye.at(i, i) = 1;
  Window w0 = make_window(0, {});
  Tensor<double> enc = encode_geometry<double>(nullptr, {375, 375, 75, 75}, w0, eye);
  REQUIRE(enc.shape() == std::vector<int>{1, 4});
  CHECK_THAT(enc.at(0, 0), WithinAbs(0.5, 1e-12));
  CHECK_THAT(enc.at(0, 1), WithinAbs(0.5, 1e-12));
  CHECK_THAT(enc.at(0, 2), WithinAbs(0.1, 1e-12));
  CHECK_THAT(enc.at(0, 3), WithinAbs(0.1, 1e-12));
}

TEST_CASE("type encoding selects the embedding row") {
  ParamSet<float> ps;
  Rng rng(7);
  EmbeddingParams<float> embed(ps, rng);
  // make the matrix identity-like so row selection is visible
  embed.type_embed.values().assign(embed.type_embed.numel(), 0.f);
  for (int t = 0; t < kLayerTypeCount; ++t) embed.type_embed.at(t, t) = 1.f;

  for (int t = 0; t < kLayerTypeCount; ++t) {
    Tensor<float> v = encode_type<float>(nullptr, LayerType(t), embed);
    REQUIRE(v.shape() == std::vector<int>{1, kTypeDim});
    for (int j = 0; j < kTypeDim; ++j) CHECK(v.at(0, j) == (j == t ? 1.f : 0.f));
  }

  Tensor<float> a = encode_type<float>(nullptr, LayerType::kText, embed);
  Tensor<float> b = encode_type<float>(nullptr, LayerType::kText, embed);
  CHECK(a.values() == b.values());

  embed.type_embed.values().assign(embed.type_embed.numel(), 0.f);
  Tensor<float> z = encode_type<float>(nullptr, LayerType::kOval, embed);
  for (float v : z.values()) CHECK(v == 0.f);
}

TEST_CASE("crop of an exactly 64x64 region is an identity copy") {
  FloatImage patch = random_patch(11);
  Window w0 = make_window(0, {});
  FloatImage crop = crop_resize(patch, {100, 200, 64, 64}, w0);
  REQUIRE(crop.height == 64);
  REQUIRE(crop.width == 64);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        REQUIRE(crop.at(c, y, x) == patch.at(c, 200 + y, 100 + x));
}

TEST_CASE("crop of a uniform region is uniform at any size") {
  FloatImage patch;
  patch.channels = 3;
  patch.height = 750;
  patch.width = 750;
  patch.data.assign(size_t(3) * 750 * 750, 0.f);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 750; ++y)
      for (int x = 0; x < 750; ++x) patch.at(c, y, x) = 0.1f * float(c + 1);
  Window w0 = make_window(0, {});
  for (Rect r : {Rect{3, 5, 17, 230}, Rect{0, 0, 750, 750}, Rect{700, 700, 100, 100}}) {
    FloatImage crop = crop_resize(patch, r, w0);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
          REQUIRE_THAT(crop.at(c, y, x), WithinAbs(0.1 * (c + 1), 1e-6));
  }
}

TEST_CASE("2x2 checkerboard resized to 4x4 matches the hand bilinear weights") {
  // block at (10,10): [A B; C D] per channel, zero background
  const double A = 0.8, B = 0.2, C = 0.4, D = 0.6;
  FloatImage patch;
  patch.channels = 3;
  patch.height = 750;
  patch.width = 750;
  patch.data.assign(size_t(3) * 750 * 750, 0.f);
  for (int c = 0; c < 3; ++c) {
    patch.at(c, 10, 10) = float(A);
    patch.at(c, 10, 11) = float(B);
    patch.at(c, 11, 10) = float(C);
    patch.at(c, 11, 11) = float(D);
  }
  Window w0 = make_window(0, {});
  Rect region{10, 10, 2, 2};
  FloatImage out = resample_region(patch, region, 4, 4);

  // output centers land at source offsets {.25,.75,1.25,1.75}; with
  // half-pixel centers the block-column weights per output column are:
  const double w0c[4] = {0.75, 0.75, 0.25, 0.0};  // weight on column 10
  const double w1c[4] = {0.0, 0.25, 0.75, 0.75};  // weight on column 11
  for (int c = 0; c < 3; ++c)
    for (int oy = 0; oy < 4; ++oy)
      for (int ox = 0; ox < 4; ++ox) {
        double expect = w0c[oy] * (w0c[ox] * A + w1c[ox] * B) +
                        w1c[oy] * (w0c[ox] * C + w1c[ox] * D);
        REQUIRE_THAT(double(out.at(c, oy, ox)), WithinAbs(expect, 1e-6));
      }
}

TEST_CASE("crops clipped to nothing give the zero tensor") {
  FloatImage patch = random_patch(3);
  Window w0 = make_window(0, {});
  FloatImage crop = crop_resize(patch, {-100, -100, 50, 50}, w0);
  for (float v : crop.data) CHECK(v == 0.f);
}

TEST_CASE("crop features are translation invariant") {
  Window w0 = make_window(0, {});
  FloatImage stamp = random_patch(21, 40, 30);  // the opaque layer's pixels

  auto stamped = [&](double x0, double y0) {
    FloatImage patch;
    patch.channels = 3;
    patch.height = 750;
    patch.width = 750;
    patch.data.assign(size_t(3) * 750 * 750, 0.25f);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < stamp.height; ++y)
        for (int x = 0; x < stamp.width; ++x)
          patch.at(c, int(y0) + y, int(x0) + x) = stamp.at(c, y, x);
    return crop_resize(patch, {x0, y0, double(stamp.width), double(stamp.height)}, w0);
  };

  FloatImage a = stamped(100, 150);
  FloatImage b = stamped(412, 583);
  REQUIRE(a.data.size() == b.data.size());
  for (size_t i = 0; i < a.data.size(); ++i) REQUIRE(a.data[i] == b.data[i]);
}

TEST_CASE("roi pooling of a constant map is constant") {
  Tensor<float> fmap({2, 8, 8}, 0.7f);
  Tensor<float> out = roi_maxpool<float>(nullptr, fmap, {0, 0, 8, 8});
  REQUIRE(out.shape() == std::vector<int>{2, 5, 5});
  for (float v : out.values()) CHECK(v == 0.7f);
}

TEST_CASE("roi over exactly 5x5 cells is the identity") {
  Tensor<float> fmap({1, 5, 5});
  for (int i = 0; i < 25; ++i) fmap.data()[size_t(i)] = float(i) * 0.3f - 2.f;
  Tensor<float> out = roi_maxpool<float>(nullptr, fmap, {0, 0, 5, 5});
  CHECK(out.values() == fmap.values());
}

TEST_CASE("roi pooling matches the exhaustive-max oracle on random rects") {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor<float> fmap({1, 10, 10});
    for (auto& v : fmap.values()) v = float(rng.uniform(-1, 1));
    Rect r{rng.uniform(-3, 9), rng.uniform(-3, 9), rng.uniform(0.5, 12), rng.uniform(0.5, 12)};
    Tensor<float> out = roi_maxpool<float>(nullptr, fmap, r);
    std::vector<float> expect =
        oracles::roi_reference(fmap.data(), 1, 10, 10, r.x, r.y, r.w, r.h, 5);
    REQUIRE(out.values().size() == expect.size());
    for (size_t i = 0; i < expect.size(); ++i) REQUIRE(out.values()[i] == expect[i]);
  }
}

TEST_CASE("roi pooling is monotone in its input cells") {
  Rng rng(5);
  Tensor<float> fmap({1, 10, 10});
  for (auto& v : fmap.values()) v = float(rng.uniform(-1, 1));
  Rect r{1.3, 2.7, 6.4, 5.1};
  Tensor<float> base = roi_maxpool<float>(nullptr, fmap, r);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor<float> bumped = Tensor<float>::from(fmap.shape(), fmap.values());
    bumped.data()[size_t(rng.uniform_int(0, 99))] += float(rng.uniform(0, 2));
    Tensor<float> out = roi_maxpool<float>(nullptr, bumped, r);
    for (size_t i = 0; i < out.numel(); ++i) REQUIRE(out.values()[i] >= base.values()[i]);
  }
}

TEST_CASE("roi of a rect entirely outside the map is zero") {
  Tensor<float> fmap({2, 10, 10}, 1.f);
  for (Rect r : {Rect{20, 20, 5, 5}, Rect{-9, -9, 4, 4}, Rect{0, 15, 10, 3}}) {
    Tensor<float> out = roi_maxpool<float>(nullptr, fmap, r);
    for (float v : out.values()) CHECK(v == 0.f);
  }
}

TEST_CASE("roi pooling gradients match finite differences") {
  Rng rng(13);
  Tensor<double> fmap({2, 6, 6});
  for (auto& v : fmap.values()) v = rng.uniform(-1, 1);
  Rect r{0.8, 1.2, 4.5, 3.9};
  std::vector<double> w(2 * 5 * 5);
  for (auto& v : w) v = rng.uniform(-1, 1);
  auto rep = fd_check<double>({{"fmap", fmap}}, [&](Tape<double>* t) {
    Tensor<double> pooled = roi_maxpool(t, fmap, r);
    return weighted_sum(t, reshape(t, pooled, {1, int(pooled.numel())}), w);
  });
  INFO(rep.worst);
  CHECK(rep.pass(1e-4));
}

TEST_CASE("fuse concatenates in type, geometry, visual order") {
  Rng rng(31);
  auto rnd = [&](std::vector<int> shape) {
    Tensor<float> t(shape);
    for (auto& v : t.values()) v = float(rng.uniform(-1, 1));
    return t;
  };
  Tensor<float> type_v = rnd({2, kTypeDim});
  Tensor<float> geom_v = rnd({2, kGeomDim});
  Tensor<float> visual = rnd({2, kVisualDim});

  Tensor<float> le = fuse<float>(nullptr, type_v, geom_v, {}, FusionMode::kLe);
  REQUIRE(le.shape() == std::vector<int>{2, fused_dim(FusionMode::kLe)});
  for (int r = 0; r < 2; ++r)
    for (int j = 0; j < kTypeDim; ++j) {
      CHECK(le.at(r, j) == type_v.at(r, j));
      CHECK(le.at(r, kTypeDim + j) == geom_v.at(r, j));
    }

  Tensor<float> vf = fuse<float>(nullptr, {}, {}, visual, FusionMode::kVf);
  CHECK(vf.same_payload(visual));

  Tensor<float> both = fuse<float>(nullptr, type_v, geom_v, visual, FusionMode::kLeVf);
  REQUIRE(both.shape() == std::vector<int>{2, fused_dim(FusionMode::kLeVf)});
  for (int r = 0; r < 2; ++r) {
    for (int j = 0; j < kTypeDim; ++j) CHECK(both.at(r, j) == type_v.at(r, j));
    for (int j = 0; j < kGeomDim; ++j) CHECK(both.at(r, kTypeDim + j) == geom_v.at(r, j));
    for (int j = 0; j < kVisualDim; ++j)
      CHECK(both.at(r, kTypeDim + kGeomDim + j) == visual.at(r, j));
  }

  CHECK_THROWS_MATCHES((fuse<float>(nullptr, {}, geom_v, {}, FusionMode::kLe)),
                       std::invalid_argument,
                       MessageMatches(ContainsSubstring("missing type embedding")));
  CHECK_THROWS_MATCHES((fuse<float>(nullptr, type_v, geom_v, {}, FusionMode::kLeVf)),
                       std::invalid_argument,
                       MessageMatches(ContainsSubstring("missing visual features")));
  CHECK_THROWS_MATCHES((fuse<float>(nullptr, {}, {}, {}, FusionMode::kVf)),
                       std::invalid_argument,
                       MessageMatches(ContainsSubstring("missing visual features")));
}

TEST_CASE("fusion mode parsing") {
  CHECK(fusion_mode_from_string("le") == FusionMode::kLe);
  CHECK(fusion_mode_from_string("vf") == FusionMode::kVf);
  CHECK(fusion_mode_from_string("le+vf") == FusionMode::kLeVf);
  CHECK_THROWS_AS(fusion_mode_from_string("both"), std::invalid_argument);
  CHECK(visual_method_from_string("crop") == VisualMethod::kCrop);
  CHECK(visual_method_from_string("roi") == VisualMethod::kRoi);
  CHECK_THROWS_AS(visual_method_from_string("cnn"), std::invalid_argument);
}

TEST_CASE("graph inputs carry one-hot types, raw geometry, and visuals") {
  Window w = make_window(0, {{0, 0, 750, 750}, {100, 100, 64, 64}});
  w.members[0].type = LayerType::kBitmap;
  w.members[1].type = LayerType::kText;
  ContainmentTree tree = build_containment_tree(w);
  FloatImage patch = random_patch(77);

  SECTION("crop mode") {
    auto in = make_graph_inputs<float>(w, tree, &patch, VisualMethod::kCrop);
    REQUIRE(in.n_nodes == 3);
    REQUIRE(in.type_onehot.shape() == std::vector<int>{3, kLayerTypeCount});
    CHECK(in.type_onehot.at(0, int(LayerType::kCanvas)) == 1.f);
    REQUIRE(in.geom_raw.shape() == std::vector<int>{3, 4});
    CHECK(in.geom_raw.at(0, 0) == 0.f);
    CHECK(in.geom_raw.at(0, 2) == 1.f);
    REQUIRE(in.crops.shape() == std::vector<int>{3, 3, kCropSize, kCropSize});
    // the 64x64 member's crop is an exact slice of the patch
    int node = -1;
    for (int i = 0; i < tree.size(); ++i)
      if (tree.nodes[size_t(i)].member == 1) node = i;
    REQUIRE(node >= 0);
    const float* cp = in.crops.data() + size_t(node) * 3 * kCropSize * kCropSize;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
          REQUIRE(cp[(size_t(c) * kCropSize + y) * kCropSize + x] ==
                  patch.at(c, 100 + y, 100 + x));
    CHECK(in.patch.numel() == 0);
  }

  SECTION("roi mode") {
    auto in = make_graph_inputs<float>(w, tree, &patch, VisualMethod::kRoi);
    REQUIRE(in.patch.shape() == std::vector<int>{1, 3, SmallCnn<float>::kRoiInput,
                                                 SmallCnn<float>::kRoiInput});
    REQUIRE(in.map_rects.size() == 3);
    // full-window root projects onto the whole 24x24 map
    CHECK_THAT(in.map_rects[0].x, WithinAbs(0, 1e-9));
    CHECK_THAT(in.map_rects[0].w, WithinAbs(24, 1e-9));
    CHECK(in.crops.numel() == 0);
  }

  SECTION("no patch: layout-only inputs") {
    auto in = make_graph_inputs<float>(w, tree, nullptr, VisualMethod::kCrop);
    CHECK(in.crops.numel() == 0);
    CHECK(in.patch.numel() == 0);
    CHECK(in.type_onehot.numel() > 0);
  }
}

TEST_CASE("visual_features demands the inputs its mode needs") {
  ParamSet<float> ps;
  Rng rng(1);
  SmallCnn<float> crop_cnn(ps, rng, SmallCnn<float>::Mode::kCrop);
  GraphInputs<float> empty;
  CHECK_THROWS_MATCHES(visual_features<float>(nullptr, empty, crop_cnn), std::invalid_argument,
                       MessageMatches(ContainsSubstring("no crops")));
  ParamSet<float> ps2;
  SmallCnn<float> roi_cnn(ps2, rng, SmallCnn<float>::Mode::kRoi);
  CHECK_THROWS_MATCHES(visual_features<float>(nullptr, empty, roi_cnn), std::invalid_argument,
                       MessageMatches(ContainsSubstring("no patch")));
}

TEST_CASE("convert_inputs preserves values across scalar types") {
  Window w = make_window(0, {{10, 20, 100, 50}});
  ContainmentTree tree = build_containment_tree(w);
  FloatImage patch = random_patch(8);
  auto in = make_graph_inputs<float>(w, tree, &patch, VisualMethod::kCrop);
  auto d = convert_inputs<double>(in);
  REQUIRE(d.geom_raw.shape() == in.geom_raw.shape());
  for (size_t i = 0; i < in.geom_raw.numel(); ++i)
    CHECK(d.geom_raw.values()[i] == double(in.geom_raw.values()[i]));
  for (size_t i = 0; i < in.crops.numel(); ++i)
    CHECK(d.crops.values()[i] == double(in.crops.values()[i]));
  auto same = convert_inputs<float>(in);
  CHECK(same.type_onehot.same_payload(in.type_onehot));
}
