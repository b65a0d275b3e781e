#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dassf/detector.hpp"
#include "support.hpp"

using namespace dassf;
using namespace dassf::support;

namespace {

ModelConfig tiny_config(std::int64_t size) {
  ModelConfig cfg;
  cfg.input_h = cfg.input_w = size;
  cfg.stem_channels = 4;
  cfg.channels = {8, 8, 8, 8};
  cfg.head_channels = 8;
  cfg.num_classes = 3;
  cfg.dysample_groups = 2;
  return cfg;
}

Model seeded_model(const ModelConfig& cfg, std::uint64_t seed) { return bind_model(cfg, init_random(cfg, seed)); }

Tensor image(std::int64_t h, std::int64_t w, std::uint64_t seed) {
  Rng rng(seed);
  return rand_f({1, 3, h, w}, rng, 0.0, 1.0);
}

Detection det(int cls, float score, Box b) { return Detection{cls, score, b}; }

}  // namespace

TEST(Backbone, GridsFor640) {
  const ModelConfig cfg;
  const Features f = backbone_forward(image(640, 640, 1), seeded_model(cfg, 1));
  EXPECT_EQ(f.p2.shape(), (Shape{1, 32, 160, 160}));
  EXPECT_EQ(f.p3.shape(), (Shape{1, 64, 80, 80}));
  EXPECT_EQ(f.p4.shape(), (Shape{1, 96, 40, 40}));
  EXPECT_EQ(f.p5.shape(), (Shape{1, 128, 20, 20}));
}

TEST(Backbone, P5For320) {
  ModelConfig cfg;
  cfg.input_h = cfg.input_w = 320;
  const Features f = backbone_forward(image(320, 320, 2), seeded_model(cfg, 1));
  EXPECT_EQ(f.p5.dim(2), 10);
  EXPECT_EQ(f.p5.dim(3), 10);
}

TEST(Backbone, IndivisibleInputFails) {
  const ModelConfig cfg = tiny_config(64);
  const Model m = seeded_model(cfg, 1);
  EXPECT_THROW(backbone_forward(image(64, 80 + 4, 1), m), DimensionError);
}

TEST(Neck, XsmallToggleAddsFinestMap) {
  for (bool xsmall : {true, false}) {
    ModelConfig cfg = tiny_config(128);
    cfg.xsmall = xsmall;
    const Model m = seeded_model(cfg, 3);
    const NeckOutputs n = neck_forward(backbone_forward(image(128, 128, 3), m), m);
    ASSERT_EQ(n.maps.size(), xsmall ? 4u : 3u);
    EXPECT_EQ(n.strides, cfg.head_strides());
    for (std::size_t i = 0; i < n.maps.size(); ++i) {
      EXPECT_EQ(n.maps[i].dim(2), 128 / n.strides[i]);
      EXPECT_EQ(n.maps[i].dim(3), 128 / n.strides[i]);
    }
  }
}

TEST(Neck, ToggleWeightMismatchIsConfigError) {
  ModelConfig on = tiny_config(64);
  ModelConfig off = on;
  off.xsmall = false;
  Model m = seeded_model(on, 1);
  const Features f = backbone_forward(image(64, 64, 1), m);
  m.cfg = off;
  EXPECT_THROW(neck_forward(f, m), ConfigError);
}

TEST(Neck, ConstantFeaturesGiveConstantInterior) {
  ModelConfig cfg = tiny_config(512);
  WeightStore store = init_random(cfg, 4);
  for (auto& [name, t] : store) {
    if (name.rfind("neck.cpam.", 0) == 0) t = Tensor(t.shape());
  }
  const Model m = bind_model(cfg, store);
  Features f;
  f.p2 = Tensor({1, 8, 128, 128}, 0.3f);
  f.p3 = Tensor({1, 8, 64, 64}, 0.3f);
  f.p4 = Tensor({1, 8, 32, 32}, 0.3f);
  f.p5 = Tensor({1, 8, 16, 16}, 0.3f);
  const NeckOutputs n = neck_forward(f, m);
  for (const Tensor& map : n.maps) {
    ASSERT_TRUE(map.all_finite());
    const std::int64_t h = map.dim(2), w = map.dim(3);
    for (std::int64_t c = 0; c < map.dim(1); ++c) {
      const float ref = map.at({0, c, h / 2, w / 2});
      for (std::int64_t i = h / 2 - 1; i <= h / 2; ++i)
        for (std::int64_t j = w / 2 - 1; j <= w / 2; ++j) EXPECT_NEAR(map.at({0, c, i, j}), ref, 1e-6) << h;
    }
  }
}

TEST(Head, PredictionShapeAtFinestScale) {
  const ModelConfig cfg;
  const Model m = seeded_model(cfg, 5);
  const HeadOutputs h = head_forward(neck_forward(backbone_forward(image(640, 640, 5), m), m), m);
  ASSERT_EQ(h.raw.size(), 4u);
  EXPECT_EQ(h.raw[0].shape(), (Shape{1, 14, 160, 160}));
  EXPECT_EQ(h.strides, (std::vector<int>{4, 8, 16, 32}));
  for (const Tensor& r : h.raw) {
    EXPECT_TRUE(r.all_finite());
    for (std::int64_t i = 10 * r.dim(2) * r.dim(3); i < r.numel(); ++i) ASSERT_GE(r[i], 0.0f);
  }
}

TEST(Head, ZeroClassWeightsGiveEvenScores) {
  const ModelConfig cfg = tiny_config(64);
  WeightStore store = init_random(cfg, 6);
  for (auto& [name, t] : store) {
    if (name.find(".cls.") != std::string::npos) t = Tensor(t.shape());
  }
  const Model m = bind_model(cfg, store);
  const HeadOutputs h = head_forward(neck_forward(backbone_forward(image(64, 64, 6), m), m), m);
  for (const Tensor& r : h.raw) {
    const std::int64_t plane = r.dim(2) * r.dim(3);
    for (std::int64_t i = 0; i < 3 * plane; ++i) ASSERT_EQ(1.0 / (1.0 + std::exp(-r[i])), 0.5);
  }
}

TEST(Decode, SingleCellAtCoarsestStride) {
  ModelConfig cfg;
  cfg.num_classes = 1;
  HeadOutputs h;
  h.raw = {tensor({1, 5, 1, 1}, {3.0f, 1, 1, 1, 1})};
  h.strides = {32};
  const auto d = decode_predictions(h, cfg);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].box.x1, 0.0f);
  EXPECT_EQ(d[0].box.y1, 0.0f);
  EXPECT_EQ(d[0].box.x2, 48.0f);
  EXPECT_EQ(d[0].box.y2, 48.0f);
  EXPECT_NEAR(d[0].score, 1.0 / (1.0 + std::exp(-3.0)), 1e-7);
}

TEST(Decode, HugeNegativeLogitsGiveNothing) {
  ModelConfig cfg;
  cfg.num_classes = 2;
  HeadOutputs h;
  Tensor r({1, 6, 4, 4}, 1.0f);
  for (int i = 0; i < 32; ++i) r.mutable_data()[i] = -1e4f;
  h.raw = {r};
  h.strides = {8};
  EXPECT_TRUE(decode_predictions(h, cfg).empty());
}

TEST(Decode, RaisingALogitNeverDropsItsDetection) {
  Rng rng(7);
  ModelConfig cfg;
  cfg.num_classes = 2;
  for (int trial = 0; trial < 20; ++trial) {
    Tensor r = rand_f({1, 6, 3, 3}, rng, -3, 3);
    for (std::int64_t i = 18; i < 54; ++i) r.mutable_data()[i] = static_cast<float>(rng.uniform(0.2, 2.0));
    HeadOutputs h{{r}, {16}};
    const auto before = decode_predictions(h, cfg);
    const std::int64_t cell = draw_int(rng, 0, 8);
    Tensor raised = r;
    raised.mutable_data()[cell] += 1.5f;
    raised.mutable_data()[9 + cell] += 1.5f;
    const auto after = decode_predictions(HeadOutputs{{raised}, {16}}, cfg);
    const float cx = (static_cast<float>(cell % 3) + 0.5f) * 16, cy = (static_cast<float>(cell / 3) + 0.5f) * 16;
    auto has_cell = [&](const std::vector<Detection>& ds) {
      for (const auto& d : ds)
        if (d.box.x1 < cx && cx < d.box.x2 && d.box.y1 < cy && cy < d.box.y2 && std::abs(d.box.x2 - d.box.x1 - (r[18 + cell] + r[36 + cell]) * 16) < 1e-3)
          return true;
      return false;
    };
    if (has_cell(before)) { EXPECT_TRUE(has_cell(after)); }
  }
}

TEST(Nms, IdenticalBoxesKeepBest) {
  const auto kept = nms({det(0, 0.8f, {0, 0, 4, 4}), det(0, 0.9f, {0, 0, 4, 4})}, 0.45);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].score, 0.9f);
}

TEST(Nms, SmallOverlapSurvives) {
  EXPECT_NEAR(iou({0, 0, 2, 2}, {1, 1, 3, 3}), 1.0 / 7.0, 1e-12);
  EXPECT_EQ(nms({det(0, 0.9f, {0, 0, 2, 2}), det(0, 0.8f, {1, 1, 3, 3})}, 0.5).size(), 2u);
}

TEST(Nms, DisjointBoxesAllKeptInScoreOrder) {
  const auto kept = nms({det(0, 0.3f, {0, 0, 1, 1}), det(0, 0.9f, {5, 5, 6, 6}), det(0, 0.6f, {2, 2, 3, 3})}, 0.45);
  ASSERT_EQ(kept.size(), 3u);
  EXPECT_EQ(kept[0].score, 0.9f);
  EXPECT_EQ(kept[1].score, 0.6f);
  EXPECT_EQ(kept[2].score, 0.3f);
}

TEST(Nms, ClassesDoNotSuppressEachOther) {
  EXPECT_EQ(nms({det(0, 0.9f, {0, 0, 4, 4}), det(1, 0.8f, {0, 0, 4, 4})}, 0.45).size(), 2u);
}

TEST(NmsProperty, SubsetWithBoundedOverlap) {
  Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Detection> in;
    const auto n = draw_int(rng, 0, 40);
    for (std::int64_t i = 0; i < n; ++i) {
      const float x = static_cast<float>(rng.uniform(0, 50)), y = static_cast<float>(rng.uniform(0, 50));
      in.push_back(det(static_cast<int>(draw_int(rng, 0, 2)), static_cast<float>(rng.uniform()),
                       {x, y, x + static_cast<float>(rng.uniform(1, 20)), y + static_cast<float>(rng.uniform(1, 20))}));
    }
    const double th = rng.uniform(0.1, 0.9);
    const auto out = nms(in, th);
    for (std::size_t i = 0; i < out.size(); ++i) {
      bool found = false;
      for (const auto& d : in)
        found = found || (d.class_id == out[i].class_id && d.score == out[i].score && d.box.x1 == out[i].box.x1);
      EXPECT_TRUE(found);
      if (i > 0) { EXPECT_GE(out[i - 1].score, out[i].score); }
      for (std::size_t j = i + 1; j < out.size(); ++j)
        if (out[i].class_id == out[j].class_id) { EXPECT_LE(iou(out[i].box, out[j].box), th); }
    }
  }
}

TEST(Detect, SeededRunIsFiniteInBoundsAndDeterministic) {
  const ModelConfig cfg = tiny_config(128);
  WeightStore store = init_random(cfg, 9);
  for (auto& [name, t] : store) {
    if (name.find(".box.bias") != std::string::npos) t = Tensor(t.shape(), 1.5f);
  }
  const Model m = bind_model(cfg, store);
  const Tensor img = image(128, 128, 9);
  const auto a = detect(img, m);
  const auto b = detect(img, m);
  ASSERT_FALSE(a.empty());
  ASSERT_EQ(format_detections(a), format_detections(b));
  for (const auto& d : a) {
    EXPECT_TRUE(std::isfinite(d.score));
    EXPECT_GE(d.score, 0.0f);
    EXPECT_LE(d.score, 1.0f);
    EXPECT_GE(d.box.x1, 0.0f);
    EXPECT_GE(d.box.y1, 0.0f);
    EXPECT_LE(d.box.x2, 128.0f);
    EXPECT_LE(d.box.y2, 128.0f);
    EXPECT_LT(d.box.x1, d.box.x2);
    EXPECT_LT(d.box.y1, d.box.y2);
  }
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j)
      if (a[i].class_id == a[j].class_id) { EXPECT_LE(iou(a[i].box, a[j].box), cfg.iou); }
}

TEST(Detect, FullConfidenceIsEmpty) {
  ModelConfig cfg = tiny_config(64);
  cfg.confidence = 1.0;
  EXPECT_TRUE(detect(image(64, 64, 1), seeded_model(cfg, 1)).empty());
}

TEST(Detect, StageLogCoversPipeline) {
  const ModelConfig cfg = tiny_config(64);
  StageLog log;
  detect(image(64, 64, 2), seeded_model(cfg, 2), &log);
  std::vector<std::string> names;
  for (const auto& r : log) names.push_back(r.name);
  for (const char* want : {"backbone.p5", "neck.tfe_p4", "neck.dssff", "neck.cpam", "head.dyhead", "head.p2",
                           "decode+nms"})
    EXPECT_NE(std::find(names.begin(), names.end(), want), names.end()) << want;
}

TEST(Detect, TogglesLeaveUpstreamStagesUntouched) {
  const ModelConfig base = tiny_config(128);
  const Tensor img = image(128, 128, 10);
  const Model m0 = seeded_model(base, 10);
  const Features f0 = backbone_forward(img, m0);
  const NeckOutputs n0 = neck_forward(f0, m0);

  ModelConfig no_dssff = base;
  no_dssff.dssff = false;
  const Model m1 = seeded_model(no_dssff, 10);
  const Features f1 = backbone_forward(img, m1);
  const NeckOutputs n1 = neck_forward(f1, m1);
  EXPECT_EQ(f1.p2, f0.p2);
  EXPECT_EQ(f1.p5, f0.p5);
  EXPECT_EQ(n1.tfe_p4, n0.tfe_p4);
  EXPECT_EQ(n1.tfe_p3, n0.tfe_p3);
  EXPECT_FALSE(n1.ssff == n0.ssff);

  ModelConfig no_xsmall = base;
  no_xsmall.xsmall = false;
  const Model m2 = seeded_model(no_xsmall, 10);
  const NeckOutputs n2 = neck_forward(backbone_forward(img, m2), m2);
  EXPECT_EQ(n2.ssff, n0.ssff);
  EXPECT_EQ(n2.cpam, n0.cpam);
  ASSERT_EQ(n2.maps.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(n2.maps[i], n0.maps[i + 1]);

  ModelConfig no_dyhead = base;
  no_dyhead.dyhead = false;
  const Model m3 = seeded_model(no_dyhead, 10);
  const NeckOutputs n3 = neck_forward(backbone_forward(img, m3), m3);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(n3.maps[i], n0.maps[i]);
  EXPECT_FALSE(head_forward(n3, m3).raw[1] == head_forward(n0, m0).raw[1]);
}

TEST(DetectorProperty, StrideContractOverInputSizes) {
  for (std::int64_t size = 320; size <= 960; size += 32) {
    ModelConfig cfg = tiny_config(size);
    cfg.input_w = 352;
    const Model m = seeded_model(cfg, 11);
    const Tensor img = image(size, 352, static_cast<std::uint64_t>(size));
    const Features f = backbone_forward(img, m);
    EXPECT_EQ(f.p2.dim(2), size / 4);
    EXPECT_EQ(f.p5.dim(2), size / 32);
    EXPECT_EQ(f.p5.dim(3), 352 / 32);
    const HeadOutputs h = head_forward(neck_forward(f, m), m);
    for (std::size_t i = 0; i < h.raw.size(); ++i) {
      EXPECT_EQ(h.raw[i].dim(2), size / h.strides[i]);
      EXPECT_EQ(h.raw[i].dim(3), 352 / h.strides[i]);
    }
  }
}

TEST(Image, PpmRoundTripAndSizeCheck) {
  const auto dir = std::filesystem::temp_directory_path() / "dassf_image_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "a.ppm").string();
  Rng rng(12);
  Tensor img({1, 3, 32, 64});
  for (float& v : img.mutable_data()) v = static_cast<float>(draw_int(rng, 0, 255)) / 255.0f;
  write_ppm(img, path);
  EXPECT_LT(max_abs_diff(read_ppm(path), img), 1e-7);
  ModelConfig cfg;
  cfg.input_h = 32;
  cfg.input_w = 64;
  EXPECT_EQ(load_image(path, cfg).shape(), (Shape{1, 3, 32, 64}));
  cfg.input_w = 32;
  EXPECT_THROW(load_image(path, cfg), Error);
  std::filesystem::remove_all(dir);
}

TEST(Image, RawPlanarFloats) {
  const auto path = (std::filesystem::temp_directory_path() / "dassf_raw_test.bin").string();
  std::vector<float> v(3 * 4 * 2);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i) * 0.25f;
  {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 4));
  }
  EXPECT_EQ(read_raw_image(path, 4, 2), Tensor({1, 3, 4, 2}, v));
  EXPECT_THROW(read_raw_image(path, 4, 4), Error);
  std::remove(path.c_str());
}

TEST(Output, DetectionLines) {
  const std::string s = format_detections({det(3, 0.5f, {1, 2, 3, 4})});
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 1);
  EXPECT_EQ(s.rfind("3 ", 0), 0u);
  EXPECT_TRUE(format_detections({}).empty());
}
