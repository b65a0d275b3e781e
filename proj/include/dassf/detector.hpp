#pragma once

// End-to-end detector: strided-conv backbone stub, TFE/DSSFF/CPAM neck,
// optional DyHead over the head levels, anchor-free decoupled head, decode
// and class-wise NMS.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dassf/config.hpp"
#include "dassf/dyhead.hpp"
#include "dassf/scale_fusion.hpp"
#include "dassf/weights_io.hpp"

namespace dassf {

struct BackboneWeights {
  ConvParams stem;                  // 3 -> stem, stride 2
  std::array<ConvParams, 4> stages;  // P2..P5, stride 2 each
};

struct NeckWeights {
  TfeParams tfe_p4;  // P3 / P4 / P5 aligned to P4 width
  Cbs tfe_p4_fuse;
  TfeParams tfe_p3;  // P2 / P3 / fused P4 aligned to P3 width
  Cbs tfe_p3_fuse;
  std::array<Cbs, 3> ssff_align;  // P3, P4, P5 to P3 width
  SsffParams ssff;
  CpamParams cpam;
  std::optional<Cbs> out2;  // x-small branch
  Cbs down_p4, out4;
  Cbs down_p5, out5;
};

struct ScaleHead {
  Cbs proj;  // level width -> head width
  ConvParams cls;
  ConvParams box;
};

struct HeadWeights {
  std::vector<ScaleHead> scales;  // finest first
  std::optional<DyHeadParams> dyhead;
};

struct Model {
  ModelConfig cfg;
  BackboneWeights backbone;
  NeckWeights neck;
  HeadWeights head;
};

/// Declares (and, with a store, binds) every parameter of the model.
Model build_model(const ModelConfig& cfg, ParamRegistry& reg);
std::vector<ParamEntry> model_manifest(const ModelConfig& cfg);
/// Strict bind; throws BindError listing every problem.
Model bind_model(const ModelConfig& cfg, const WeightStore& store);

struct StageRecord {
  std::string name;
  Shape shape;
  double ms = 0.0;
};
using StageLog = std::vector<StageRecord>;

struct Features {
  Tensor p2, p3, p4, p5;
};

struct NeckOutputs {
  std::vector<Tensor> maps;  // one per head, finest first
  std::vector<int> strides;
  // Intermediate stages, kept for inspection.
  Tensor tfe_p4, tfe_p3, ssff, cpam;
};

struct HeadOutputs {
  std::vector<Tensor> raw;  // (N, classes + 4, H, W): logits then l, t, r, b distances
  std::vector<int> strides;
};

struct Box {
  float x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

struct Detection {
  int class_id = 0;
  float score = 0.0f;
  Box box;
};

Features backbone_forward(const Tensor& image, const Model& m, StageLog* log = nullptr);
NeckOutputs neck_forward(const Features& f, const Model& m, StageLog* log = nullptr);
HeadOutputs head_forward(const NeckOutputs& n, const Model& m, StageLog* log = nullptr);

/// Batch size must be 1.
std::vector<Detection> decode_predictions(const HeadOutputs& raw, const ModelConfig& cfg);

double iou(const Box& a, const Box& b);
/// Greedy per-class suppression; the result is sorted by descending score.
std::vector<Detection> nms(std::vector<Detection> dets, double iou_thresh);

std::vector<Detection> detect(const Tensor& image, const Model& m, StageLog* log = nullptr);

/// Binary PPM (P6, maxval <= 255) scaled to [0, 1]: (1, 3, H, W).
Tensor read_ppm(const std::string& path);
void write_ppm(const Tensor& image, const std::string& path);
/// Planar float32 little-endian, (1, 3, h, w).
Tensor read_raw_image(const std::string& path, std::int64_t h, std::int64_t w);
/// PPM when the file starts with "P6", raw planar otherwise.
Tensor load_image(const std::string& path, const ModelConfig& cfg);

/// One "class_id score x1 y1 x2 y2" line per detection.
std::string format_detections(const std::vector<Detection>& dets);

}  // namespace dassf
