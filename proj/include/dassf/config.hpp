#pragma once

// Model wiring: input size, per-level widths, strides, head settings and the
// component toggles. Serialized as a flat JSON object.

#include <array>
#include <cstdint>
#include <string>

#include "dassf/scale_fusion.hpp"

namespace dassf {

struct ModelConfig {
  std::int64_t input_h = 640;
  std::int64_t input_w = 640;
  std::int64_t stem_channels = 16;
  std::array<std::int64_t, 4> channels{32, 64, 96, 128};  // P2..P5
  std::array<int, 4> strides{4, 8, 16, 32};
  std::int64_t head_channels = 64;
  int num_classes = 10;
  int dyhead_blocks = 2;
  int dysample_groups = 4;
  GaussianSpec gaussian;
  double confidence = 0.25;
  double iou = 0.45;
  bool dssff = true;
  bool xsmall = true;
  bool dyhead = true;

  /// Throws ConfigError on any violated invariant.
  void validate() const;

  /// Head strides, finest first: 4, 8, 16, 32 with the x-small head, else 8, 16, 32.
  std::vector<int> head_strides() const;
};

/// Parses a JSON document; missing keys keep their defaults, unknown keys are
/// rejected. The result is validated.
ModelConfig parse_config(const std::string& json_text);
ModelConfig load_config(const std::string& path);
std::string config_to_json(const ModelConfig& cfg);

}  // namespace dassf
