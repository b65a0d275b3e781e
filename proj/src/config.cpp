#include "dassf/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dassf/errors.hpp"

namespace dassf {

using nlohmann::json;

void ModelConfig::validate() const {
  if (input_h < 32 || input_w < 32 || input_h % 32 != 0 || input_w % 32 != 0) {
    throw ConfigError("config: input size must be a positive multiple of 32, got " + std::to_string(input_h) + "x" +
                      std::to_string(input_w));
  }
  if (strides[0] != 4) throw ConfigError("config: P2 stride must be 4");
  for (std::size_t i = 1; i < strides.size(); ++i) {
    if (strides[i] != 2 * strides[i - 1]) throw ConfigError("config: strides must double level to level");
  }
  if (stem_channels < 1 || head_channels < 1) throw ConfigError("config: channel widths must be >= 1");
  for (auto c : channels) {
    if (c < 1) throw ConfigError("config: channel widths must be >= 1");
  }
  if (dysample_groups < 1) throw ConfigError("config: dysample_groups must be >= 1");
  if (dssff && channels[1] % dysample_groups != 0) {
    throw ConfigError("config: P3 channels must be divisible by the upsampler groups");
  }
  if (num_classes < 1) throw ConfigError("config: num_classes must be >= 1");
  if (dyhead_blocks < 0) throw ConfigError("config: dyhead_blocks must be >= 0");
  if (!(confidence > 0.0 && confidence <= 1.0)) throw ConfigError("config: confidence must lie in (0, 1]");
  if (!(iou > 0.0 && iou < 1.0)) throw ConfigError("config: iou must lie in (0, 1)");
  try {
    gaussian.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (gaussian.sigmas.size() != 3) throw ConfigError("config: gaussian needs exactly 3 sigmas (P3, P4, P5)");
}

std::vector<int> ModelConfig::head_strides() const {
  if (xsmall) return {strides[0], strides[1], strides[2], strides[3]};
  return {strides[1], strides[2], strides[3]};
}

namespace {

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

ModelConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  static const std::set<std::string> known = {"input_size", "stem_channels", "channels",       "strides",
                                              "head_channels", "num_classes", "dyhead_blocks",  "dysample_groups",
                                              "gaussian",   "confidence",    "iou",            "toggles"};
  for (const auto& item : j.items()) {
    if (!known.count(item.key())) throw ConfigError("config: unknown key '" + item.key() + "'");
  }
  ModelConfig cfg;
  if (j.contains("input_size")) {
    std::array<std::int64_t, 2> hw{};
    read(j, "input_size", hw);
    cfg.input_h = hw[0];
    cfg.input_w = hw[1];
  }
  read(j, "stem_channels", cfg.stem_channels);
  read(j, "channels", cfg.channels);
  read(j, "strides", cfg.strides);
  read(j, "head_channels", cfg.head_channels);
  read(j, "num_classes", cfg.num_classes);
  read(j, "dyhead_blocks", cfg.dyhead_blocks);
  read(j, "dysample_groups", cfg.dysample_groups);
  read(j, "confidence", cfg.confidence);
  read(j, "iou", cfg.iou);
  if (j.contains("gaussian")) {
    const json& g = j.at("gaussian");
    if (!g.is_object()) throw ConfigError("config: 'gaussian' must be an object");
    read(g, "kernel_size", cfg.gaussian.kernel_size);
    read(g, "sigmas", cfg.gaussian.sigmas);
  }
  if (j.contains("toggles")) {
    const json& t = j.at("toggles");
    if (!t.is_object()) throw ConfigError("config: 'toggles' must be an object");
    for (const auto& item : t.items()) {
      if (item.key() != "dssff" && item.key() != "xsmall" && item.key() != "dyhead") {
        throw ConfigError("config: unknown toggle '" + item.key() + "'");
      }
    }
    read(t, "dssff", cfg.dssff);
    read(t, "xsmall", cfg.xsmall);
    read(t, "dyhead", cfg.dyhead);
  }
  cfg.validate();
  return cfg;
}

ModelConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const ModelConfig& cfg) {
  json j;
  j["input_size"] = {cfg.input_h, cfg.input_w};
  j["stem_channels"] = cfg.stem_channels;
  j["channels"] = cfg.channels;
  j["strides"] = cfg.strides;
  j["head_channels"] = cfg.head_channels;
  j["num_classes"] = cfg.num_classes;
  j["dyhead_blocks"] = cfg.dyhead_blocks;
  j["dysample_groups"] = cfg.dysample_groups;
  j["gaussian"] = {{"kernel_size", cfg.gaussian.kernel_size}, {"sigmas", cfg.gaussian.sigmas}};
  j["confidence"] = cfg.confidence;
  j["iou"] = cfg.iou;
  j["toggles"] = {{"dssff", cfg.dssff}, {"xsmall", cfg.xsmall}, {"dyhead", cfg.dyhead}};
  return j.dump(2);
}

}  // namespace dassf
