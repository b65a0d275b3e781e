#pragma once

// Named weight stores, their deterministic initialization and the binary
// file format:
//
//   "DASF" | version u32 = 1 | count u64 |
//   count x ( name_len u16 | name bytes | rank u8 | dims u64 x rank | float32 x numel )
//
// All integers and floats are little-endian.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dassf/config.hpp"
#include "dassf/errors.hpp"
#include "dassf/ops.hpp"

namespace dassf {

using WeightStore = std::map<std::string, Tensor>;

inline constexpr std::uint32_t kWeightFormatVersion = 1;

enum class InitKind {
  conv,        // normal(0, 0.02)
  offset_gen,  // normal(0, 0.001)
  zeros,
  ones,
  fill,        // constant `fill`
};

struct ParamEntry {
  std::string name;
  Shape shape;
  InitKind init = InitKind::conv;
  double fill = 0.0;
  std::string note;  // free-form annotation shown by inspect
};

/// Every tensor of `manifest`, each drawn from its own stream
/// stream_seed(seed, name).
WeightStore init_random(const std::vector<ParamEntry>& manifest, std::uint64_t seed);
WeightStore init_random(const ModelConfig& cfg, std::uint64_t seed);

std::vector<std::uint8_t> encode_weights(const WeightStore& store);
/// Throws FormatError (with byte offset) on any malformed input.
WeightStore decode_weights(const std::vector<std::uint8_t>& bytes);

/// Writes through a temporary file and renames, so a failed save leaves no
/// partial file behind.
void save_weights(const WeightStore& store, const std::string& path);
WeightStore load_weights(const std::string& path);

std::int64_t total_elements(const WeightStore& store);

/// Strict bind failure: every missing, unexpected or mis-shaped name.
class BindError : public Error {
 public:
  BindError(std::vector<std::string> missing, std::vector<std::string> extra, std::vector<std::string> mismatched);
  const std::vector<std::string>& missing() const noexcept { return missing_; }
  const std::vector<std::string>& extra() const noexcept { return extra_; }
  const std::vector<std::string>& mismatched() const noexcept { return mismatched_; }

 private:
  std::vector<std::string> missing_, extra_, mismatched_;
};

/// Hands out model parameters by name. Without a store it only records the
/// manifest and returns zero tensors; with one it looks every name up and
/// `finish()` reports all problems at once.
class ParamRegistry {
 public:
  ParamRegistry() = default;
  explicit ParamRegistry(const WeightStore& store) : store_(&store) {}

  Tensor tensor(const std::string& name, Shape shape, InitKind init, double fill = 0.0, std::string note = {});

  /// `name.weight` (out, in/groups, kh, kw) and `name.bias` (out).
  ConvParams conv(const std::string& name, std::int64_t out, std::int64_t in, int kh, int kw, int stride = 1,
                  int groups = 1, InitKind init = InitKind::conv, std::string note = {});
  /// (out, in, kd, kh, kw) weight without bias; the 3D conv always feeds a
  /// normalization, which would cancel one.
  ConvParams conv3d(const std::string& name, std::int64_t out, std::int64_t in, int kd, int kh, int kw);

  const std::vector<ParamEntry>& manifest() const noexcept { return manifest_; }

  /// Throws BindError when a store was given and any name was missing,
  /// mis-shaped, or left unused.
  void finish() const;

 private:
  const WeightStore* store_ = nullptr;
  std::vector<ParamEntry> manifest_;
  std::vector<std::string> missing_, mismatched_;
};

}  // namespace dassf
