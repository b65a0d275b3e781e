#include "dassf/weights_io.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <set>

#include "dassf/detector.hpp"
#include "dassf/rng.hpp"

namespace dassf {
namespace {

constexpr char kMagic[4] = {'D', 'A', 'S', 'F'};

template <class U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}

  template <class U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(b_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }

  void need(std::uint64_t n, const char* what) const {
    if (n > b_.size() - pos_) {
      throw FormatError(pos_, std::string("truncated ") + what + " (need " + std::to_string(n) + " bytes, have " +
                                  std::to_string(b_.size() - pos_) + ")");
    }
  }

  const std::uint8_t* take(std::uint64_t n, const char* what) {
    need(n, what);
    const std::uint8_t* p = b_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::uint64_t pos() const noexcept { return pos_; }
  bool done() const noexcept { return pos_ == b_.size(); }

 private:
  const std::vector<std::uint8_t>& b_;
  std::uint64_t pos_ = 0;
};

double init_stddev(InitKind k) { return k == InitKind::offset_gen ? 0.001 : 0.02; }

}  // namespace

WeightStore init_random(const std::vector<ParamEntry>& manifest, std::uint64_t seed) {
  WeightStore store;
  for (const ParamEntry& e : manifest) {
    Tensor t;
    switch (e.init) {
      case InitKind::conv:
      case InitKind::offset_gen: {
        Rng rng(stream_seed(seed, e.name));
        t = random_normal<float>(e.shape, rng, 0.0, init_stddev(e.init));
        break;
      }
      case InitKind::zeros:
        t = Tensor(e.shape, 0.0f);
        break;
      case InitKind::ones:
        t = Tensor(e.shape, 1.0f);
        break;
      case InitKind::fill:
        t = Tensor(e.shape, static_cast<float>(e.fill));
        break;
    }
    if (!store.emplace(e.name, std::move(t)).second) throw ParameterError("init_random: duplicate name " + e.name);
  }
  return store;
}

WeightStore init_random(const ModelConfig& cfg, std::uint64_t seed) { return init_random(model_manifest(cfg), seed); }

std::vector<std::uint8_t> encode_weights(const WeightStore& store) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_le<std::uint32_t>(out, kWeightFormatVersion);
  put_le<std::uint64_t>(out, store.size());
  for (const auto& [name, t] : store) {
    if (name.empty() || name.size() > 0xFFFF) throw ParameterError("encode_weights: bad name length for '" + name + "'");
    if (t.is_null() || t.rank() > 0xFF) throw ParameterError("encode_weights: bad tensor for '" + name + "'");
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) put_le<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    for (float v : t.data()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

WeightStore decode_weights(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  const std::uint8_t* magic = r.take(4, "magic");
  if (!std::equal(magic, magic + 4, kMagic)) throw FormatError(0, "bad magic, expected \"DASF\"");
  const std::uint64_t version_at = r.pos();
  const auto version = r.get<std::uint32_t>("version");
  if (version != kWeightFormatVersion) {
    throw FormatError(version_at, "unsupported version " + std::to_string(version));
  }
  const auto count = r.get<std::uint64_t>("entry count");
  WeightStore store;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t entry_at = r.pos();
    const auto name_len = r.get<std::uint16_t>("name length");
    if (name_len == 0) throw FormatError(entry_at, "empty tensor name");
    const std::uint8_t* name_bytes = r.take(name_len, "name");
    std::string name(reinterpret_cast<const char*>(name_bytes), name_len);
    const auto rank = r.get<std::uint8_t>("rank");
    if (rank == 0) throw FormatError(r.pos() - 1, "rank 0 tensor '" + name + "'");
    Shape shape;
    std::uint64_t numel = 1;
    for (int d = 0; d < rank; ++d) {
      const std::uint64_t dim_at = r.pos();
      const auto dim = r.get<std::uint64_t>("dimension");
      if (dim == 0) throw FormatError(dim_at, "zero extent in '" + name + "'");
      if (dim > (bytes.size() / 4 + 1) || numel > bytes.size() / dim) {
        throw FormatError(dim_at, "extent of '" + name + "' exceeds the file size");
      }
      numel *= dim;
      shape.push_back(static_cast<std::int64_t>(dim));
    }
    const std::uint8_t* payload = r.take(numel * 4, "tensor data");
    std::vector<float> data(numel);
    for (std::uint64_t k = 0; k < numel; ++k) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(payload[k * 4 + b]) << (8 * b);
      data[k] = std::bit_cast<float>(bits);
    }
    if (!store.emplace(name, Tensor(std::move(shape), std::move(data))).second) {
      throw FormatError(entry_at, "duplicate tensor name '" + name + "'");
    }
  }
  if (!r.done()) throw FormatError(r.pos(), "trailing bytes after the last entry");
  return store;
}

void save_weights(const WeightStore& store, const std::string& path) {
  const std::vector<std::uint8_t> bytes = encode_weights(store);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("save_weights: cannot open " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      std::remove(tmp.c_str());
      throw Error("save_weights: write failed for " + tmp);
    }
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw Error("save_weights: cannot rename onto " + path);
  }
}

WeightStore load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("load_weights: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_weights(bytes);
}

std::int64_t total_elements(const WeightStore& store) {
  std::int64_t n = 0;
  for (const auto& [name, t] : store) n += t.numel();
  return n;
}

namespace {

std::string join(const std::vector<std::string>& names) {
  std::string s;
  for (const auto& n : names) s += (s.empty() ? "" : ", ") + n;
  return s;
}

std::string bind_message(const std::vector<std::string>& missing, const std::vector<std::string>& extra,
                         const std::vector<std::string>& mismatched) {
  std::string m = "weight bind failed";
  if (!missing.empty()) m += "; missing: " + join(missing);
  if (!extra.empty()) m += "; unused: " + join(extra);
  if (!mismatched.empty()) m += "; shape mismatch: " + join(mismatched);
  return m;
}

}  // namespace

BindError::BindError(std::vector<std::string> missing, std::vector<std::string> extra,
                     std::vector<std::string> mismatched)
    : Error(bind_message(missing, extra, mismatched)),
      missing_(std::move(missing)),
      extra_(std::move(extra)),
      mismatched_(std::move(mismatched)) {}

Tensor ParamRegistry::tensor(const std::string& name, Shape shape, InitKind init, double fill, std::string note) {
  for (const auto& e : manifest_) {
    if (e.name == name) throw ParameterError("ParamRegistry: duplicate parameter " + name);
  }
  manifest_.push_back({name, shape, init, fill, std::move(note)});
  if (!store_) return Tensor(shape, 0.0f);
  auto it = store_->find(name);
  if (it == store_->end()) {
    missing_.push_back(name);
    return Tensor(shape, 0.0f);
  }
  if (it->second.shape() != shape) {
    mismatched_.push_back(name + " (expected " + shape_str(shape) + ", got " + shape_str(it->second.shape()) + ")");
    return Tensor(shape, 0.0f);
  }
  return it->second;
}

ConvParams ParamRegistry::conv(const std::string& name, std::int64_t out, std::int64_t in, int kh, int kw, int stride,
                               int groups, InitKind init, std::string note) {
  ConvParams p;
  p.weight = tensor(name + ".weight", {out, in / groups, kh, kw}, init, 0.0, note);
  p.bias = tensor(name + ".bias", {out}, InitKind::zeros, 0.0, note);
  p.stride = stride;
  p.padding = {0, kh / 2, kw / 2};
  p.groups = groups;
  return p;
}

ConvParams ParamRegistry::conv3d(const std::string& name, std::int64_t out, std::int64_t in, int kd, int kh, int kw) {
  ConvParams p;
  p.weight = tensor(name + ".weight", {out, in, kd, kh, kw}, InitKind::conv);
  p.padding = {0, kh / 2, kw / 2};
  return p;
}

void ParamRegistry::finish() const {
  if (!store_) return;
  std::set<std::string> used;
  for (const auto& e : manifest_) used.insert(e.name);
  std::vector<std::string> extra;
  for (const auto& [name, t] : *store_) {
    if (!used.count(name)) extra.push_back(name);
  }
  if (!missing_.empty() || !extra.empty() || !mismatched_.empty()) throw BindError(missing_, extra, mismatched_);
}

}  // namespace dassf
