#include "dassf/detector.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace dassf {
namespace {

using Ctx = Eager<float>;

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

void note(StageLog* log, std::string name, const Tensor& t, const Stopwatch& w) {
  if (log) log->push_back({std::move(name), t.shape(), w.ms()});
}

std::string level_name(int stride) {
  switch (stride) {
    case 4: return "p2";
    case 8: return "p3";
    case 16: return "p4";
    default: return "p5";
  }
}

Cbs make_cbs(ParamRegistry& reg, const std::string& name, std::int64_t out, std::int64_t in, int k, int stride = 1) {
  Cbs c;
  c.conv = reg.conv(name, out, in, k, k, stride);
  return c;
}

DySampleParams make_upsampler(ParamRegistry& reg, const std::string& name, std::int64_t channels, int scale,
                              int groups) {
  DySampleParams p;
  p.scale = scale;
  p.groups = groups;
  const std::int64_t out = 2LL * groups * scale * scale;
  p.offset_gen = reg.conv(name + ".offset_gen", out, channels, 1, 1, 1, 1, InitKind::offset_gen,
                          "s=" + std::to_string(scale) + " g=" + std::to_string(groups));
  return p;
}

Tensor cbs_f(const Tensor& x, const Cbs& p) {
  Ctx ctx;
  return cbs(ctx, x, p);
}

void expect_feature(const Tensor& t, std::int64_t c, std::int64_t h, std::int64_t w, const char* what) {
  const Shape& s = t.shape();
  if (s.size() != 4 || s[1] != c || s[2] != h || s[3] != w) {
    throw ConfigError(std::string("neck: ") + what + " is " + shape_str(s) + ", config expects (N, " +
                      std::to_string(c) + ", " + std::to_string(h) + ", " + std::to_string(w) + ")");
  }
}

}  // namespace

Model build_model(const ModelConfig& cfg, ParamRegistry& reg) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  const auto& c = cfg.channels;

  m.backbone.stem = reg.conv("backbone.stem", cfg.stem_channels, 3, 3, 3, 2);
  std::int64_t prev = cfg.stem_channels;
  for (int k = 0; k < 4; ++k) {
    m.backbone.stages[k] = reg.conv("backbone.stage" + std::to_string(k + 2), c[k], prev, 3, 3, 2);
    prev = c[k];
  }

  NeckWeights& n = m.neck;
  n.tfe_p4.large = make_cbs(reg, "neck.tfe_p4.large", c[2], c[1], 1);
  n.tfe_p4.medium = make_cbs(reg, "neck.tfe_p4.medium", c[2], c[2], 1);
  n.tfe_p4.small = make_cbs(reg, "neck.tfe_p4.small", c[2], c[3], 1);
  n.tfe_p4_fuse = make_cbs(reg, "neck.tfe_p4.fuse", c[2], 3 * c[2], 1);
  n.tfe_p3.large = make_cbs(reg, "neck.tfe_p3.large", c[1], c[0], 1);
  n.tfe_p3.medium = make_cbs(reg, "neck.tfe_p3.medium", c[1], c[1], 1);
  n.tfe_p3.small = make_cbs(reg, "neck.tfe_p3.small", c[1], c[2], 1);
  n.tfe_p3_fuse = make_cbs(reg, "neck.tfe_p3.fuse", c[1], 3 * c[1], 1);

  const std::string ssff = cfg.dssff ? "neck.dssff" : "neck.ssff";
  for (int k = 0; k < 3; ++k) {
    n.ssff_align[k] = make_cbs(reg, ssff + ".align_p" + std::to_string(k + 3), c[1], c[k + 1], 1);
  }
  if (cfg.dssff) {
    n.ssff.dysample_p4 = make_upsampler(reg, ssff + ".dysample_p4", c[1], 2, cfg.dysample_groups);
    n.ssff.dysample_p5 = make_upsampler(reg, ssff + ".dysample_p5", c[1], 4, cfg.dysample_groups);
  }
  n.ssff.conv3d = reg.conv3d(ssff + ".conv3d", c[1], c[1], 3, 1, 1);
  n.ssff.norm_scale = reg.tensor(ssff + ".norm.scale", {c[1]}, InitKind::ones);
  n.ssff.norm_shift = reg.tensor(ssff + ".norm.shift", {c[1]}, InitKind::zeros);
  n.ssff.gaussian = cfg.gaussian;

  const int k = eca_kernel_size(c[1]);
  n.cpam.channel_kernel = k;
  n.cpam.channel_conv = reg.conv("neck.cpam.channel_conv", 1, 1, k, 1, 1, 1, InitKind::conv, "k=" + std::to_string(k));
  n.cpam.pos_h = reg.conv("neck.cpam.pos_h", c[1], c[1], 3, 1);
  n.cpam.pos_w = reg.conv("neck.cpam.pos_w", c[1], c[1], 1, 3);

  if (cfg.xsmall) n.out2 = make_cbs(reg, "neck.out2", c[0], c[1] + c[0], 1);
  n.down_p4 = make_cbs(reg, "neck.down_p4", c[1], c[1], 3, 2);
  n.out4 = make_cbs(reg, "neck.out4", c[2], c[1] + c[2], 1);
  n.down_p5 = make_cbs(reg, "neck.down_p5", c[2], c[2], 3, 2);
  n.out5 = make_cbs(reg, "neck.out5", c[3], c[2] + c[3], 1);

  const std::int64_t hc = cfg.head_channels;
  for (int stride : cfg.head_strides()) {
    const std::string name = "head." + level_name(stride);
    const int level = stride == 4 ? 0 : stride == 8 ? 1 : stride == 16 ? 2 : 3;
    ScaleHead h;
    h.proj = make_cbs(reg, name + ".proj", hc, c[level], 1);
    h.cls = reg.conv(name + ".cls", cfg.num_classes, hc, 1, 1);
    h.box = reg.conv(name + ".box", 4, hc, 1, 1);
    m.head.scales.push_back(std::move(h));
  }
  if (cfg.dyhead) {
    DyHeadParams d;
    const auto levels = static_cast<std::int64_t>(m.head.scales.size());
    const std::int64_t hidden = std::max<std::int64_t>(1, hc / 4);
    d.scale_fc = reg.conv("head.dyhead.scale_fc", 1, 1, 1, 1);
    d.offset_conv = reg.conv("head.dyhead.offset_conv", 3 * kDeformTaps, hc, 3, 3);
    d.spatial_weight = reg.tensor("head.dyhead.spatial_weight", {levels, kDeformTaps}, InitKind::fill,
                                  1.0 / kDeformTaps);
    d.task_fc1 = reg.conv("head.dyhead.task_fc1", hidden, hc, 1, 1);
    d.task_fc2 = reg.conv("head.dyhead.task_fc2", 4 * hc, hidden, 1, 1);
    d.block_count = cfg.dyhead_blocks;
    m.head.dyhead = std::move(d);
  }
  return m;
}

std::vector<ParamEntry> model_manifest(const ModelConfig& cfg) {
  ParamRegistry reg;
  build_model(cfg, reg);
  return reg.manifest();
}

Model bind_model(const ModelConfig& cfg, const WeightStore& store) {
  ParamRegistry reg(store);
  Model m = build_model(cfg, reg);
  reg.finish();
  return m;
}

Features backbone_forward(const Tensor& image, const Model& m, StageLog* log) {
  const Shape& s = image.shape();
  if (s.size() != 4) throw DimensionError("rank", "backbone expects an (N, 3, H, W) image");
  if (s[1] != 3) throw DimensionError("C", "backbone expects 3 input channels, got " + shape_str(s));
  if (s[2] % 32 != 0) throw DimensionError("H", "image height " + std::to_string(s[2]) + " is not divisible by 32");
  if (s[3] % 32 != 0) throw DimensionError("W", "image width " + std::to_string(s[3]) + " is not divisible by 32");
  Ctx ctx;
  Stopwatch w;
  Tensor x = ctx.activation(ctx.conv2d(image, m.backbone.stem), Activation::silu);
  note(log, "backbone.stem", x, w);
  std::array<Tensor, 4> p;
  for (int k = 0; k < 4; ++k) {
    Stopwatch ws;
    x = ctx.activation(ctx.conv2d(x, m.backbone.stages[k]), Activation::silu);
    p[k] = x;
    note(log, "backbone.p" + std::to_string(k + 2), x, ws);
  }
  return {p[0], p[1], p[2], p[3]};
}

NeckOutputs neck_forward(const Features& f, const Model& m, StageLog* log) {
  const ModelConfig& cfg = m.cfg;
  if (m.neck.out2.has_value() != cfg.xsmall) throw ConfigError("neck: x-small weights do not match the toggle");
  if (m.neck.ssff.dysample_p4.has_value() != cfg.dssff) throw ConfigError("neck: upsampler weights do not match the toggle");
  const std::int64_t h = f.p2.dim(2) * 4, w = f.p2.dim(3) * 4;
  expect_feature(f.p2, cfg.channels[0], h / 4, w / 4, "P2");
  expect_feature(f.p3, cfg.channels[1], h / 8, w / 8, "P3");
  expect_feature(f.p4, cfg.channels[2], h / 16, w / 16, "P4");
  expect_feature(f.p5, cfg.channels[3], h / 32, w / 32, "P5");

  Ctx ctx;
  const NeckWeights& n = m.neck;
  NeckOutputs out;

  Stopwatch w1;
  out.tfe_p4 = cbs_f(tfe_fuse(ctx, f.p3, f.p4, f.p5, n.tfe_p4), n.tfe_p4_fuse);
  note(log, "neck.tfe_p4", out.tfe_p4, w1);

  Stopwatch w2;
  out.tfe_p3 = cbs_f(tfe_fuse(ctx, f.p2, f.p3, out.tfe_p4, n.tfe_p3), n.tfe_p3_fuse);
  note(log, "neck.tfe_p3", out.tfe_p3, w2);

  Stopwatch w3;
  out.ssff = dssff_fuse(ctx, cbs_f(f.p3, n.ssff_align[0]), cbs_f(f.p4, n.ssff_align[1]), cbs_f(f.p5, n.ssff_align[2]),
                        n.ssff);
  note(log, cfg.dssff ? "neck.dssff" : "neck.ssff", out.ssff, w3);

  Stopwatch w4;
  out.cpam = cpam_forward(ctx, out.tfe_p3, out.ssff, n.cpam);
  note(log, "neck.cpam", out.cpam, w4);

  const Tensor& out3 = out.cpam;
  Stopwatch w5;
  if (n.out2) {
    Tensor up = ctx.resize_nearest_to(out3, f.p2.dim(2), f.p2.dim(3));
    out.maps.push_back(cbs_f(ctx.concat({up, f.p2}, 1), *n.out2));
    out.strides.push_back(4);
    note(log, "neck.out_p2", out.maps.back(), w5);
  }
  out.maps.push_back(out3);
  out.strides.push_back(8);
  Stopwatch w6;
  Tensor out4 = cbs_f(ctx.concat({cbs_f(out3, n.down_p4), out.tfe_p4}, 1), n.out4);
  note(log, "neck.out_p4", out4, w6);
  Stopwatch w7;
  Tensor out5 = cbs_f(ctx.concat({cbs_f(out4, n.down_p5), f.p5}, 1), n.out5);
  note(log, "neck.out_p5", out5, w7);
  out.maps.push_back(out4);
  out.strides.push_back(16);
  out.maps.push_back(out5);
  out.strides.push_back(32);
  return out;
}

HeadOutputs head_forward(const NeckOutputs& nk, const Model& m, StageLog* log) {
  if (nk.maps.size() != m.head.scales.size()) {
    throw ConfigError("head: " + std::to_string(nk.maps.size()) + " neck outputs for " +
                      std::to_string(m.head.scales.size()) + " heads");
  }
  Ctx ctx;
  std::vector<Tensor> proj;
  Stopwatch wp;
  for (std::size_t i = 0; i < nk.maps.size(); ++i) proj.push_back(cbs_f(nk.maps[i], m.head.scales[i].proj));
  if (m.head.dyhead) {
    LevelStack stack = make_level_stack(ctx, proj, nk.strides);
    stack = dyhead_block(ctx, stack, *m.head.dyhead);
    proj = unstack_levels(ctx, stack);
    if (log) log->push_back({"head.dyhead", stack.levels.front().shape(), wp.ms()});
  }
  HeadOutputs out;
  for (std::size_t i = 0; i < proj.size(); ++i) {
    Stopwatch w;
    const ScaleHead& h = m.head.scales[i];
    Tensor cls = ctx.conv2d(proj[i], h.cls);
    Tensor box = ctx.activation(ctx.conv2d(proj[i], h.box), Activation::relu);
    out.raw.push_back(ctx.concat({cls, box}, 1));
    out.strides.push_back(nk.strides[i]);
    note(log, "head." + level_name(nk.strides[i]), out.raw.back(), w);
  }
  return out;
}

std::vector<Detection> decode_predictions(const HeadOutputs& raw, const ModelConfig& cfg) {
  std::vector<Detection> dets;
  for (std::size_t s = 0; s < raw.raw.size(); ++s) {
    const Tensor& t = raw.raw[s];
    const Shape& sh = t.shape();
    if (sh.size() != 4 || sh[1] != cfg.num_classes + 4) {
      throw DimensionError("C", "decode: expected " + std::to_string(cfg.num_classes + 4) + " channels, got " +
                                    shape_str(sh));
    }
    if (sh[0] != 1) throw DimensionError("N", "decode handles a single image");
    const std::int64_t h = sh[2], w = sh[3], plane = h * w;
    const double stride = raw.strides.at(s);
    const double img_w = static_cast<double>(cfg.input_w), img_h = static_cast<double>(cfg.input_h);
    const auto d = t.data();
    for (std::int64_t i = 0; i < h; ++i) {
      for (std::int64_t j = 0; j < w; ++j) {
        const std::int64_t cell = i * w + j;
        int best = 0;
        for (int k = 1; k < cfg.num_classes; ++k) {
          if (d[static_cast<std::size_t>(k * plane + cell)] > d[static_cast<std::size_t>(best * plane + cell)]) best = k;
        }
        const double logit = d[static_cast<std::size_t>(best * plane + cell)];
        const double score = 1.0 / (1.0 + std::exp(-logit));
        if (!(score > cfg.confidence)) continue;
        auto dist = [&](int k) { return static_cast<double>(d[static_cast<std::size_t>((cfg.num_classes + k) * plane + cell)]); };
        const double cx = (static_cast<double>(j) + 0.5) * stride, cy = (static_cast<double>(i) + 0.5) * stride;
        Box b;
        b.x1 = static_cast<float>(std::clamp(cx - dist(0) * stride, 0.0, img_w));
        b.y1 = static_cast<float>(std::clamp(cy - dist(1) * stride, 0.0, img_h));
        b.x2 = static_cast<float>(std::clamp(cx + dist(2) * stride, 0.0, img_w));
        b.y2 = static_cast<float>(std::clamp(cy + dist(3) * stride, 0.0, img_h));
        if (!(b.x1 < b.x2 && b.y1 < b.y2)) continue;
        dets.push_back({best, static_cast<float>(score), b});
      }
    }
  }
  return dets;
}

double iou(const Box& a, const Box& b) {
  const double iw = std::max(0.0, static_cast<double>(std::min(a.x2, b.x2)) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, static_cast<double>(std::min(a.y2, b.y2)) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double area_a = static_cast<double>(a.x2 - a.x1) * (a.y2 - a.y1);
  const double area_b = static_cast<double>(b.x2 - b.x1) * (b.y2 - b.y1);
  const double uni = area_a + area_b - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<Detection> nms(std::vector<Detection> dets, double iou_thresh) {
  if (!(iou_thresh > 0.0 && iou_thresh < 1.0)) throw ParameterError("nms: iou threshold must lie in (0, 1)");
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
  std::vector<Detection> kept;
  for (const Detection& d : dets) {
    bool keep = true;
    for (const Detection& k : kept) {
      if (k.class_id == d.class_id && iou(k.box, d.box) > iou_thresh) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(d);
  }
  return kept;
}

std::vector<Detection> detect(const Tensor& image, const Model& m, StageLog* log) {
  const Features f = backbone_forward(image, m, log);
  const NeckOutputs n = neck_forward(f, m, log);
  const HeadOutputs h = head_forward(n, m, log);
  Stopwatch w;
  auto dets = nms(decode_predictions(h, m.cfg), m.cfg.iou);
  if (log) log->push_back({"decode+nms", {static_cast<std::int64_t>(dets.size())}, w.ms()});
  return dets;
}

namespace {

// Skips whitespace and '#' comments between PPM header tokens.
std::int64_t ppm_token(std::istream& in, const std::string& path) {
  int c = in.peek();
  while (c != EOF) {
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
    c = in.peek();
  }
  std::int64_t v = -1;
  if (!(in >> v) || v < 1) throw Error("read_ppm: malformed header in " + path);
  return v;
}

}  // namespace

Tensor read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("read_ppm: cannot open " + path);
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] != 'P' || magic[1] != '6') throw Error("read_ppm: " + path + " is not a binary PPM (P6)");
  const std::int64_t w = ppm_token(in, path), h = ppm_token(in, path), maxval = ppm_token(in, path);
  if (maxval > 255) throw Error("read_ppm: only 8-bit PPM files are supported");
  in.get();  // single whitespace before the raster
  std::vector<unsigned char> raster(static_cast<std::size_t>(w * h * 3));
  in.read(reinterpret_cast<char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (in.gcount() != static_cast<std::streamsize>(raster.size())) throw Error("read_ppm: truncated raster in " + path);
  Tensor img({1, 3, h, w});
  auto d = img.mutable_data();
  for (std::int64_t p = 0; p < h * w; ++p) {
    for (int c = 0; c < 3; ++c) {
      d[static_cast<std::size_t>(c * h * w + p)] =
          static_cast<float>(raster[static_cast<std::size_t>(p * 3 + c)]) / static_cast<float>(maxval);
    }
  }
  return img;
}

void write_ppm(const Tensor& image, const std::string& path) {
  const Shape& s = image.shape();
  if (s.size() != 4 || s[0] != 1 || s[1] != 3) throw DimensionError("C", "write_ppm expects a (1, 3, H, W) image");
  const std::int64_t h = s[2], w = s[3];
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("write_ppm: cannot open " + path);
  out << "P6\n" << w << " " << h << "\n255\n";
  const auto d = image.data();
  for (std::int64_t p = 0; p < h * w; ++p) {
    for (int c = 0; c < 3; ++c) {
      const float v = std::clamp(d[static_cast<std::size_t>(c * h * w + p)], 0.0f, 1.0f);
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f))));
    }
  }
}

Tensor read_raw_image(const std::string& path, std::int64_t h, std::int64_t w) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("read_raw_image: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::int64_t n = 3 * h * w;
  if (static_cast<std::int64_t>(bytes.size()) != n * 4) {
    throw Error("read_raw_image: " + path + " holds " + std::to_string(bytes.size()) + " bytes, expected " +
                std::to_string(n * 4) + " for 3x" + std::to_string(h) + "x" + std::to_string(w) + " float32");
  }
  Tensor img({1, 3, h, w});
  auto d = img.mutable_data();
  for (std::int64_t i = 0; i < n; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[static_cast<std::size_t>(i * 4 + b)]) << (8 * b);
    d[static_cast<std::size_t>(i)] = std::bit_cast<float>(bits);
  }
  if (!img.all_finite()) throw Error("read_raw_image: " + path + " contains non-finite values");
  return img;
}

Tensor load_image(const std::string& path, const ModelConfig& cfg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open image " + path);
  char magic[2] = {0, 0};
  in.read(magic, 2);
  in.close();
  Tensor img = (magic[0] == 'P' && magic[1] == '6') ? read_ppm(path) : read_raw_image(path, cfg.input_h, cfg.input_w);
  if (img.dim(2) != cfg.input_h || img.dim(3) != cfg.input_w) {
    throw DimensionError(img.dim(2) != cfg.input_h ? "H" : "W",
                         "image is " + std::to_string(img.dim(3)) + "x" + std::to_string(img.dim(2)) +
                             ", config expects " + std::to_string(cfg.input_w) + "x" + std::to_string(cfg.input_h));
  }
  return img;
}

std::string format_detections(const std::vector<Detection>& dets) {
  std::ostringstream os;
  os << std::fixed;
  for (const Detection& d : dets) {
    os << d.class_id << " " << std::setprecision(6) << d.score << " " << std::setprecision(2) << d.box.x1 << " "
       << d.box.y1 << " " << d.box.x2 << " " << d.box.y2 << "\n";
  }
  return os.str();
}

}  // namespace dassf
