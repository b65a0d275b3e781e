// dassf: forward runs, upsampler benchmark, gradient checks, model inspection.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "dassf/bench.hpp"
#include "dassf/detector.hpp"
#include "dassf/gradcheck_suite.hpp"
#include "dassf/rng.hpp"
#include "dassf/weights_io.hpp"

namespace {

using namespace dassf;

void write_atomically(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp + " for writing");
    out << text;
    if (!out) {
      std::remove(tmp.c_str());
      throw Error("write failed for " + tmp);
    }
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw Error("cannot rename onto " + path);
  }
}

ModelConfig config_or_default(const std::string& path) { return path.empty() ? ModelConfig{} : load_config(path); }

WeightStore weights_for(const ModelConfig& cfg, const std::string& path, std::uint64_t seed) {
  return path.empty() ? init_random(cfg, seed) : load_weights(path);
}

struct ForwardOpts {
  std::string config, weights, image, out;
  std::uint64_t seed = 0;
  double confidence = -1.0;
};

int cmd_forward(const ForwardOpts& o) {
  ModelConfig cfg = config_or_default(o.config);
  if (o.confidence >= 0.0) {
    cfg.confidence = o.confidence;
    cfg.validate();
  }
  const Model model = bind_model(cfg, weights_for(cfg, o.weights, o.seed));
  const Tensor image = load_image(o.image, cfg);
  StageLog log;
  const auto dets = detect(image, model, &log);
  for (const StageRecord& r : log) {
    std::printf("%-16s %-22s %9.2f ms\n", r.name.c_str(), shape_str(r.shape).c_str(), r.ms);
  }
  std::printf("detections: %zu\n", dets.size());
  write_atomically(o.out, format_detections(dets));
  return 0;
}

struct BenchOpts {
  std::string sizes = "64x80x80", out;
  int scale = 2, repeats = 5, groups = 4;
  std::uint64_t seed = 1;
};

int cmd_bench(const BenchOpts& o) {
  const BenchReport r = run_upsampler_bench(parse_bench_sizes(o.sizes), o.scale, o.repeats, o.seed, o.groups);
  std::cout << bench_report_table(r);
  if (!o.out.empty()) write_atomically(o.out, bench_report_json(r) + "\n");
  return 0;
}

struct GradOpts {
  std::string module = "all";
  std::uint64_t seed = 1;
  double eps = 1e-5;
};

int cmd_gradcheck(const GradOpts& o) {
  const auto results = run_gradcheck_suite(o.module, o.seed, o.eps);
  int failed = 0;
  std::printf("%-14s %-26s %14s  %s\n", "module", "operator", "max_rel_err", "result");
  for (const auto& r : results) {
    std::printf("%-14s %-26s %14.3e  %s%s%s\n", r.module.c_str(), r.op.c_str(), r.max_rel_error,
                r.pass ? "PASS" : "FAIL", r.error.empty() ? "" : "  ", r.error.c_str());
    if (!r.pass) ++failed;
  }
  if (failed > 0) {
    std::fprintf(stderr, "gradcheck: %d of %zu operators failed:", failed, results.size());
    for (const auto& r : results) {
      if (!r.pass) std::fprintf(stderr, " %s/%s", r.module.c_str(), r.op.c_str());
    }
    std::fprintf(stderr, "\n");
    return 1;
  }
  std::printf("all %zu operators pass (tolerance %.0e)\n", results.size(), kGradcheckTolerance);
  return 0;
}

struct InspectOpts {
  std::string config, weights;
  std::uint64_t seed = 0;
};

int cmd_inspect(const InspectOpts& o) {
  const ModelConfig cfg = config_or_default(o.config);
  const WeightStore store = weights_for(cfg, o.weights, o.seed);
  bind_model(cfg, store);
  std::map<std::string, std::string> notes;
  for (const ParamEntry& e : model_manifest(cfg)) notes[e.name] = e.note;
  std::map<std::string, std::int64_t> per_module;
  std::printf("%-48s %-20s %10s  %s\n", "tensor", "shape", "elements", "note");
  for (const auto& [name, t] : store) {
    std::printf("%-48s %-20s %10lld  %s\n", name.c_str(), shape_str(t.shape()).c_str(),
                static_cast<long long>(t.numel()), notes[name].c_str());
    const auto first = name.find('.');
    const auto second = name.find('.', first + 1);
    per_module[name.substr(0, second)] += t.numel();
  }
  std::printf("\nper-module totals\n");
  for (const auto& [m, n] : per_module) std::printf("  %-28s %10lld\n", m.c_str(), static_cast<long long>(n));
  std::printf("  %-28s %10lld\n", "total", static_cast<long long>(total_elements(store)));
  std::printf("\ntoggles: dssff=%s xsmall=%s dyhead=%s\n", cfg.dssff ? "on" : "off", cfg.xsmall ? "on" : "off",
              cfg.dyhead ? "on" : "off");
  return 0;
}

struct InitOpts {
  std::string config, out;
  std::uint64_t seed = 0;
};

int cmd_init(const InitOpts& o) {
  const ModelConfig cfg = config_or_default(o.config);
  const WeightStore store = init_random(cfg, o.seed);
  save_weights(store, o.out);
  std::printf("wrote %zu tensors (%lld values) to %s\n", store.size(), static_cast<long long>(total_elements(store)),
              o.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DASSF kernels: detector forward pass, upsampler benchmark, gradient checks"};
  app.require_subcommand(1);

  ForwardOpts fo;
  auto* fwd = app.add_subcommand("forward", "Run detection on one image");
  fwd->add_option("--config", fo.config, "Model config JSON (defaults when omitted)");
  auto* fw = fwd->add_option("--weights", fo.weights, "Weight file");
  auto* fs = fwd->add_option("--seed", fo.seed, "Initialize weights from this seed instead of a file");
  fw->excludes(fs);
  fwd->add_option("--image", fo.image, "PPM (P6) or raw planar float32 image")->required();
  fwd->add_option("--out", fo.out, "Detection output file")->required();
  fwd->add_option("--confidence", fo.confidence, "Override the confidence threshold");

  BenchOpts bo;
  auto* bench = app.add_subcommand("bench", "Compare nearest, bilinear and dynamic upsampling");
  bench->add_option("--sizes", bo.sizes, "Comma-separated CxHxW list")->capture_default_str();
  bench->add_option("--scale", bo.scale, "Upsampling factor")->capture_default_str();
  bench->add_option("--repeats", bo.repeats, "Timed repeats (>= 5)")->capture_default_str();
  bench->add_option("--groups", bo.groups, "Upsampler groups")->capture_default_str();
  bench->add_option("--seed", bo.seed, "Input seed")->capture_default_str();
  bench->add_option("--out", bo.out, "JSON report path");

  GradOpts go;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  grad->add_option("--module", go.module, "tensor-core, dysample, scale-fusion, dyhead or all")
      ->check(CLI::IsMember({"tensor-core", "dysample", "scale-fusion", "dyhead", "all"}))
      ->capture_default_str();
  grad->add_option("--seed", go.seed, "Input seed")->capture_default_str();
  grad->add_option("--eps", go.eps, "Central-difference step")->capture_default_str();

  InspectOpts io;
  auto* insp = app.add_subcommand("inspect", "List parameters and bind them strictly");
  insp->add_option("--config", io.config, "Model config JSON");
  auto* iw = insp->add_option("--weights", io.weights, "Weight file");
  auto* is = insp->add_option("--seed", io.seed, "Initialize weights from this seed instead of a file");
  iw->excludes(is);

  InitOpts no;
  auto* init = app.add_subcommand("init", "Write seeded random weights");
  init->add_option("--config", no.config, "Model config JSON");
  init->add_option("--seed", no.seed, "Seed")->capture_default_str();
  init->add_option("--out", no.out, "Weight file")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (fwd->parsed()) return cmd_forward(fo);
    if (bench->parsed()) return cmd_bench(bo);
    if (grad->parsed()) return cmd_gradcheck(go);
    if (insp->parsed()) return cmd_inspect(io);
    if (init->parsed()) return cmd_init(no);
  } catch (const BindError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
