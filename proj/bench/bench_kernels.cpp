// Serial reference kernels against the OpenMP versions, then the upsampler table.
//
//   dassf_bench_kernels [--repeats N] [--threads N]

#include <omp.h>

#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dassf/bench.hpp"
#include "dassf/reference.hpp"
#include "dassf/rng.hpp"

using namespace dassf;

namespace {

struct Kernel {
  std::string name;
  std::function<Tensor()> serial, parallel;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel timing: serial reference vs OpenMP"};
  int repeats = 5;
  int threads = omp_get_max_threads();
  app.add_option("--repeats", repeats, "Timed repeats")->capture_default_str();
  app.add_option("--threads", threads, "OpenMP threads for the parallel kernels")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  Rng rng(1);
  const Tensor x = random_uniform<float>({1, 64, 80, 80}, rng);
  const Tensor x5 = random_uniform<float>({1, 64, 3, 40, 40}, rng);
  const Tensor coords = random_uniform<float>({1, 2, 160, 160}, rng);
  ConvParams c2;
  c2.weight = random_uniform<float>({64, 64, 3, 3}, rng);
  c2.bias = random_uniform<float>({64}, rng);
  c2.padding = {0, 1, 1};
  ConvParams c3;
  c3.weight = random_uniform<float>({64, 64, 3, 1, 1}, rng);

  const std::vector<Kernel> kernels = {
      {"conv2d 3x3 64->64 @80", [&] { return reference::conv2d(x, c2); }, [&] { return conv2d(x, c2); }},
      {"conv3d 3x1x1 64->64", [&] { return reference::conv3d(x5, c3); }, [&] { return conv3d(x5, c3); }},
      {"max pool 2/2", [&] { return reference::pool2d(x, PoolMode::max, 2, 2); },
       [&] { return pool2d(x, PoolMode::max, 2, 2); }},
      {"nearest x2", [&] { return reference::resize_nearest_to(x, 160, 160); },
       [&] { return resize_nearest_to(x, 160, 160); }},
      {"bilinear x2", [&] { return reference::resize_bilinear(x, 2); }, [&] { return resize_bilinear(x, 2); }},
      {"grid sample 160x160", [&] { return reference::sample_bilinear_grid(x, coords); },
       [&] { return sample_bilinear_grid(x, coords); }},
      {"depth_to_space r=2", [&] { return reference::depth_to_space(x, 2); }, [&] { return depth_to_space(x, 2); }},
  };

  std::printf("threads=%d repeats=%d\n", threads, repeats);
  std::printf("%-24s %12s %12s %8s  %s\n", "kernel", "serial_ms", "omp_ms", "speedup", "identical");
  for (const Kernel& k : kernels) {
    Tensor a, b;
    omp_set_num_threads(1);
    const TimingStats ts = time_median([&] { a = k.serial(); }, repeats);
    omp_set_num_threads(threads);
    const TimingStats tp = time_median([&] { b = k.parallel(); }, repeats);
    std::printf("%-24s %12.3f %12.3f %8.2f  %s\n", k.name.c_str(), ts.median_ms, tp.median_ms,
                tp.median_ms > 0 ? ts.median_ms / tp.median_ms : 0.0, a == b ? "yes" : "no");
  }

  std::printf("\n");
  std::fputs(bench_report_table(run_upsampler_bench({{64, 80, 80}}, 2, std::max(repeats, 5), 1, 4)).c_str(), stdout);
  return 0;
}
