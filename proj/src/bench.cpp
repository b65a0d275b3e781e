#include "dassf/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "dassf/dysample.hpp"
#include "dassf/errors.hpp"
#include "dassf/rng.hpp"

namespace dassf {

TimingStats time_median(const std::function<void()>& fn, int repeats, int warmups) {
  if (repeats < 1) throw ParameterError("time_median: repeats must be >= 1");
  for (int i = 0; i < warmups; ++i) fn();
  std::vector<double> ms;
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(ms.begin(), ms.end());
  const std::size_t n = ms.size();
  const double median = n % 2 == 1 ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);
  return {median, ms.front(), ms.back(), repeats};
}

std::vector<BenchShape> parse_bench_sizes(const std::string& text) {
  std::vector<BenchShape> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    BenchShape s;
    long long c = 0, h = 0, w = 0;
    char x1 = 0, x2 = 0, extra = 0;
    if (std::sscanf(item.c_str(), "%lld%c%lld%c%lld%c", &c, &x1, &h, &x2, &w, &extra) != 5 || x1 != 'x' || x2 != 'x' ||
        c < 1 || h < 1 || w < 1) {
      throw ParameterError("bench: size '" + item + "' is not of the form CxHxW");
    }
    s.c = c;
    s.h = h;
    s.w = w;
    out.push_back(s);
  }
  if (out.empty()) throw ParameterError("bench: no sizes given");
  return out;
}

BenchReport run_upsampler_bench(const std::vector<BenchShape>& shapes, int scale, int repeats, std::uint64_t seed,
                                int groups) {
  if (repeats < 5) throw ParameterError("bench: repeats must be >= 5");
  if (scale < 1) throw ParameterError("bench: scale must be >= 1");
  BenchReport rep;
  rep.scale = scale;
  rep.groups = groups;
  rep.repeats = repeats;
  for (const BenchShape& s : shapes) {
    Rng rng(seed);
    const Tensor x = random_uniform<float>({1, s.c, s.h, s.w}, rng, 0.0, 1.0);
    DySampleParams p;
    p.scale = scale;
    p.groups = groups;
    const std::int64_t oc = 2LL * groups * scale * scale;
    p.offset_gen.weight = Tensor({oc, s.c, 1, 1});
    p.offset_gen.bias = Tensor({oc});

    const Tensor ref = resize_bilinear(x, scale);
    struct Method {
      const char* name;
      std::function<Tensor()> run;
      std::int64_t params;
    };
    const std::vector<Method> methods = {
        {"nearest", [&] { return resize_nearest(x, scale); }, 0},
        {"bilinear", [&] { return resize_bilinear(x, scale); }, 0},
        {"dysample", [&] { return dysample_upsample(x, p); }, dysample_param_count(p)},
    };
    for (const Method& m : methods) {
      Tensor out;
      const TimingStats t = time_median([&] { out = m.run(); }, repeats, rep.warmups);
      BenchRow row;
      row.method = m.name;
      row.shape = s;
      row.median_ms = t.median_ms;
      row.throughput = t.median_ms > 0.0 ? 1000.0 / t.median_ms : 0.0;
      row.params = m.params;
      row.max_dev = max_abs_diff(out, ref);
      rep.rows.push_back(row);
    }
  }
  return rep;
}

std::string bench_report_json(const BenchReport& r) {
  nlohmann::json j;
  j["scale"] = r.scale;
  j["groups"] = r.groups;
  j["repeats"] = r.repeats;
  j["warmups"] = r.warmups;
  j["rows"] = nlohmann::json::array();
  for (const BenchRow& row : r.rows) {
    j["rows"].push_back({{"method", row.method},
                         {"c", row.shape.c},
                         {"h", row.shape.h},
                         {"w", row.shape.w},
                         {"median_ms", row.median_ms},
                         {"throughput_per_s", row.throughput},
                         {"params", row.params},
                         {"max_abs_dev_vs_bilinear", row.max_dev}});
  }
  return j.dump(2);
}

std::string bench_report_table(const BenchReport& r) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "scale=%d groups=%d repeats=%d warmups=%d\n", r.scale, r.groups, r.repeats,
                r.warmups);
  os << line;
  std::snprintf(line, sizeof line, "%-10s %-14s %12s %14s %10s %14s\n", "method", "CxHxW", "median_ms", "tensors/s",
                "params", "max_dev");
  os << line;
  for (const BenchRow& row : r.rows) {
    const std::string shape =
        std::to_string(row.shape.c) + "x" + std::to_string(row.shape.h) + "x" + std::to_string(row.shape.w);
    std::snprintf(line, sizeof line, "%-10s %-14s %12.3f %14.1f %10lld %14.3e\n", row.method.c_str(), shape.c_str(),
                  row.median_ms, row.throughput, static_cast<long long>(row.params), row.max_dev);
    os << line;
  }
  return os.str();
}

}  // namespace dassf
