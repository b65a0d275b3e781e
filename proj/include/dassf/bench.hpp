#pragma once

// Median-of-repeats timing and the upsampler comparison report.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace dassf {

struct TimingStats {
  double median_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;
  int repeats = 0;
};

/// Runs `fn` `warmups` times untimed, then `repeats` times timed.
TimingStats time_median(const std::function<void()>& fn, int repeats, int warmups = 2);

struct BenchShape {
  std::int64_t c = 64, h = 80, w = 80;
};

/// "64x80x80,32x40x40" -> shapes; throws ParameterError on malformed input.
std::vector<BenchShape> parse_bench_sizes(const std::string& text);

struct BenchRow {
  std::string method;  // nearest, bilinear, dysample
  BenchShape shape;
  double median_ms = 0.0;
  double throughput = 0.0;  // tensors per second
  std::int64_t params = 0;
  double max_dev = 0.0;  // against the bilinear resize of the same input
};

struct BenchReport {
  int scale = 2;
  int groups = 4;
  int repeats = 5;
  int warmups = 2;
  std::vector<BenchRow> rows;
};

/// Times nearest, bilinear and zero-offset dysample upsampling of identical
/// random inputs. repeats must be >= 5.
BenchReport run_upsampler_bench(const std::vector<BenchShape>& shapes, int scale, int repeats,
                                std::uint64_t seed = 1, int groups = 4);

std::string bench_report_json(const BenchReport& r);
std::string bench_report_table(const BenchReport& r);

}  // namespace dassf
