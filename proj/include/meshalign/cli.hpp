#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace meshalign {

/// Entry point of the `meshalign` tool:
///   meshalign <synth|align|eval|bench> [flags]
/// Returns the process exit code. Normal output goes to `out`, diagnostics
/// to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct BenchRow {
  int n = 0;
  long long cost_channels = 0;
  long long ccl_channels = 0;
  double cost_seconds = 0;
  double ccl_seconds = 0;
  long long cost_bytes = 0;
  long long ccl_bytes = 0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  double cost_slope = 0;  ///< log-log slope of time against n
  double ccl_slope = 0;
};

/// Times the global cost volume (radius n) against the contextual
/// correlation chain on random normalised n x n feature maps.
BenchReport run_bench(const std::vector<int>& sizes, int channels, double min_seconds,
                      unsigned seed);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace meshalign
