#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wood/transport.hpp"

namespace wood::cli {

/// Runs one command line (argv[0] excluded) and returns the process exit
/// code. Diagnostics go to stderr, summaries to stdout.
int run(const std::vector<std::string>& args);

struct BenchRow {
  std::size_t k = 0;
  double binary_ms = 0.0;
  double dynamic_ms = 0.0;
  double ratio = 0.0;
};

/// Mean per-sample time of the Sinkhorn-path score under both matrices.
std::vector<BenchRow> bench_score(std::span<const std::size_t> ks, std::size_t repeats,
                                  const SinkhornConfig& cfg, std::uint64_t seed);

}  // namespace wood::cli
