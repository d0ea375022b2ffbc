#pragma once

#include "gsc/gaussian.h"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace gsc {

struct BenchRow {
  std::string method; // "analytic" or "sampled-<n>"
  std::size_t gaussians = 0;
  std::size_t rays = 0;
  double seconds = 0.0;
  double meanAbsDelta = 0.0; // mean |T - T_analytic| over the ray set
};

struct BenchConfig {
  std::size_t rays = 1000000;
  std::vector<int> samples = {16, 64};
  std::uint64_t seed = 0;
};

/// Shadow rays that start near the Gaussians (or in the unit cube when there
/// are none) and leave in uniformly random directions. Deterministic per seed.
std::vector<Ray> benchRays(std::span<const AnisoGaussian> gaussians, std::size_t count, std::uint64_t seed);

/// Times analytic transmittance, then stratified sampling at each sample
/// count, over the same ray set. Sampled rays integrate over their overlap
/// with the Gaussians' 3-sigma bounding box. Throws InvalidParameter for
/// fewer than 2 samples or zero rays.
std::vector<BenchRow> benchShadows(std::span<const AnisoGaussian> gaussians, const BenchConfig& cfg);

void writeBenchCsv(std::span<const BenchRow> rows, std::ostream& out);

/// Aligned table with a speedup column relative to the analytic row.
std::string formatBenchTable(std::span<const BenchRow> rows);

} // namespace gsc
