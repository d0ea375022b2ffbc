#include "gsc/bench.h"

#include "gsc/errors.h"
#include "gsc/oracle.h"
#include "gsc/parallel.h"
#include "gsc/rng.h"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>

namespace gsc {

namespace {

constexpr double kBoxSigmas = 3.0;

struct Box {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  // Parametric overlap of r with the box, empty when hi <= lo.
  std::pair<double, double> clip(const Ray& r) const {
    double t0 = r.tMin();
    double t1 = r.tMax();
    for (int a = 0; a < 3; ++a) {
      const double inv = 1.0 / r.direction()[a];
      double near = (lo[a] - r.origin()[a]) * inv;
      double far = (hi[a] - r.origin()[a]) * inv;
      if (near > far) {
        std::swap(near, far);
      }
      t0 = std::max(t0, near);
      t1 = std::min(t1, far);
    }
    return {t0, t1};
  }
};

Box boundingBox(std::span<const AnisoGaussian> gaussians) {
  Box box;
  for (const auto& g : gaussians) {
    const Vec3 reach = Vec3::Constant(kBoxSigmas * g.sigma.maxCoeff());
    box.lo = box.lo.cwiseMin(g.mean - reach);
    box.hi = box.hi.cwiseMax(g.mean + reach);
  }
  return box;
}

template <typename F>
double timed(F&& fn) {
  const auto start = std::chrono::steady_clock::now();
  fn();
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
  return std::max(elapsed.count(), 1e-9);
}

} // namespace

std::vector<Ray> benchRays(std::span<const AnisoGaussian> gaussians, std::size_t count, std::uint64_t seed) {
  std::vector<Ray> rays;
  rays.reserve(count);
  SplitMix64 gen(seed);
  for (std::size_t i = 0; i < count; ++i) {
    Vec3 origin;
    if (gaussians.empty()) {
      origin = Vec3(2.0 * uniform01(gen) - 1.0, 2.0 * uniform01(gen) - 1.0, 2.0 * uniform01(gen) - 1.0);
    } else {
      const auto k = std::min(static_cast<std::size_t>(uniform01(gen) * gaussians.size()), gaussians.size() - 1);
      const AnisoGaussian& g = gaussians[k];
      const Mat3 rot = rotationFromRot6(g.rot6);
      const Vec3 z(standardNormal(gen), standardNormal(gen), standardNormal(gen));
      origin = g.mean + 2.0 * rot.transpose() * g.sigma.cwiseProduct(z);
    }
    rays.emplace_back(origin, uniformUnitVector(gen));
  }
  return rays;
}

std::vector<BenchRow> benchShadows(std::span<const AnisoGaussian> gaussians, const BenchConfig& cfg) {
  if (cfg.rays == 0) {
    throw InvalidParameter("bench needs at least one ray");
  }
  for (int n : cfg.samples) {
    if (n < 2) {
      throw InvalidParameter(fmt::format("sample count {} is below 2", n));
    }
  }
  const auto rays = benchRays(gaussians, cfg.rays, cfg.seed);
  const auto prepared = prepare(gaussians);
  const Box box = boundingBox(gaussians);

  std::vector<BenchRow> rows;
  std::vector<double> analytic(rays.size());
  const double analyticSeconds = timed([&] {
    parallelFor(rays.size(), [&](std::size_t i) { analytic[i] = transmittance(prepared, rays[i]); });
  });
  rows.push_back({"analytic", gaussians.size(), rays.size(), analyticSeconds, 0.0});

  std::vector<double> sampled(rays.size());
  for (int n : cfg.samples) {
    const std::uint64_t seed = mixSeed(cfg.seed, static_cast<std::uint64_t>(n));
    const double seconds = timed([&] {
      parallelFor(rays.size(), [&](std::size_t i) {
        const auto [near, far] = box.clip(rays[i]);
        sampled[i] = oracle::nerfStyleShadow(prepared, rays[i], near, far, n, mixSeed(seed, i));
      });
    });
    double delta = 0.0;
    for (std::size_t i = 0; i < rays.size(); ++i) {
      delta += std::abs(sampled[i] - analytic[i]);
    }
    rows.push_back({fmt::format("sampled-{}", n), gaussians.size(), rays.size(), seconds, delta / rays.size()});
  }
  return rows;
}

void writeBenchCsv(std::span<const BenchRow> rows, std::ostream& out) {
  out << "method,gaussians,rays,seconds,mean_abs_delta\n";
  for (const auto& r : rows) {
    out << fmt::format("{},{},{},{:.6f},{:.9g}\n", r.method, r.gaussians, r.rays, r.seconds, r.meanAbsDelta);
  }
}

std::string formatBenchTable(std::span<const BenchRow> rows) {
  double reference = 0.0;
  for (const auto& r : rows) {
    if (r.method == "analytic") {
      reference = r.seconds;
    }
  }
  std::string out = fmt::format(
      "{:<12} {:>10} {:>10} {:>12} {:>10} {:>16}\n", "method", "gaussians", "rays", "seconds", "slowdown",
      "mean |dT|");
  for (const auto& r : rows) {
    const std::string ratio = reference > 0.0 ? fmt::format("{:.2f}x", r.seconds / reference) : "-";
    out += fmt::format(
        "{:<12} {:>10} {:>10} {:>12.4f} {:>10} {:>16.3e}\n", r.method, r.gaussians, r.rays, r.seconds, ratio,
        r.meanAbsDelta);
  }
  return out;
}

} // namespace gsc
