#include "gsc/oracle.h"

#include "gsc/errors.h"
#include "gsc/rng.h"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace gsc::oracle {

std::pair<double, double> integrationBounds(std::span<const AnisoGaussian> gaussians, const Ray& r) {
  if (gaussians.empty()) {
    return {r.tMin(), r.tMin()};
  }
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& g : gaussians) {
    const double center = r.direction().dot(g.mean - r.origin());
    const double reach = kTruncationSigmas * g.sigma.maxCoeff();
    lo = std::min(lo, center - reach);
    hi = std::max(hi, center + reach);
  }
  const double start = std::max(r.tMin(), lo);
  const double end = std::min(r.tMax(), hi);
  if (end <= start) {
    return {start, start};
  }
  return {start, end};
}

double quadOpticalDepth(std::span<const AnisoGaussian> gaussians, const Ray& r, const QuadratureConfig& cfg) {
  if (cfg.steps < 2) {
    throw InvalidParameter("quadrature needs at least 2 steps");
  }
  const auto [start, end] = integrationBounds(gaussians, r);
  if (end <= start) {
    return 0.0;
  }
  auto density = [&](double t) {
    const Vec3 x = r.at(t);
    double sum = 0.0;
    for (const auto& g : gaussians) {
      sum += densityAt(g, x);
    }
    return sum;
  };
  const double h = (end - start) / cfg.steps;
  double sum = 0.5 * (density(start) + density(end));
  for (int i = 1; i < cfg.steps; ++i) {
    sum += density(start + i * h);
  }
  return sum * h;
}

double quadTransmittance(std::span<const AnisoGaussian> gaussians, const Ray& r, const QuadratureConfig& cfg) {
  return std::exp(-quadOpticalDepth(gaussians, r, cfg));
}

Eigen::VectorXd fdGradient(const ScalarFunction& loss, const Eigen::VectorXd& params, double h) {
  if (!(h > 0.0)) {
    throw InvalidParameter(fmt::format("finite-difference step {} must be positive", h));
  }
  Eigen::VectorXd grad(params.size());
  Eigen::VectorXd probe = params;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    probe[i] = params[i] + h;
    const double fwd = loss(probe);
    probe[i] = params[i] - h;
    const double bwd = loss(probe);
    probe[i] = params[i];
    if (!std::isfinite(fwd) || !std::isfinite(bwd)) {
      throw OptimizationFailure(
          fmt::format("non-finite loss probing coordinate {}", i), static_cast<std::size_t>(i));
    }
    grad[i] = (fwd - bwd) / (2.0 * h);
  }
  return grad;
}

double nerfStyleShadow(
    std::span<const PreparedGaussian> gaussians,
    const Ray& r,
    double near,
    double far,
    int samples,
    std::uint64_t seed) {
  if (samples < 2) {
    throw InvalidParameter("nerfStyleShadow needs at least 2 samples");
  }
  const double start = std::max(near, r.tMin());
  const double end = std::min(far, r.tMax());
  if (!(end > start) || gaussians.empty()) {
    return 1.0;
  }
  SplitMix64 gen(seed);
  const double delta = (end - start) / samples;
  double depth = 0.0;
  for (int i = 0; i < samples; ++i) {
    const Vec3 x = r.at(start + (i + uniform01(gen)) * delta);
    double density = 0.0;
    for (const auto& g : gaussians) {
      const Vec3 d = g.mean - x;
      density += g.amplitude * std::exp(-0.5 * d.dot(g.precision * d));
    }
    // alpha_i = 1 - exp(-density * delta); the composited transmittance is the
    // product of (1 - alpha_i).
    depth += density * delta;
  }
  return std::exp(-depth);
}

double nerfStyleShadow(std::span<const AnisoGaussian> gaussians, const Ray& r, int samples, std::uint64_t seed) {
  const auto [start, end] = integrationBounds(gaussians, r);
  const auto prepared = prepare(gaussians);
  return nerfStyleShadow(prepared, r, start, end, samples, seed);
}

} // namespace gsc::oracle
