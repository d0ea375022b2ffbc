#pragma once

#include "gsc/gaussian.h"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <span>

// Brute-force references for the analytic paths. Clarity over speed.
namespace gsc::oracle {

// Half-width, in units of the largest sigma, of the window kept around each
// Gaussian when a ray is unbounded. Beyond it the dropped mass is < 1e-9.
inline constexpr double kTruncationSigmas = 6.0;

struct QuadratureConfig {
  int steps = 100000;
};

/// [start, end] actually integrated for r: the ray interval, with an infinite
/// end (or far-away start) clipped to the kTruncationSigmas window of the
/// Gaussians. Uses only means and per-axis sigmas, not the 1D reduction.
std::pair<double, double> integrationBounds(std::span<const AnisoGaussian> gaussians, const Ray& r);

/// exp(-trapezoid integral of the summed 3D density along r).
double quadTransmittance(
    std::span<const AnisoGaussian> gaussians,
    const Ray& r,
    const QuadratureConfig& cfg = {});

/// Trapezoid integral of sum_i densityAt(g_i, r.at(t)) over the bounds above.
double quadOpticalDepth(
    std::span<const AnisoGaussian> gaussians,
    const Ray& r,
    const QuadratureConfig& cfg = {});

using ScalarFunction = std::function<double(const Eigen::VectorXd&)>;

/// Central differences per coordinate. Throws InvalidParameter for h <= 0 and
/// OptimizationFailure (iteration = coordinate index) on a non-finite probe.
Eigen::VectorXd fdGradient(const ScalarFunction& loss, const Eigen::VectorXd& params, double h);

/// Shadow value from stratified density samples and alpha compositing, the
/// way a radiance field would shade a secondary ray. The sampled interval is
/// the ray clipped to [near, far].
double nerfStyleShadow(
    std::span<const PreparedGaussian> gaussians,
    const Ray& r,
    double near,
    double far,
    int samples,
    std::uint64_t seed);

/// Convenience overload: the interval is integrationBounds() of the Gaussians.
double nerfStyleShadow(
    std::span<const AnisoGaussian> gaussians,
    const Ray& r,
    int samples,
    std::uint64_t seed);

} // namespace gsc::oracle
