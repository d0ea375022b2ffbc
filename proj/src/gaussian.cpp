#include "gsc/gaussian.h"

#include "gsc/errors.h"

#include <fmt/format.h>

#include <cmath>
#include <numbers>

namespace gsc {

namespace {

bool isFinite(const Vec3& v) {
  return v.allFinite();
}

} // namespace

Ray::Ray(const Vec3& origin, const Vec3& direction, double tMin, double tMax)
    : origin_(origin), tMin_(tMin), tMax_(tMax) {
  const double len = direction.norm();
  if (!isFinite(origin) || !std::isfinite(len) || len <= 0.0) {
    throw InvalidParameter("Ray needs a finite origin and a non-zero finite direction");
  }
  if (!(tMin >= 0.0) || !(tMax > tMin)) {
    throw InvalidParameter(fmt::format("Ray interval [{}, {}] is invalid", tMin, tMax));
  }
  direction_ = direction / len;
}

void AnisoGaussian::validate() const {
  if (!isFinite(mean)) {
    throw InvalidParameter("Gaussian mean must be finite");
  }
  for (int k = 0; k < 3; ++k) {
    if (!std::isfinite(sigma[k]) || sigma[k] <= 0.0) {
      throw InvalidParameter(fmt::format("Gaussian sigma[{}] = {} must be positive", k, sigma[k]));
    }
  }
  if (!std::isfinite(amplitude) || amplitude < 0.0) {
    throw InvalidParameter(fmt::format("Gaussian amplitude {} must be non-negative", amplitude));
  }
  rotationFromRot6(rot6);
}

double RayGaussian1D::operator()(double t) const {
  const double z = (t - mu) / sigma;
  return amp * std::exp(-0.5 * z * z);
}

Mat3 rotationFromRot6(const Rot6& rot6) {
  const Vec3 a(rot6[0], rot6[1], rot6[2]);
  const Vec3 b(rot6[3], rot6[4], rot6[5]);
  const double na = a.norm();
  const double nb = b.norm();
  if (!std::isfinite(na) || !std::isfinite(nb) || na == 0.0 || nb == 0.0) {
    throw InvalidParameter("rot6 rows must be finite and non-zero");
  }
  const Vec3 r0 = a / na;
  if (r0.cross(b).norm() / nb < kRot6ParallelThreshold) {
    throw InvalidParameter("rot6 rows are (nearly) parallel");
  }
  const Vec3 r1 = (b - r0.dot(b) * r0).normalized();
  Mat3 rotation;
  rotation.row(0) = r0;
  rotation.row(1) = r1;
  rotation.row(2) = r0.cross(r1);
  return rotation;
}

Rot6 rot6FromRotation(const Mat3& rotation) {
  return {rotation(0, 0),
          rotation(0, 1),
          rotation(0, 2),
          rotation(1, 0),
          rotation(1, 1),
          rotation(1, 2)};
}

PrecisionMatrix precisionMatrix(const AnisoGaussian& g) {
  for (int k = 0; k < 3; ++k) {
    if (!std::isfinite(g.sigma[k]) || g.sigma[k] <= 0.0) {
      throw InvalidParameter(fmt::format("Gaussian sigma[{}] = {} must be positive", k, g.sigma[k]));
    }
  }
  const Mat3 rotation = rotationFromRot6(g.rot6);
  const Vec3 inverseVariance = g.sigma.cwiseProduct(g.sigma).cwiseInverse();
  PrecisionMatrix precision = rotation.transpose() * inverseVariance.asDiagonal() * rotation;
  // Exact symmetry; the triple product can differ in the last ulp.
  return 0.5 * (precision + precision.transpose());
}

double densityAt(const AnisoGaussian& g, const Vec3& x) {
  const Vec3 d = g.mean - x;
  return g.amplitude * std::exp(-0.5 * d.dot(precisionMatrix(g) * d));
}

PreparedGaussian prepare(const AnisoGaussian& g) {
  return {g.mean, precisionMatrix(g), g.amplitude};
}

std::vector<PreparedGaussian> prepare(std::span<const AnisoGaussian> gaussians) {
  std::vector<PreparedGaussian> out;
  out.reserve(gaussians.size());
  for (const auto& g : gaussians) {
    out.push_back(prepare(g));
  }
  return out;
}

RayGaussian1D reduceTo1D(const PreparedGaussian& g, const Ray& r) {
  const Vec3 pd = g.precision * r.direction();
  const Vec3 offset = g.mean - r.origin();
  const double dPd = r.direction().dot(pd); // 1 / sigma_bar^2
  const double dPo = pd.dot(offset);
  const double oPo = offset.dot(g.precision * offset);
  const double mu = dPo / dPd;
  // Cauchy-Schwarz in the P inner product keeps this non-negative; clamp roundoff.
  const double exponent = std::max(0.0, oPo - dPo * mu);
  return {g.amplitude * std::exp(-0.5 * exponent), mu, 1.0 / std::sqrt(dPd)};
}

RayGaussian1D reduceTo1D(const AnisoGaussian& g, const Ray& r) {
  return reduceTo1D(prepare(g), r);
}

double segmentIntegral(const RayGaussian1D& g1d, double t0, double t1) {
  if (t0 > t1 || std::isnan(t0) || std::isnan(t1)) {
    throw InvalidInterval(fmt::format("segment [{}, {}] is empty or reversed", t0, t1));
  }
  if (t0 == t1) {
    return 0.0;
  }
  const double scale = 1.0 / (g1d.sigma * std::numbers::sqrt2);
  const double a = (t0 - g1d.mu) * scale;
  const double b = (t1 - g1d.mu) * scale;
  // Tail differences through erfc keep precision when both bounds sit on one side.
  double diff;
  if (a >= 0.0) {
    diff = std::erfc(a) - std::erfc(b);
  } else if (b <= 0.0) {
    diff = std::erfc(-b) - std::erfc(-a);
  } else {
    diff = std::erf(b) - std::erf(a);
  }
  constexpr double kHalfSqrt2Pi = 1.2533141373155002512; // sqrt(pi / 2)
  return g1d.amp * g1d.sigma * kHalfSqrt2Pi * std::max(0.0, diff);
}

double opticalDepth(std::span<const PreparedGaussian> gaussians, const Ray& r) {
  double depth = 0.0;
  for (const auto& g : gaussians) {
    const RayGaussian1D g1d = reduceTo1D(g, r);
    if (g1d.amp < kCullAmplitude) {
      continue;
    }
    depth += segmentIntegral(g1d, r.tMin(), r.tMax());
  }
  return depth;
}

double transmittance(std::span<const PreparedGaussian> gaussians, const Ray& r) {
  return std::exp(-opticalDepth(gaussians, r));
}

double transmittance(std::span<const AnisoGaussian> gaussians, const Ray& r) {
  const auto prepared = prepare(gaussians);
  return transmittance(std::span<const PreparedGaussian>(prepared), r);
}

} // namespace gsc
