#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <limits>
#include <span>
#include <vector>

namespace gsc {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// First two rows of a rotation matrix, row-major: (R00, R01, R02, R10, R11, R12).
using Rot6 = std::array<double, 6>;

// Inverse covariance, R^T diag(1/sigma^2) R.
using PrecisionMatrix = Mat3;

inline constexpr Rot6 kIdentityRot6 = {1.0, 0.0, 0.0, 0.0, 1.0, 0.0};

// Rows closer to parallel than this (|sin| of their angle) are rejected.
inline constexpr double kRot6ParallelThreshold = 1e-6;

// Reduced Gaussians with a peak below this are skipped when integrating.
inline constexpr double kCullAmplitude = 1e-12;

/// A half-line (or segment) with unit direction.
///
/// The direction is normalized on construction; all ray-Gaussian formulas
/// assume unit length, since a scaled direction rescales the reduced sigma.
class Ray {
 public:
  Ray(const Vec3& origin,
      const Vec3& direction,
      double tMin = 0.0,
      double tMax = std::numeric_limits<double>::infinity());

  const Vec3& origin() const {
    return origin_;
  }
  const Vec3& direction() const {
    return direction_;
  }
  double tMin() const {
    return tMin_;
  }
  double tMax() const {
    return tMax_;
  }

  Vec3 at(double t) const {
    return origin_ + t * direction_;
  }

 private:
  Vec3 origin_;
  Vec3 direction_;
  double tMin_;
  double tMax_;
};

/// One anisotropic 3D Gaussian: 3 mean + 3 sigma + 6 rotation + 1 amplitude.
///
/// Density is amplitude * exp(-0.5 (mean - x)^T P (mean - x)) with
/// P = R^T diag(1/sigma^2) R and R the Gram-Schmidt orthonormalization of rot6.
struct AnisoGaussian {
  Vec3 mean = Vec3::Zero();
  Vec3 sigma = Vec3::Ones();
  Rot6 rot6 = kIdentityRot6;
  double amplitude = 1.0;

  static constexpr int kParameterCount = 13;

  /// Throws InvalidParameter if sigma is non-positive or non-finite, the
  /// amplitude is negative, or rot6 is degenerate.
  void validate() const;

  bool operator==(const AnisoGaussian& other) const = default;
};

/// The 1D Gaussian amp * exp(-(t - mu)^2 / (2 sigma^2)) induced along a ray.
struct RayGaussian1D {
  double amp = 0.0;
  double mu = 0.0;
  double sigma = 1.0;

  double operator()(double t) const;
};

/// Gram-Schmidt on the two stored rows, third row by cross product. Throws
/// InvalidParameter for zero or near-parallel rows.
Mat3 rotationFromRot6(const Rot6& rot6);

Rot6 rot6FromRotation(const Mat3& rotation);

PrecisionMatrix precisionMatrix(const AnisoGaussian& g);

double densityAt(const AnisoGaussian& g, const Vec3& x);

/// Density of g restricted to r: for every t, result(t) == densityAt(g, r.at(t)).
RayGaussian1D reduceTo1D(const AnisoGaussian& g, const Ray& r);

/// Integral of g1d over [t0, t1]; either bound may be infinite.
/// Throws InvalidInterval when t0 > t1.
double segmentIntegral(const RayGaussian1D& g1d, double t0, double t1);

/// A Gaussian with its precision matrix cached, for repeated ray queries.
struct PreparedGaussian {
  Vec3 mean;
  PrecisionMatrix precision;
  double amplitude;
};

PreparedGaussian prepare(const AnisoGaussian& g);
std::vector<PreparedGaussian> prepare(std::span<const AnisoGaussian> gaussians);

RayGaussian1D reduceTo1D(const PreparedGaussian& g, const Ray& r);

/// Sum of segment integrals over [r.tMin(), r.tMax()], skipping reduced
/// Gaussians whose peak is below kCullAmplitude.
double opticalDepth(std::span<const PreparedGaussian> gaussians, const Ray& r);

double transmittance(std::span<const PreparedGaussian> gaussians, const Ray& r);
double transmittance(std::span<const AnisoGaussian> gaussians, const Ray& r);

} // namespace gsc
