#pragma once

#include "gsc/body.h"
#include "gsc/gaussian.h"
#include "gsc/schedule.h"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

namespace gsc {

/// Target density on a regular grid, trilinearly interpolated, zero outside
/// the box. Samples sit on the grid corners: node i along x is at
/// boxMin.x + i * (boxMax.x - boxMin.x) / (nx - 1). Values are stored with x
/// fastest, index (z * ny + y) * nx + x.
class VoxelField {
 public:
  VoxelField(std::array<int, 3> resolution, const Vec3& boxMin, const Vec3& boxMax, std::vector<float> values);

  static VoxelField sample(
      std::array<int, 3> resolution,
      const Vec3& boxMin,
      const Vec3& boxMax,
      const std::function<double(const Vec3&)>& density);

  double operator()(const Vec3& x) const;

  Vec3 nodePosition(int ix, int iy, int iz) const;

  const std::array<int, 3>& resolution() const {
    return resolution_;
  }
  const Vec3& boxMin() const {
    return boxMin_;
  }
  const Vec3& boxMax() const {
    return boxMax_;
  }
  std::span<const float> values() const {
    return values_;
  }

  bool contains(const Vec3& x) const;

  /// Mean of the squared node values.
  double meanSquared() const;

 private:
  std::array<int, 3> resolution_;
  Vec3 boxMin_;
  Vec3 boxMax_;
  Vec3 spacing_;
  std::vector<float> values_;
};

/// Binary layout, little-endian: int32 nx, ny, nz; float32 min xyz, max xyz;
/// then nx*ny*nz float32 values in VoxelField order.
VoxelField readVoxelField(const std::filesystem::path& path);
void writeVoxelField(const VoxelField& field, const std::filesystem::path& path);

/// L_gSigma for one sigma component. Throws InvalidParameter for sigma <= 0.
double lossSigma(double sigma);
double lossSigmaDerivative(double sigma);

/// L_gMean summed over the three components of (mu - boneCenter).
double lossMean(const Vec3& mu, const Vec3& boneCenter);
Vec3 lossMeanGradient(const Vec3& mu, const Vec3& boneCenter);

/// Mean squared residual of the posed body density against the field.
/// Throws InvalidInput for an empty point list.
double lossDensity(
    const GaussianBody& body,
    const Skeleton& skeleton,
    const PoseFrame& pose,
    const VoxelField& field,
    std::span<const Vec3> points);

struct LossAndGradient {
  double loss = 0.0;
  Eigen::VectorXd gradient; // w.r.t. packParameters(body)
};

/// lossDensity and its analytic gradient w.r.t. all J*K*13 local parameters.
LossAndGradient lossDensityWithGradient(
    const GaussianBody& body,
    const Skeleton& skeleton,
    const PoseFrame& pose,
    const VoxelField& field,
    std::span<const Vec3> points);

/// wSigma * mean_g sum_k L_gSigma(sigma_gk) + wMean * mean_g L_gMean(mu_g, b_g),
/// with b_g the joint's bone center carried into the joint frame of pose.
LossAndGradient regularizerWithGradient(
    const GaussianBody& body,
    const Skeleton& skeleton,
    const PoseFrame& pose,
    double wSigma,
    double wMean);

/// Half the points uniform in the field box, half drawn from the Gaussians
/// (uniform choice of Gaussian, normal offset truncated at 3 sigma). Points
/// landing outside the box are redrawn. Throws InvalidInput for n < 1.
std::vector<Vec3> sampleQueryPoints(
    const VoxelField& field,
    std::span<const AnisoGaussian> worldGaussians,
    int n,
    std::uint64_t seed);

struct FitConfig {
  int iterations = 2000;
  double stepSize = 0.5;
  double finalStepFraction = 0.1; // step decays linearly to stepSize * this
  int batchSize = 4096;
  double wDensity = 1.0;
  double wSigma = 0.0;
  double wMean = 0.0;
  // Optional multipliers on the weights above, indexed by iteration.
  WeightSchedule densitySchedule;
  WeightSchedule sigmaSchedule;
  WeightSchedule meanSchedule;
  std::uint64_t seed = 0;
  int validationPoints = 8192;

  void validate() const;
};

struct FitResult {
  GaussianBody body;
  std::vector<double> lossTrace; // total batch loss per iteration
  double initialLoss = 0.0; // total loss on the validation set
  double finalLoss = 0.0;
};

/// Preconditioned gradient descent over (mean, log sigma, rot6, log amplitude)
/// in the given (reference) pose. Deterministic per seed. Throws
/// OptimizationFailure on a non-finite loss.
FitResult fit(
    const GaussianBody& initial,
    const Skeleton& skeleton,
    const PoseFrame& pose,
    const VoxelField& field,
    const FitConfig& cfg);

/// K isotropic Gaussians per joint spaced evenly along the bone to the first
/// child; leaves extend half their parent bone past the joint, a lone root uses
/// 0.1 m along +y. Means are expressed in the joint frames of pose.
GaussianBody initializeBody(
    const Skeleton& skeleton,
    const PoseFrame& pose,
    int perJoint = kDefaultGaussiansPerJoint,
    double sigma = 0.05,
    double amplitude = 1.0);

} // namespace gsc
