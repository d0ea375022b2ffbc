#pragma once

#include "gsc/gaussian.h"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace gsc {

inline constexpr int kMaxJoints = 256;
inline constexpr int kDefaultGaussiansPerJoint = 8;

/// Joint hierarchy with rest-pose joint positions in world space.
struct Skeleton {
  std::vector<int> parents; // -1 marks the root
  std::vector<Vec3> restJoints;

  int jointCount() const {
    return static_cast<int>(parents.size());
  }

  /// Throws InvalidInput unless parents form a single tree and sizes agree.
  void validate() const;

  /// Lowest-indexed child of joint j, or -1 for a leaf.
  int firstChild(int j) const;

  /// Midpoint of the joint and its first child at rest; leaves use the joint.
  Vec3 boneCenter(int j) const;
};

/// One local-to-world rigid transform per joint for a single frame.
struct PoseFrame {
  std::vector<Mat4> transforms;
  std::int64_t timestamp = 0;

  /// Throws InvalidInput for a wrong joint count, a non-rigid block, or a
  /// bottom row other than (0, 0, 0, 1).
  void validate(int jointCount) const;
};

/// Projects the rotation block of m onto SO(3) in place. Returns the Frobenius
/// norm of the correction.
double orthonormalizeRotation(Mat4& m);

/// J x K Gaussians in joint-local coordinates, stored joint-major.
class GaussianBody {
 public:
  GaussianBody() = default;
  GaussianBody(int joints, int perJoint);
  GaussianBody(int joints, int perJoint, std::vector<AnisoGaussian> gaussians);

  int joints() const {
    return joints_;
  }
  int perJoint() const {
    return perJoint_;
  }
  std::size_t size() const {
    return gaussians_.size();
  }

  AnisoGaussian& at(int joint, int k) {
    return gaussians_[index(joint, k)];
  }
  const AnisoGaussian& at(int joint, int k) const {
    return gaussians_[index(joint, k)];
  }

  std::span<AnisoGaussian> gaussians() {
    return gaussians_;
  }
  std::span<const AnisoGaussian> gaussians() const {
    return gaussians_;
  }

  int jointOf(std::size_t flatIndex) const {
    return static_cast<int>(flatIndex) / perJoint_;
  }

  void validate() const;

  bool operator==(const GaussianBody& other) const = default;

 private:
  std::size_t index(int joint, int k) const {
    return static_cast<std::size_t>(joint) * perJoint_ + k;
  }

  int joints_ = 0;
  int perJoint_ = 0;
  std::vector<AnisoGaussian> gaussians_;
};

/// Rigidly carries one joint-local Gaussian into world space via transform.
AnisoGaussian transformGaussian(const AnisoGaussian& local, const Mat4& transform);

/// World-space Gaussians for a pose. Throws InvalidInput on joint-count mismatch.
std::vector<AnisoGaussian> poseGaussians(const GaussianBody& body, const Skeleton& skeleton, const PoseFrame& pose);

double bodyDensity(const GaussianBody& body, const Skeleton& skeleton, const PoseFrame& pose, const Vec3& x);

/// Flat J*K*13 vector: per Gaussian mean(3), sigma(3), rot6(6), amplitude(1).
Eigen::VectorXd packParameters(const GaussianBody& body);

/// Inverse of packParameters. Throws InvalidInput on a wrong length and
/// InvalidParameter on any invalid Gaussian.
GaussianBody unpackParameters(const Eigen::VectorXd& params, int joints, int perJoint);

/// Rest pose: pure translations to the rest joint positions.
PoseFrame restPose(const Skeleton& skeleton);

} // namespace gsc
