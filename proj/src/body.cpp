#include "gsc/body.h"

#include "gsc/errors.h"

#include <Eigen/SVD>
#include <fmt/format.h>

#include <cmath>

namespace gsc {

void Skeleton::validate() const {
  const int j = jointCount();
  if (j < 1 || j > kMaxJoints) {
    throw InvalidInput(fmt::format("skeleton has {} joints; expected 1..{}", j, kMaxJoints));
  }
  if (static_cast<int>(restJoints.size()) != j) {
    throw InvalidInput(fmt::format("skeleton has {} parents but {} rest joints", j, restJoints.size()));
  }
  int roots = 0;
  for (int i = 0; i < j; ++i) {
    if (parents[i] < -1 || parents[i] >= j || parents[i] == i) {
      throw InvalidInput(fmt::format("joint {} has invalid parent {}", i, parents[i]));
    }
    roots += parents[i] == -1;
    if (!restJoints[i].allFinite()) {
      throw InvalidInput(fmt::format("joint {} rest position is not finite", i));
    }
  }
  if (roots != 1) {
    throw InvalidInput(fmt::format("skeleton has {} roots; expected exactly one", roots));
  }
  for (int i = 0; i < j; ++i) {
    int steps = 0;
    for (int p = parents[i]; p != -1; p = parents[p]) {
      if (++steps > j) {
        throw InvalidInput(fmt::format("joint {} is part of a parent cycle", i));
      }
    }
  }
}

int Skeleton::firstChild(int j) const {
  for (int i = 0; i < jointCount(); ++i) {
    if (parents[i] == j) {
      return i;
    }
  }
  return -1;
}

Vec3 Skeleton::boneCenter(int j) const {
  const int child = firstChild(j);
  if (child < 0) {
    return restJoints[j];
  }
  return 0.5 * (restJoints[j] + restJoints[child]);
}

void PoseFrame::validate(int jointCount) const {
  if (static_cast<int>(transforms.size()) != jointCount) {
    throw InvalidInput(
        fmt::format("pose {} has {} transforms; skeleton has {} joints", timestamp, transforms.size(), jointCount));
  }
  for (int j = 0; j < jointCount; ++j) {
    const Mat4& m = transforms[j];
    if (!m.allFinite()) {
      throw InvalidInput(fmt::format("pose {} joint {} is not finite", timestamp, j));
    }
    if ((m.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-12) {
      throw InvalidInput(fmt::format("pose {} joint {} bottom row is not (0, 0, 0, 1)", timestamp, j));
    }
    const Mat3 r = m.topLeftCorner<3, 3>();
    if ((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6 || r.determinant() <= 0.0) {
      throw InvalidInput(fmt::format("pose {} joint {} rotation block is not a rotation", timestamp, j));
    }
  }
}

double orthonormalizeRotation(Mat4& m) {
  const Mat3 r = m.topLeftCorner<3, 3>();
  Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  if ((u * svd.matrixV().transpose()).determinant() < 0.0) {
    u.col(2) *= -1.0;
  }
  const Mat3 fixed = u * svd.matrixV().transpose();
  m.topLeftCorner<3, 3>() = fixed;
  return (fixed - r).norm();
}

GaussianBody::GaussianBody(int joints, int perJoint)
    : GaussianBody(joints, perJoint, std::vector<AnisoGaussian>(static_cast<std::size_t>(joints) * perJoint)) {}

GaussianBody::GaussianBody(int joints, int perJoint, std::vector<AnisoGaussian> gaussians)
    : joints_(joints), perJoint_(perJoint), gaussians_(std::move(gaussians)) {
  if (joints < 1 || perJoint < 1) {
    throw InvalidInput(fmt::format("body shape {}x{} must be at least 1x1", joints, perJoint));
  }
  if (gaussians_.size() != static_cast<std::size_t>(joints) * perJoint) {
    throw InvalidInput(fmt::format("body {}x{} needs {} Gaussians, got {}", joints, perJoint, joints * perJoint, gaussians_.size()));
  }
}

void GaussianBody::validate() const {
  for (const auto& g : gaussians_) {
    g.validate();
  }
}

AnisoGaussian transformGaussian(const AnisoGaussian& local, const Mat4& transform) {
  const Mat3 jointRotation = transform.topLeftCorner<3, 3>();
  AnisoGaussian world = local;
  world.mean = jointRotation * local.mean + transform.topRightCorner<3, 1>();
  // Local precision R^T D R becomes (R Q^T)^T D (R Q^T) for joint rotation Q.
  world.rot6 = rot6FromRotation(rotationFromRot6(local.rot6) * jointRotation.transpose());
  return world;
}

std::vector<AnisoGaussian> poseGaussians(const GaussianBody& body, const Skeleton& skeleton, const PoseFrame& pose) {
  if (body.joints() != skeleton.jointCount() || static_cast<int>(pose.transforms.size()) != body.joints()) {
    throw InvalidInput(fmt::format(
        "joint counts differ: body {}, skeleton {}, pose {}", body.joints(), skeleton.jointCount(), pose.transforms.size()));
  }
  std::vector<AnisoGaussian> world;
  world.reserve(body.size());
  const auto local = body.gaussians();
  for (std::size_t i = 0; i < local.size(); ++i) {
    world.push_back(transformGaussian(local[i], pose.transforms[body.jointOf(i)]));
  }
  return world;
}

double bodyDensity(const GaussianBody& body, const Skeleton& skeleton, const PoseFrame& pose, const Vec3& x) {
  double sum = 0.0;
  for (const auto& g : poseGaussians(body, skeleton, pose)) {
    sum += densityAt(g, x);
  }
  return sum;
}

Eigen::VectorXd packParameters(const GaussianBody& body) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(body.size()) * AnisoGaussian::kParameterCount);
  Eigen::Index o = 0;
  for (const auto& g : body.gaussians()) {
    out.segment<3>(o) = g.mean;
    out.segment<3>(o + 3) = g.sigma;
    for (int i = 0; i < 6; ++i) {
      out[o + 6 + i] = g.rot6[i];
    }
    out[o + 12] = g.amplitude;
    o += AnisoGaussian::kParameterCount;
  }
  return out;
}

GaussianBody unpackParameters(const Eigen::VectorXd& params, int joints, int perJoint) {
  const Eigen::Index expected = static_cast<Eigen::Index>(joints) * perJoint * AnisoGaussian::kParameterCount;
  if (joints < 1 || perJoint < 1 || params.size() != expected) {
    throw InvalidInput(fmt::format("parameter vector has {} entries; {}x{}x13 needs {}", params.size(), joints, perJoint, expected));
  }
  std::vector<AnisoGaussian> gaussians(static_cast<std::size_t>(joints) * perJoint);
  Eigen::Index o = 0;
  for (auto& g : gaussians) {
    g.mean = params.segment<3>(o);
    g.sigma = params.segment<3>(o + 3);
    for (int i = 0; i < 6; ++i) {
      g.rot6[i] = params[o + 6 + i];
    }
    g.amplitude = params[o + 12];
    g.validate();
    o += AnisoGaussian::kParameterCount;
  }
  return GaussianBody(joints, perJoint, std::move(gaussians));
}

PoseFrame restPose(const Skeleton& skeleton) {
  PoseFrame pose;
  for (const auto& joint : skeleton.restJoints) {
    Mat4 m = Mat4::Identity();
    m.topRightCorner<3, 1>() = joint;
    pose.transforms.push_back(m);
  }
  return pose;
}

} // namespace gsc
