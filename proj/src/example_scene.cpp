#include "gsc/example_scene.h"

#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <numbers>

namespace gsc {

namespace {

enum Joint {
  Pelvis,
  Spine,
  Chest,
  Head,
  LShoulder,
  LElbow,
  LWrist,
  RShoulder,
  RElbow,
  RWrist,
  LHip,
  LKnee,
  LAnkle,
  RHip,
  RKnee,
  RAnkle,
  kJointCount
};

constexpr int kPerJoint = 4;
constexpr double kAmplitude = 12.0;

const Vec3 kSkin(0.85, 0.64, 0.5);
const Vec3 kShirt(0.25, 0.45, 0.75);
const Vec3 kPants(0.32, 0.3, 0.36);
const Vec3 kShoes(0.5, 0.25, 0.15);

Skeleton skeleton() {
  Skeleton s;
  s.parents = {-1, Pelvis, Spine, Chest, Chest, LShoulder, LElbow, Chest, RShoulder, RElbow,
               Pelvis, LHip, LKnee, Pelvis, RHip, RKnee};
  // Facing +z; the figure's left is +x.
  s.restJoints = {
      {0.0, 0.95, 0.0},    {0.0, 1.15, 0.0},  {0.0, 1.38, 0.0},   {0.0, 1.6, 0.0},
      {0.19, 1.42, 0.0},   {0.26, 1.15, 0.0}, {0.31, 0.9, 0.03},  {-0.19, 1.42, 0.0},
      {-0.26, 1.15, 0.0},  {-0.31, 0.9, 0.03}, {0.1, 0.9, 0.0},   {0.11, 0.5, 0.02},
      {0.12, 0.09, 0.0},   {-0.1, 0.9, 0.0},  {-0.11, 0.5, 0.02}, {-0.12, 0.09, 0.0},
  };
  return s;
}

Rot6 alignedWith(const Vec3& axis) {
  // Row 1 of the rotation (the sigma.y axis) along the bone.
  const Vec3 y = axis.normalized();
  const Vec3 helper = std::abs(y.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
  const Vec3 x = y.cross(helper).normalized();
  return {x.x(), x.y(), x.z(), y.x(), y.y(), y.z()};
}

AnisoGaussian gaussian(const Vec3& mean, const Vec3& sigma, const Rot6& rot6 = kIdentityRot6) {
  return {mean, sigma, rot6, kAmplitude};
}

// K Gaussians evenly along the bone to the child, in the joint's rest frame.
std::array<AnisoGaussian, kPerJoint> limb(const Skeleton& s, int joint, int child, double radius, double depth) {
  const Vec3 bone = s.restJoints[child] - s.restJoints[joint];
  std::array<AnisoGaussian, kPerJoint> out;
  for (int k = 0; k < kPerJoint; ++k) {
    const double f = (k + 0.5) / kPerJoint;
    out[k] = gaussian(f * bone, Vec3(radius, 1.2 * bone.norm() / kPerJoint, depth), alignedWith(bone));
  }
  return out;
}

GaussianBody body(const Skeleton& s, std::vector<Vec3>& colors) {
  GaussianBody b(kJointCount, kPerJoint);
  auto set = [&](int joint, const std::array<AnisoGaussian, kPerJoint>& gs, const Vec3& color) {
    for (int k = 0; k < kPerJoint; ++k) {
      b.at(joint, k) = gs[k];
      colors[static_cast<std::size_t>(joint) * kPerJoint + k] = color;
    }
  };
  colors.assign(static_cast<std::size_t>(kJointCount) * kPerJoint, kShirt);

  set(Pelvis, limb(s, Pelvis, Spine, 0.14, 0.1), kPants);
  set(Spine, limb(s, Spine, Chest, 0.14, 0.1), kShirt);
  set(Chest, limb(s, Chest, Head, 0.16, 0.1), kShirt);
  set(Head,
      {gaussian(Vec3(0.0, 0.03, 0.0), Vec3(0.045, 0.05, 0.045)),
       gaussian(Vec3(0.0, 0.15, 0.0), Vec3(0.085, 0.09, 0.09)),
       gaussian(Vec3(0.0, 0.09, 0.03), Vec3(0.065, 0.05, 0.07)),
       gaussian(Vec3(0.0, 0.21, -0.01), Vec3(0.07, 0.04, 0.07))},
      kSkin);
  for (auto [shoulder, elbow, wrist] : {std::array{LShoulder, LElbow, LWrist}, std::array{RShoulder, RElbow, RWrist}}) {
    set(shoulder, limb(s, shoulder, elbow, 0.05, 0.05), kShirt);
    set(elbow, limb(s, elbow, wrist, 0.04, 0.04), kSkin);
    // Hand: continues the forearm.
    const Vec3 dir = (s.restJoints[wrist] - s.restJoints[elbow]).normalized();
    std::array<AnisoGaussian, kPerJoint> hand;
    for (int k = 0; k < kPerJoint; ++k) {
      hand[k] = gaussian((0.02 + 0.035 * k) * dir, Vec3(0.035, 0.03, 0.018), alignedWith(dir));
    }
    set(wrist, hand, kSkin);
  }
  for (auto [hip, knee, ankle] : {std::array{LHip, LKnee, LAnkle}, std::array{RHip, RKnee, RAnkle}}) {
    set(hip, limb(s, hip, knee, 0.07, 0.07), kPants);
    set(knee, limb(s, knee, ankle, 0.055, 0.055), kPants);
    std::array<AnisoGaussian, kPerJoint> foot;
    for (int k = 0; k < kPerJoint; ++k) {
      foot[k] = gaussian(Vec3(0.0, -0.045, -0.03 + 0.06 * k), Vec3(0.045, 0.03, 0.05));
    }
    set(ankle, foot, kShoes);
  }
  return b;
}

Mat4 rigid(const Mat3& r, const Vec3& t) {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = r;
  m.topRightCorner<3, 1>() = t;
  return m;
}

Mat3 rotX(double a) {
  return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix();
}
Mat3 rotY(double a) {
  return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix();
}
Mat3 rotZ(double a) {
  return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix();
}

// One frame of a walk cycle at the given phase, by forward kinematics over
// per-joint local rotations.
PoseFrame walkPose(const Skeleton& s, double phase, std::int64_t timestamp) {
  const double swing = std::sin(phase);
  std::array<Mat3, kJointCount> local;
  local.fill(Mat3::Identity());
  local[Pelvis] = rotY(0.35 * timestamp);
  local[Spine] = rotY(0.1 * swing);
  local[Head] = rotX(0.1 * std::cos(phase));
  local[LShoulder] = rotX(-0.5 * swing) * rotZ(0.15);
  local[RShoulder] = rotX(0.5 * swing) * rotZ(-0.15);
  local[LElbow] = rotX(-0.35 - 0.25 * std::max(0.0, swing));
  local[RElbow] = rotX(-0.35 - 0.25 * std::max(0.0, -swing));
  local[LHip] = rotX(0.45 * swing);
  local[RHip] = rotX(-0.45 * swing);
  local[LKnee] = rotX(0.15 + 0.45 * std::max(0.0, -swing));
  local[RKnee] = rotX(0.15 + 0.45 * std::max(0.0, swing));

  PoseFrame pose;
  pose.timestamp = timestamp;
  pose.transforms.resize(kJointCount);
  const double bob = -0.03 * std::abs(swing);
  for (int j = 0; j < kJointCount; ++j) {
    const int p = s.parents[j];
    if (p < 0) {
      pose.transforms[j] = rigid(local[j], s.restJoints[j] + Vec3(0.0, bob, 0.0));
    } else {
      pose.transforms[j] = pose.transforms[p] * rigid(local[j], s.restJoints[j] - s.restJoints[p]);
    }
  }
  return pose;
}

constexpr double kLightAzimuth = 0.9;
constexpr double kLightElevation = 0.7;
const Vec3 kLightColor = Vec3::Constant(kDefaultLightMagnitude);

} // namespace

Scene exampleScene() {
  Scene scene;
  scene.skeleton = skeleton();
  scene.body = body(scene.skeleton, scene.colors);
  constexpr int kFrames = 4;
  for (int f = 0; f < kFrames; ++f) {
    scene.poses.push_back(walkPose(scene.skeleton, 2.0 * std::numbers::pi * f / kFrames, f));
  }
  for (int c = 0; c < 4; ++c) {
    const double angle = 0.4 + c * std::numbers::pi / 2.0;
    const Vec3 eye(3.2 * std::sin(angle), 1.3, 3.2 * std::cos(angle));
    scene.cameras.push_back(Camera::lookAt(eye, Vec3(0.0, 0.9, 0.0), Vec3::UnitY(), 190, 190, 60, 80, 120, 160));
  }
  scene.light = SceneLight{kLightAzimuth, kLightElevation, Vec3(0.12, 0.1, 0.08), kLightColor};
  scene.envMap = "sky.pfm";
  scene.ground = SceneGround{Vec3::Zero(), Vec3::UnitY(), Vec3(0.55, 0.5, 0.45), {}};
  return scene;
}

EnvironmentMap exampleSky(int width, int height) {
  const EnvironmentMap layout = EnvironmentMap::constant(width, height, Vec3::Zero());
  Image sky(width, height, 3);
  for (std::size_t p = 0; p < sky.pixelCount(); ++p) {
    const double up = layout.texelDirection(p).y();
    const Vec3 zenith(0.25, 0.4, 0.7);
    const Vec3 horizon(0.6, 0.6, 0.6);
    const Vec3 ground(0.2, 0.18, 0.15);
    sky.setRgb(p, up >= 0.0 ? Vec3(horizon + up * (zenith - horizon)) : ground);
  }
  const std::size_t sun = layout.texelIndex(directionFromAngles(kLightAzimuth, kLightElevation));
  // Sun weight is radiance * solid angle / pi.
  sky.setRgb(sun, kLightColor * std::numbers::pi / layout.texelSolidAngle(sun));
  return EnvironmentMap(std::move(sky));
}

VoxelField exampleDensity(const Scene& scene, int resolution) {
  const auto gaussians = scene.posedGaussians(0);
  const auto prepared = prepare(gaussians);
  return VoxelField::sample(
      {resolution, resolution, resolution}, Vec3(-0.95, -0.05, -0.95), Vec3(0.95, 1.85, 0.95), [&](const Vec3& x) {
        double sum = 0.0;
        for (const auto& g : prepared) {
          const Vec3 d = g.mean - x;
          sum += g.amplitude * std::exp(-0.5 * d.dot(g.precision * d));
        }
        return sum;
      });
}

void writeExampleScene(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  Scene scene = exampleScene();
  writePfm(exampleSky().image(), dir / "sky.pfm");
  scene.baseDir = dir;
  saveScene(scene, dir / "scene.json");
  writeVoxelField(exampleDensity(scene), dir / "body_density.vox");
}

} // namespace gsc
