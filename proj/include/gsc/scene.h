#pragma once

#include "gsc/body.h"
#include "gsc/gaussian.h"
#include "gsc/shading.h"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gsc {

inline constexpr int kSceneVersion = 1;

struct SceneLight {
  double azimuth = 0.0; // radians
  double elevation = 0.0;
  Vec3 ambient = Vec3::Constant(0.1);
  Vec3 color = Vec3::Constant(kDefaultLightMagnitude);

  DirectionalLight directional() const {
    return DirectionalLight::fromAngles(azimuth, elevation, ambient, color);
  }
};

struct SceneGround {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitY();
  Vec3 color = Vec3::Constant(0.5);
  std::string background; // optional image path, empty for the flat color
};

struct GBufferSource {
  enum class Kind { Analytic, Files };
  Kind kind = Kind::Analytic;
  std::vector<std::string> frames; // one G-buffer directory per pose frame
};

/// Everything needed to render a pose sequence. Paths are kept as written in
/// the file and resolved against baseDir.
struct Scene {
  int version = kSceneVersion;
  Skeleton skeleton;
  GaussianBody body;
  std::vector<Vec3> colors; // one albedo per Gaussian, joint-major
  std::vector<PoseFrame> poses;
  std::vector<Camera> cameras;
  std::optional<SceneLight> light;
  std::string envMap; // optional
  std::optional<SceneGround> ground;
  GBufferSource gbufferSource;
  std::filesystem::path baseDir;

  std::size_t frameCount() const {
    return poses.size();
  }

  /// Frame f is seen by camera f mod cameras.size().
  std::size_t cameraIndex(std::size_t frame) const;

  std::filesystem::path resolve(const std::string& path) const;

  /// World-space Gaussians of one frame. Throws InvalidInput for a bad frame.
  std::vector<AnisoGaussian> posedGaussians(std::size_t frame) const;

  /// The frame's G-buffer seen from camera: rasterized, or read from disk
  /// (then the camera must match the stored size).
  GBuffer gbuffer(std::size_t frame, const Camera& camera) const;

  GroundPlane groundPlane(const Camera& camera) const;
  EnvironmentMap environment() const;

  /// Throws SchemaError naming the first inconsistent field.
  void validate() const;
};

Scene parseScene(std::string_view jsonText, const std::filesystem::path& baseDir = {});
std::string serializeScene(const Scene& scene);

/// Throws IoError if the file cannot be read and SchemaError on a schema
/// violation, including referenced files that do not exist.
Scene loadScene(const std::filesystem::path& path);
void saveScene(const Scene& scene, const std::filesystem::path& path);

} // namespace gsc
