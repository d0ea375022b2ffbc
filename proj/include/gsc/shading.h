#pragma once

#include "gsc/gaussian.h"
#include "gsc/image.h"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace gsc {

/// Pinhole camera. Camera space follows the usual computer-vision
/// convention: +x right, +y down, +z forward. Pixel (x, y) covers
/// [x, x + 1) x [y, y + 1), so its center is at (x + 0.5, y + 0.5).
class Camera {
 public:
  Camera(double fx, double fy, double cx, double cy, int width, int height, const Mat4& worldToCamera);

  /// Camera at eye looking at target with the given world up vector.
  static Camera lookAt(
      const Vec3& eye,
      const Vec3& target,
      const Vec3& up,
      double fx,
      double fy,
      double cx,
      double cy,
      int width,
      int height);

  double fx() const {
    return fx_;
  }
  double fy() const {
    return fy_;
  }
  double cx() const {
    return cx_;
  }
  double cy() const {
    return cy_;
  }
  int width() const {
    return width_;
  }
  int height() const {
    return height_;
  }
  std::size_t pixelCount() const {
    return static_cast<std::size_t>(width_) * height_;
  }
  const Mat4& worldToCamera() const {
    return worldToCamera_;
  }

  Vec3 position() const;

  /// Unit-direction ray through the pixel center.
  Ray pixelRay(int x, int y) const;
  Ray pixelRay(std::size_t p) const {
    return pixelRay(static_cast<int>(p % width_), static_cast<int>(p / width_));
  }

 private:
  double fx_;
  double fy_;
  double cx_;
  double cy_;
  int width_;
  int height_;
  Mat4 worldToCamera_;
  Mat3 cameraToWorldRotation_;
  Vec3 position_;
};

/// Per-pixel geometry for deferred shading. Depth is the distance from the
/// camera center along the unit pixel ray.
struct GBuffer {
  Image albedo; // 3 channels
  Image normal; // 3 channels, unit where mask > 0.5
  Image depth; // 1 channel, finite and > 0 where mask > 0.5
  Image mask; // 1 channel in [0, 1]

  GBuffer() = default;
  GBuffer(int width, int height);

  int width() const {
    return mask.width();
  }
  int height() const {
    return mask.height();
  }
  std::size_t pixelCount() const {
    return mask.pixelCount();
  }
  bool foreground(std::size_t p) const {
    return mask.value(p) > 0.5f;
  }

  /// Throws InvalidInput on mismatched buffer shapes. Per-pixel defects are
  /// not errors; the shading passes flag them.
  void validateShapes() const;

  /// The four buffers as albedo.pfm, normal.pfm, depth.pfm and mask.pfm.
  void write(const std::filesystem::path& dir) const;
  static GBuffer read(const std::filesystem::path& dir);
};

inline constexpr double kDefaultLightMagnitude = 1.5;
inline constexpr double kDefaultShadowBias = 0.02;

/// World space is y-up. Azimuth is measured from +z toward +x, elevation
/// from the horizontal plane toward +y.
Vec3 directionFromAngles(double azimuth, double elevation);
/// Inverse of directionFromAngles; the azimuth is 0 at the poles.
std::pair<double, double> anglesFromDirection(const Vec3& direction);

struct DirectionalLight {
  Vec3 direction = Vec3::UnitY(); // from the surface toward the light
  Vec3 color = Vec3::Constant(kDefaultLightMagnitude);
  Vec3 ambient = Vec3::Constant(0.1);

  static DirectionalLight fromAngles(
      double azimuth,
      double elevation,
      const Vec3& ambient,
      const Vec3& color = Vec3::Constant(kDefaultLightMagnitude));

  /// Throws InvalidParameter unless the direction is unit within 1e-9 and
  /// all components are finite.
  void validate() const;
};

/// albedo * (ambient + s * color * max(0, direction . normal)).
Vec3 shadePixel(const Vec3& albedo, const Vec3& normal, double s, const DirectionalLight& light);

struct ShadowConfig {
  double bias = kDefaultShadowBias; // offset along the normal before casting
};

struct ShadowDiagnostics {
  std::size_t invalidPixels = 0; // foreground pixels without usable depth or normal
};

/// World position of a foreground G-buffer pixel, or nullopt when its depth
/// or normal is unusable.
std::optional<Vec3> surfacePoint(const GBuffer& gbuffer, const Camera& camera, std::size_t p);

/// Per-pixel transmittance toward the light from the biased surface point.
/// Background and invalid pixels get 1. Output has 1 channel.
Image shadowMap(
    const GBuffer& gbuffer,
    const Camera& camera,
    std::span<const PreparedGaussian> gaussians,
    const Vec3& lightDirection,
    const ShadowConfig& cfg = {},
    ShadowDiagnostics* diagnostics = nullptr);

/// Deferred composite: shaded foreground blended over background by mask.
Image shadeImage(const GBuffer& gbuffer, const Image& shadow, const DirectionalLight& light, const Image& background);

struct GroundPlane {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitY();
  Vec3 color = Vec3::Constant(0.5); // used when no background image is given
  Image background; // optional, camera-sized, 3 channels

  /// Throws InvalidParameter unless the normal is unit within 1e-9.
  void validate() const;
};

/// Background image with every pixel whose view ray hits the plane (in
/// front of the camera) multiplied by the transmittance from the hit point
/// toward the light. Other pixels keep the unmodulated background.
Image groundShadow(
    const GroundPlane& plane,
    std::span<const PreparedGaussian> gaussians,
    const Vec3& lightDirection,
    const Camera& camera);

/// Equirectangular radiance map. Row 0 is the +y pole; texel (x, y) is
/// centered at polar angle theta = (y + 0.5) pi / H from +y and azimuth
/// phi = (x + 0.5) 2 pi / W - pi, direction
/// (sin theta sin phi, cos theta, sin theta cos phi).
class EnvironmentMap {
 public:
  explicit EnvironmentMap(Image radiance);

  /// Map of the given size with the same radiance in every texel.
  static EnvironmentMap constant(int width, int height, const Vec3& radiance);

  const Image& image() const {
    return radiance_;
  }

  std::size_t texelIndex(const Vec3& direction) const;
  Vec3 texelDirection(std::size_t index) const;
  double texelSolidAngle(std::size_t index) const;
  Vec3 radiance(std::size_t index) const {
    return radiance_.rgb(index);
  }
  /// Nearest-texel lookup.
  Vec3 lookup(const Vec3& direction) const {
    return radiance(texelIndex(direction));
  }

  /// Texel of maximum luminance, lowest row-major index on ties.
  std::size_t brightestTexel() const {
    return brightest_;
  }

 private:
  Image radiance_;
  std::size_t brightest_ = 0;
};

double luminance(const Vec3& rgb);

/// Environment lighting estimate at one surface point. Ray 1 samples the
/// brightest texel with its solid angle; rays 2..n are cosine-distributed
/// (normalize(n + random unit vector)) and count radiance only from the
/// remaining texels. Returns the RGB factor that multiplies albedo; a
/// constant environment of radiance L gives L.
Vec3 environmentLighting(
    const Vec3& point,
    const Vec3& normal,
    std::span<const PreparedGaussian> gaussians,
    const EnvironmentMap& env,
    int rays,
    std::uint64_t seed);

/// Relit image: albedo * environmentLighting per foreground pixel, blended
/// over the environment seen through each pixel. Per-pixel streams are
/// derived from (seed, pixel index). Throws InvalidParameter for rays < 1.
Image relightHdri(
    const GBuffer& gbuffer,
    const Camera& camera,
    std::span<const PreparedGaussian> gaussians,
    const EnvironmentMap& env,
    int rays,
    std::uint64_t seed,
    const ShadowConfig& cfg = {},
    ShadowDiagnostics* diagnostics = nullptr);

/// Treats each Gaussian's 1-sigma ellipsoid as an opaque surface: depth of
/// the nearest hit, normal from the ellipsoid gradient, albedo from the
/// Gaussian's color. Gaussians with zero amplitude are skipped.
GBuffer rasterize(const Camera& camera, std::span<const AnisoGaussian> gaussians, std::span<const Vec3> colors);

enum class RenderMode { Lit, Albedo, Shadow, Normal, Depth };

/// Throws UsageError for an unknown name.
RenderMode parseRenderMode(std::string_view name);
std::string_view renderModeName(RenderMode mode);

struct FrameInputs {
  const Camera* camera = nullptr;
  const GBuffer* gbuffer = nullptr;
  std::span<const PreparedGaussian> gaussians;
  DirectionalLight light;
  const GroundPlane* ground = nullptr; // optional
  ShadowConfig shadow;
};

/// Lit composites shaded foreground over the (ground-shadowed) background;
/// the other modes dump the named buffer (shadow and depth as 1 channel).
Image renderFrame(const FrameInputs& in, RenderMode mode, ShadowDiagnostics* diagnostics = nullptr);

} // namespace gsc
