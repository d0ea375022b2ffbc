#include "gsc/shading.h"

#include "gsc/errors.h"
#include "gsc/parallel.h"
#include "gsc/rng.h"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gsc {

// ---------------------------------------------------------------------------
// Camera

Camera::Camera(double fx, double fy, double cx, double cy, int width, int height, const Mat4& worldToCamera)
    : fx_(fx), fy_(fy), cx_(cx), cy_(cy), width_(width), height_(height), worldToCamera_(worldToCamera) {
  if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy)) {
    throw InvalidParameter(fmt::format("camera focal lengths must be positive, got {} and {}", fx, fy));
  }
  if (width < 1 || height < 1) {
    throw InvalidParameter(fmt::format("camera size {}x{} must be at least 1x1", width, height));
  }
  if (!std::isfinite(cx) || !std::isfinite(cy) || !worldToCamera.allFinite()) {
    throw InvalidParameter("camera parameters must be finite");
  }
  const Mat3 r = worldToCamera.topLeftCorner<3, 3>();
  if (!(r * r.transpose()).isApprox(Mat3::Identity(), 1e-6) || r.determinant() <= 0.0) {
    throw InvalidParameter("camera extrinsic rotation is not orthonormal");
  }
  if ((worldToCamera.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-12) {
    throw InvalidParameter("camera extrinsic bottom row must be (0, 0, 0, 1)");
  }
  cameraToWorldRotation_ = r.transpose();
  position_ = -cameraToWorldRotation_ * worldToCamera.topRightCorner<3, 1>();
}

Camera Camera::lookAt(
    const Vec3& eye,
    const Vec3& target,
    const Vec3& up,
    double fx,
    double fy,
    double cx,
    double cy,
    int width,
    int height) {
  const Vec3 forward = (target - eye).normalized();
  const Vec3 right = forward.cross(up);
  if (right.norm() < 1e-9) {
    throw InvalidParameter("lookAt up vector is parallel to the view direction");
  }
  const Vec3 x = right.normalized();
  const Vec3 y = forward.cross(x);
  Mat4 m = Mat4::Identity();
  m.block<1, 3>(0, 0) = x.transpose();
  m.block<1, 3>(1, 0) = y.transpose();
  m.block<1, 3>(2, 0) = forward.transpose();
  m.topRightCorner<3, 1>() = -m.topLeftCorner<3, 3>() * eye;
  return Camera(fx, fy, cx, cy, width, height, m);
}

Vec3 Camera::position() const {
  return position_;
}

Ray Camera::pixelRay(int x, int y) const {
  const Vec3 dirCamera((x + 0.5 - cx_) / fx_, (y + 0.5 - cy_) / fy_, 1.0);
  return Ray(position_, cameraToWorldRotation_ * dirCamera);
}

// ---------------------------------------------------------------------------
// GBuffer

GBuffer::GBuffer(int width, int height)
    : albedo(width, height, 3), normal(width, height, 3), depth(width, height, 1), mask(width, height, 1) {}

void GBuffer::validateShapes() const {
  const int w = mask.width();
  const int h = mask.height();
  auto check = [&](const Image& img, int channels, const char* name) {
    if (img.width() != w || img.height() != h || img.channels() != channels) {
      throw InvalidInput(fmt::format(
          "G-buffer {} is {}x{}x{}, expected {}x{}x{}", name, img.width(), img.height(), img.channels(), w, h, channels));
    }
  };
  if (mask.empty() || mask.channels() != 1) {
    throw InvalidInput("G-buffer mask must be a non-empty single-channel image");
  }
  check(albedo, 3, "albedo");
  check(normal, 3, "normal");
  check(depth, 1, "depth");
}

void GBuffer::write(const std::filesystem::path& dir) const {
  validateShapes();
  std::filesystem::create_directories(dir);
  writePfm(albedo, dir / "albedo.pfm");
  writePfm(normal, dir / "normal.pfm");
  writePfm(depth, dir / "depth.pfm");
  writePfm(mask, dir / "mask.pfm");
}

GBuffer GBuffer::read(const std::filesystem::path& dir) {
  GBuffer g;
  g.albedo = readPfm(dir / "albedo.pfm");
  g.normal = readPfm(dir / "normal.pfm");
  g.depth = readPfm(dir / "depth.pfm");
  g.mask = readPfm(dir / "mask.pfm");
  g.validateShapes();
  return g;
}

// ---------------------------------------------------------------------------
// Lights and shading

Vec3 directionFromAngles(double azimuth, double elevation) {
  const double ce = std::cos(elevation);
  return {ce * std::sin(azimuth), std::sin(elevation), ce * std::cos(azimuth)};
}

std::pair<double, double> anglesFromDirection(const Vec3& direction) {
  const Vec3 d = direction.normalized();
  const double elevation = std::asin(std::clamp(d.y(), -1.0, 1.0));
  const double horizontal = std::hypot(d.x(), d.z());
  const double azimuth = horizontal < 1e-12 ? 0.0 : std::atan2(d.x(), d.z());
  return {azimuth, elevation};
}

DirectionalLight DirectionalLight::fromAngles(double azimuth, double elevation, const Vec3& ambient, const Vec3& color) {
  return {directionFromAngles(azimuth, elevation), color, ambient};
}

void DirectionalLight::validate() const {
  if (!direction.allFinite() || !color.allFinite() || !ambient.allFinite()) {
    throw InvalidParameter("light parameters must be finite");
  }
  if (std::abs(direction.norm() - 1.0) > 1e-9) {
    throw InvalidParameter(fmt::format("light direction must be unit length, norm is {}", direction.norm()));
  }
}

Vec3 shadePixel(const Vec3& albedo, const Vec3& normal, double s, const DirectionalLight& light) {
  const double cosine = std::max(0.0, light.direction.dot(normal));
  return albedo.cwiseProduct(light.ambient + s * cosine * light.color);
}

std::optional<Vec3> surfacePoint(const GBuffer& gbuffer, const Camera& camera, std::size_t p) {
  const double depth = gbuffer.depth.value(p);
  const Vec3 n = gbuffer.normal.rgb(p);
  if (!std::isfinite(depth) || !(depth > 0.0) || !n.allFinite() || std::abs(n.norm() - 1.0) > 1e-3) {
    return std::nullopt;
  }
  return camera.pixelRay(p).at(depth);
}

namespace {

void checkCameraMatches(const GBuffer& gbuffer, const Camera& camera) {
  gbuffer.validateShapes();
  if (gbuffer.width() != camera.width() || gbuffer.height() != camera.height()) {
    throw InvalidInput(fmt::format(
        "G-buffer is {}x{} but the camera is {}x{}", gbuffer.width(), gbuffer.height(), camera.width(), camera.height()));
  }
}

} // namespace

Image shadowMap(
    const GBuffer& gbuffer,
    const Camera& camera,
    std::span<const PreparedGaussian> gaussians,
    const Vec3& lightDirection,
    const ShadowConfig& cfg,
    ShadowDiagnostics* diagnostics) {
  checkCameraMatches(gbuffer, camera);
  Image s(gbuffer.width(), gbuffer.height(), 1, 1.0f);
  std::vector<char> invalid(gbuffer.pixelCount(), 0);
  parallelFor(gbuffer.pixelCount(), [&](std::size_t p) {
    if (!gbuffer.foreground(p)) {
      return;
    }
    const auto x = surfacePoint(gbuffer, camera, p);
    if (!x) {
      invalid[p] = 1;
      return;
    }
    const Vec3 n = gbuffer.normal.rgb(p).normalized();
    const Ray ray(*x + cfg.bias * n, lightDirection);
    s.value(p) = static_cast<float>(std::clamp(transmittance(gaussians, ray), 0.0, 1.0));
  });
  if (diagnostics) {
    diagnostics->invalidPixels = static_cast<std::size_t>(std::count(invalid.begin(), invalid.end(), 1));
  }
  return s;
}

Image shadeImage(const GBuffer& gbuffer, const Image& shadow, const DirectionalLight& light, const Image& background) {
  gbuffer.validateShapes();
  if (shadow.width() != gbuffer.width() || shadow.height() != gbuffer.height() || shadow.channels() != 1) {
    throw InvalidInput("shadow map does not match the G-buffer");
  }
  const bool hasBackground = !background.empty();
  if (hasBackground && (background.width() != gbuffer.width() || background.height() != gbuffer.height())) {
    throw InvalidInput("background does not match the G-buffer");
  }
  Image out(gbuffer.width(), gbuffer.height(), 3);
  for (std::size_t p = 0; p < out.pixelCount(); ++p) {
    const double m = std::clamp(static_cast<double>(gbuffer.mask.value(p)), 0.0, 1.0);
    const Vec3 bg = hasBackground ? background.rgb(p) : Vec3::Zero();
    Vec3 color = (1.0 - m) * bg;
    if (m > 0.0) {
      color += m * shadePixel(gbuffer.albedo.rgb(p), gbuffer.normal.rgb(p), shadow.value(p), light);
    }
    out.setRgb(p, color);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ground plane

void GroundPlane::validate() const {
  if (!point.allFinite() || !normal.allFinite() || std::abs(normal.norm() - 1.0) > 1e-9) {
    throw InvalidParameter("ground plane needs a finite point and a unit normal");
  }
}

Image groundShadow(
    const GroundPlane& plane,
    std::span<const PreparedGaussian> gaussians,
    const Vec3& lightDirection,
    const Camera& camera) {
  plane.validate();
  Image out;
  if (plane.background.empty()) {
    out = Image(camera.width(), camera.height(), 3);
    for (std::size_t p = 0; p < out.pixelCount(); ++p) {
      out.setRgb(p, plane.color);
    }
  } else {
    if (plane.background.width() != camera.width() || plane.background.height() != camera.height() ||
        plane.background.channels() != 3) {
      throw InvalidInput("ground background must be an RGB image of the camera's size");
    }
    out = plane.background;
  }
  parallelFor(out.pixelCount(), [&](std::size_t p) {
    const Ray view = camera.pixelRay(p);
    const double denom = plane.normal.dot(view.direction());
    if (std::abs(denom) < 1e-12) {
      return;
    }
    const double t = plane.normal.dot(plane.point - view.origin()) / denom;
    if (!(t > 0.0) || !std::isfinite(t)) {
      return;
    }
    const double s = transmittance(gaussians, Ray(view.at(t), lightDirection));
    out.setRgb(p, s * out.rgb(p));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Environment lighting

double luminance(const Vec3& rgb) {
  return 0.2126 * rgb.x() + 0.7152 * rgb.y() + 0.0722 * rgb.z();
}

EnvironmentMap::EnvironmentMap(Image radiance) : radiance_(std::move(radiance)) {
  if (radiance_.empty() || radiance_.channels() != 3) {
    throw InvalidInput("environment map must be a non-empty RGB image");
  }
  double best = -1.0;
  for (std::size_t i = 0; i < radiance_.pixelCount(); ++i) {
    const Vec3 v = radiance_.rgb(i);
    if (!v.allFinite() || (v.array() < 0.0).any()) {
      throw InvalidInput("environment radiance must be finite and non-negative");
    }
    const double l = luminance(v);
    if (l > best) {
      best = l;
      brightest_ = i;
    }
  }
}

EnvironmentMap EnvironmentMap::constant(int width, int height, const Vec3& radiance) {
  Image img(width, height, 3);
  for (std::size_t p = 0; p < img.pixelCount(); ++p) {
    img.setRgb(p, radiance);
  }
  return EnvironmentMap(std::move(img));
}

std::size_t EnvironmentMap::texelIndex(const Vec3& direction) const {
  const Vec3 d = direction.normalized();
  const double theta = std::acos(std::clamp(d.y(), -1.0, 1.0));
  const double phi = std::atan2(d.x(), d.z());
  const int w = radiance_.width();
  const int h = radiance_.height();
  const int x = std::clamp(static_cast<int>(std::floor((phi + std::numbers::pi) / (2.0 * std::numbers::pi) * w)), 0, w - 1);
  const int y = std::clamp(static_cast<int>(std::floor(theta / std::numbers::pi * h)), 0, h - 1);
  return static_cast<std::size_t>(y) * w + x;
}

Vec3 EnvironmentMap::texelDirection(std::size_t index) const {
  const int w = radiance_.width();
  const int h = radiance_.height();
  const double theta = (static_cast<double>(index / w) + 0.5) * std::numbers::pi / h;
  const double phi = (static_cast<double>(index % w) + 0.5) * 2.0 * std::numbers::pi / w - std::numbers::pi;
  return {std::sin(theta) * std::sin(phi), std::cos(theta), std::sin(theta) * std::cos(phi)};
}

double EnvironmentMap::texelSolidAngle(std::size_t index) const {
  const int w = radiance_.width();
  const int h = radiance_.height();
  const double row = static_cast<double>(index / w);
  const double theta0 = row * std::numbers::pi / h;
  const double theta1 = (row + 1.0) * std::numbers::pi / h;
  return 2.0 * std::numbers::pi / w * (std::cos(theta0) - std::cos(theta1));
}

Vec3 environmentLighting(
    const Vec3& point,
    const Vec3& normal,
    std::span<const PreparedGaussian> gaussians,
    const EnvironmentMap& env,
    int rays,
    std::uint64_t seed) {
  if (rays < 1) {
    throw InvalidParameter(fmt::format("environment lighting needs at least one ray, got {}", rays));
  }
  const std::size_t sun = env.brightestTexel();
  const Vec3 sunRadiance = env.radiance(sun);
  Vec3 result = Vec3::Zero();

  const Vec3 sunDir = env.texelDirection(sun);
  const double cosine = normal.dot(sunDir);
  if (cosine > 0.0 && luminance(sunRadiance) > 0.0) {
    const double t = transmittance(gaussians, Ray(point, sunDir));
    result += std::numbers::inv_pi * cosine * env.texelSolidAngle(sun) * t * sunRadiance;
  }

  if (rays > 1) {
    SplitMix64 gen(seed);
    Vec3 diffuse = Vec3::Zero();
    for (int i = 1; i < rays; ++i) {
      Vec3 d = normal + uniformUnitVector(gen);
      if (d.squaredNorm() < 1e-18) {
        d = normal;
      }
      const std::size_t texel = env.texelIndex(d);
      if (texel == sun) {
        continue;
      }
      const Vec3 radiance = env.radiance(texel);
      if (radiance.isZero(0.0)) {
        continue;
      }
      diffuse += transmittance(gaussians, Ray(point, d)) * radiance;
    }
    result += diffuse / static_cast<double>(rays - 1);
  }
  return result;
}

Image relightHdri(
    const GBuffer& gbuffer,
    const Camera& camera,
    std::span<const PreparedGaussian> gaussians,
    const EnvironmentMap& env,
    int rays,
    std::uint64_t seed,
    const ShadowConfig& cfg,
    ShadowDiagnostics* diagnostics) {
  if (rays < 1) {
    throw InvalidParameter(fmt::format("relighting needs at least one ray per pixel, got {}", rays));
  }
  checkCameraMatches(gbuffer, camera);
  Image out(gbuffer.width(), gbuffer.height(), 3);
  std::vector<char> invalid(gbuffer.pixelCount(), 0);
  parallelFor(gbuffer.pixelCount(), [&](std::size_t p) {
    const double m = std::clamp(static_cast<double>(gbuffer.mask.value(p)), 0.0, 1.0);
    Vec3 color = (1.0 - m) * env.lookup(camera.pixelRay(p).direction());
    if (m > 0.0) {
      const auto x = surfacePoint(gbuffer, camera, p);
      if (x) {
        const Vec3 n = gbuffer.normal.rgb(p).normalized();
        const Vec3 light = environmentLighting(*x + cfg.bias * n, n, gaussians, env, rays, mixSeed(seed, p));
        color += m * gbuffer.albedo.rgb(p).cwiseProduct(light);
      } else if (gbuffer.foreground(p)) {
        invalid[p] = 1;
      }
    }
    out.setRgb(p, color);
  });
  if (diagnostics) {
    diagnostics->invalidPixels = static_cast<std::size_t>(std::count(invalid.begin(), invalid.end(), 1));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Analytic rasterizer

namespace {

constexpr double kDefaultAlbedo = 0.8;

} // namespace

GBuffer rasterize(const Camera& camera, std::span<const AnisoGaussian> gaussians, std::span<const Vec3> colors) {
  if (!colors.empty() && colors.size() != gaussians.size()) {
    throw InvalidInput(fmt::format("{} colors given for {} Gaussians", colors.size(), gaussians.size()));
  }
  const auto prepared = prepare(gaussians);
  GBuffer g(camera.width(), camera.height());
  const Vec3 origin = camera.position();
  parallelFor(camera.pixelCount(), [&](std::size_t p) {
    const Vec3 d = camera.pixelRay(p).direction();
    double nearest = std::numeric_limits<double>::infinity();
    std::size_t hit = prepared.size();
    for (std::size_t i = 0; i < prepared.size(); ++i) {
      const auto& pg = prepared[i];
      if (!(pg.amplitude > 0.0)) {
        continue;
      }
      // (o + t d - mu)^T P (o + t d - mu) = 1
      const Vec3 offset = origin - pg.mean;
      const Vec3 pd = pg.precision * d;
      const double a = d.dot(pd);
      const double b = offset.dot(pd);
      const double c = offset.dot(pg.precision * offset) - 1.0;
      const double disc = b * b - a * c;
      if (disc < 0.0 || c <= 0.0) {
        continue; // missed, or the camera is inside the ellipsoid
      }
      const double t = (-b - std::sqrt(disc)) / a;
      if (t > 0.0 && t < nearest) {
        nearest = t;
        hit = i;
      }
    }
    if (hit == prepared.size()) {
      return;
    }
    const Vec3 x = origin + nearest * d;
    const Vec3 n = (prepared[hit].precision * (x - prepared[hit].mean)).normalized();
    g.albedo.setRgb(p, colors.empty() ? Vec3::Constant(kDefaultAlbedo) : colors[hit]);
    g.normal.setRgb(p, n);
    g.depth.value(p) = static_cast<float>(nearest);
    g.mask.value(p) = 1.0f;
  });
  return g;
}

// ---------------------------------------------------------------------------
// Render modes

RenderMode parseRenderMode(std::string_view name) {
  if (name == "lit") {
    return RenderMode::Lit;
  }
  if (name == "albedo") {
    return RenderMode::Albedo;
  }
  if (name == "shadow") {
    return RenderMode::Shadow;
  }
  if (name == "normal") {
    return RenderMode::Normal;
  }
  if (name == "depth") {
    return RenderMode::Depth;
  }
  throw UsageError(fmt::format("unknown render mode '{}' (expected lit, albedo, shadow, normal or depth)", name));
}

std::string_view renderModeName(RenderMode mode) {
  switch (mode) {
    case RenderMode::Lit:
      return "lit";
    case RenderMode::Albedo:
      return "albedo";
    case RenderMode::Shadow:
      return "shadow";
    case RenderMode::Normal:
      return "normal";
    case RenderMode::Depth:
      return "depth";
  }
  return "unknown";
}

Image renderFrame(const FrameInputs& in, RenderMode mode, ShadowDiagnostics* diagnostics) {
  if (!in.camera || !in.gbuffer) {
    throw InvalidInput("renderFrame needs a camera and a G-buffer");
  }
  switch (mode) {
    case RenderMode::Albedo:
      return in.gbuffer->albedo;
    case RenderMode::Normal:
      return in.gbuffer->normal;
    case RenderMode::Depth:
      return in.gbuffer->depth;
    case RenderMode::Shadow:
      return shadowMap(*in.gbuffer, *in.camera, in.gaussians, in.light.direction, in.shadow, diagnostics);
    case RenderMode::Lit: {
      in.light.validate();
      const Image s = shadowMap(*in.gbuffer, *in.camera, in.gaussians, in.light.direction, in.shadow, diagnostics);
      const Image background =
          in.ground ? groundShadow(*in.ground, in.gaussians, in.light.direction, *in.camera) : Image();
      return shadeImage(*in.gbuffer, s, in.light, background);
    }
  }
  throw UsageError("unknown render mode");
}

} // namespace gsc
