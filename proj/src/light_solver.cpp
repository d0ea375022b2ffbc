#include "gsc/light_solver.h"

#include "gsc/errors.h"
#include "gsc/parallel.h"
#include "gsc/rng.h"
#include "gsc/schedule.h"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace gsc {

namespace {

constexpr double kGreyTarget = 0.75;
constexpr double kAmbientPrior = 0.1;

void checkMask(const Image& image, const Image& mask) {
  if (mask.width() != image.width() || mask.height() != image.height() || mask.channels() != 1) {
    throw InvalidInput("mask must be a single-channel image of the rendered size");
  }
}

} // namespace

double lossRgb(const Image& rendered, const Image& reference, const Image& mask) {
  return meanAbsDifference(rendered, reference, &mask);
}

double lossGrey(const Image& rendered, const Image& mask) {
  checkMask(rendered, mask);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < rendered.pixelCount(); ++p) {
    if (!(mask.value(p) > 0.5f)) {
      continue;
    }
    for (int c = 0; c < rendered.channels(); ++c) {
      sum += std::abs(rendered.value(p, c) - kGreyTarget);
    }
    count += rendered.channels();
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

double lossMask(const Image& accumulation, const Image& mask) {
  if (!accumulation.sameShape(mask) || mask.channels() != 1) {
    throw InvalidInput("masks must be single-channel images of the same size");
  }
  return meanAbsDifference(accumulation, mask);
}

double lossAmbient(const Vec3& ambient) {
  return (ambient - Vec3::Constant(kAmbientPrior)).squaredNorm();
}

double angularErrorDegrees(const Vec3& a, const Vec3& b) {
  // atan2 of the cross and dot products stays accurate near 0 and 180.
  const Vec3 u = a.normalized();
  const Vec3 v = b.normalized();
  return std::atan2(u.cross(v).norm(), u.dot(v)) * 180.0 / std::numbers::pi;
}

LightParams LightParams::antipodal() const {
  const auto [az, el] = anglesFromDirection(-direction());
  return {az, el, ambient};
}

Eigen::Matrix<double, 5, 1> LightParams::vector() const {
  Eigen::Matrix<double, 5, 1> v;
  v << azimuth, elevation, ambient;
  return v;
}

LightParams LightParams::fromVector(const Eigen::Matrix<double, 5, 1>& v) {
  return {v[0], v[1], v.tail<3>()};
}

void SolveConfig::validate() const {
  if (iterations < 1) {
    throw InvalidParameter("light solve needs at least one iteration");
  }
  if (!(blendStart < blendEnd) || blendEnd > iterations) {
    throw InvalidParameter(fmt::format(
        "light solve blend needs start < end <= iterations, got {} / {} / {}", blendStart, blendEnd, iterations));
  }
  if (!(angleStep > 0.0) || !(ambientStep > 0.0) || !(finalStepFraction > 0.0)) {
    throw InvalidParameter("light solve steps must be positive");
  }
  if (!(angleProbe > 0.0) || !(ambientProbe > 0.0)) {
    throw InvalidParameter("finite-difference probes must be positive");
  }
  if (wAmbient < 0.0 || framesPerIteration < 1) {
    throw InvalidParameter("light solve needs wAmbient >= 0 and framesPerIteration >= 1");
  }
}

// ---------------------------------------------------------------------------
// LightProblem

LightProblem::LightProblem(std::vector<LightReference> references, const Vec3& lightColor, const ShadowConfig& shadow)
    : lightColor_(lightColor), shadow_(shadow) {
  if (references.empty()) {
    throw InvalidInput("light solve needs at least one reference");
  }
  for (std::size_t f = 0; f < references.size(); ++f) {
    auto& ref = references[f];
    ref.gbuffer.validateShapes();
    if (ref.gbuffer.width() != ref.camera.width() || ref.gbuffer.height() != ref.camera.height()) {
      throw InvalidInput(fmt::format("reference {}: G-buffer and camera sizes differ", f));
    }
    if (ref.image.width() != ref.camera.width() || ref.image.height() != ref.camera.height() ||
        ref.image.channels() != 3) {
      throw InvalidInput(fmt::format("reference {}: image must be RGB at the camera size", f));
    }
    if (ref.mask.empty()) {
      ref.mask = ref.gbuffer.mask;
    }
    checkMask(ref.image, ref.mask);

    Frame frame{std::move(ref), {}};
    const auto& r = frame.ref;
    for (std::size_t p = 0; p < r.image.pixelCount(); ++p) {
      if (!(r.mask.value(p) > 0.5f)) {
        continue;
      }
      Pixel px{p, Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), r.image.rgb(p), false};
      if (r.gbuffer.foreground(p)) {
        if (const auto x = surfacePoint(r.gbuffer, r.camera, p)) {
          px.normal = r.gbuffer.normal.rgb(p).normalized();
          px.albedo = r.gbuffer.albedo.rgb(p);
          px.origin = *x + shadow_.bias * px.normal;
          px.surface = true;
        }
      }
      frame.pixels.push_back(px);
    }
    frames_.push_back(std::move(frame));
  }
}

std::vector<double> LightProblem::shadows(const Frame& frame, const Vec3& direction) const {
  std::vector<double> s(frame.pixels.size(), 1.0);
  parallelFor(frame.pixels.size(), [&](std::size_t i) {
    const auto& px = frame.pixels[i];
    if (px.surface && direction.dot(px.normal) > 0.0) {
      s[i] = transmittance(frame.ref.gaussians, Ray(px.origin, direction));
    }
  });
  return s;
}

double LightProblem::frameLoss(
    const Frame& frame,
    const std::vector<double>& s,
    const Vec3& direction,
    const Vec3& ambient,
    double beta) const {
  if (frame.pixels.empty()) {
    return 0.0;
  }
  DirectionalLight light{direction, lightColor_, ambient};
  double grey = 0.0;
  double rgb = 0.0;
  for (std::size_t i = 0; i < frame.pixels.size(); ++i) {
    const auto& px = frame.pixels[i];
    const Vec3 c = px.surface ? shadePixel(px.albedo, px.normal, s[i], light) : Vec3::Zero();
    grey += (c.array() - kGreyTarget).abs().sum();
    rgb += (c - px.reference).cwiseAbs().sum();
  }
  const double n = 3.0 * static_cast<double>(frame.pixels.size());
  return (1.0 - beta) * grey / n + beta * rgb / n;
}

namespace {

std::vector<std::size_t> allFrames(std::size_t n, std::span<const std::size_t> frames) {
  if (!frames.empty()) {
    return {frames.begin(), frames.end()};
  }
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  return all;
}

} // namespace

double LightProblem::loss(const LightParams& params, double beta, double wAmbient, std::span<const std::size_t> frames)
    const {
  const auto selected = allFrames(frames_.size(), frames);
  const Vec3 d = params.direction();
  double total = 0.0;
  for (std::size_t f : selected) {
    total += frameLoss(frames_.at(f), shadows(frames_.at(f), d), d, params.ambient, beta);
  }
  return total / static_cast<double>(selected.size()) + wAmbient * lossAmbient(params.ambient);
}

Eigen::Matrix<double, 5, 1> LightProblem::gradient(
    const LightParams& params,
    double beta,
    double wAmbient,
    double angleProbe,
    double ambientProbe,
    std::span<const std::size_t> frames) const {
  const auto selected = allFrames(frames_.size(), frames);
  Eigen::Matrix<double, 5, 1> grad = Eigen::Matrix<double, 5, 1>::Zero();
  for (std::size_t f : selected) {
    const Frame& frame = frames_.at(f);
    // Angle probes need fresh shadow rays; ambient probes reuse the base ones.
    for (int k = 0; k < 2; ++k) {
      double plusLoss = 0.0;
      double minusLoss = 0.0;
      for (int sign : {1, -1}) {
        LightParams probe = params;
        (k == 0 ? probe.azimuth : probe.elevation) += sign * angleProbe;
        const Vec3 d = probe.direction();
        (sign > 0 ? plusLoss : minusLoss) = frameLoss(frame, shadows(frame, d), d, probe.ambient, beta);
      }
      grad[k] += (plusLoss - minusLoss) / (2.0 * angleProbe);
    }
    const Vec3 d = params.direction();
    const auto base = shadows(frame, d);
    for (int c = 0; c < 3; ++c) {
      Vec3 plus = params.ambient;
      Vec3 minus = params.ambient;
      plus[c] += ambientProbe;
      minus[c] -= ambientProbe;
      grad[2 + c] += (frameLoss(frame, base, d, plus, beta) - frameLoss(frame, base, d, minus, beta)) / (2.0 * ambientProbe);
    }
  }
  grad /= static_cast<double>(selected.size());
  // The prior is quadratic, so its central difference is exact.
  grad.tail<3>() += wAmbient * 2.0 * (params.ambient - Vec3::Constant(kAmbientPrior));
  return grad;
}

Image LightProblem::render(std::size_t frame, const LightParams& params) const {
  const Frame& f = frames_.at(frame);
  FrameInputs in;
  in.camera = &f.ref.camera;
  in.gbuffer = &f.ref.gbuffer;
  in.gaussians = f.ref.gaussians;
  in.light = DirectionalLight{params.direction(), lightColor_, params.ambient};
  in.shadow = shadow_;
  return renderFrame(in, RenderMode::Lit);
}

// ---------------------------------------------------------------------------
// Solver

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEpsilon = 1e-12;

std::vector<std::size_t> sampleFrames(std::size_t count, int perIteration, std::uint64_t seed) {
  std::vector<std::size_t> frames(count);
  std::iota(frames.begin(), frames.end(), std::size_t{0});
  if (static_cast<std::size_t>(perIteration) >= count) {
    return frames;
  }
  SplitMix64 gen(seed);
  for (int i = 0; i < perIteration; ++i) {
    const std::size_t remaining = count - i;
    const std::size_t j = i + std::min(static_cast<std::size_t>(uniform01(gen) * remaining), remaining - 1);
    std::swap(frames[i], frames[j]);
  }
  frames.resize(perIteration);
  std::sort(frames.begin(), frames.end());
  return frames;
}

} // namespace

SolveResult solveLight(const LightProblem& problem, const LightParams& initial, const SolveConfig& cfg) {
  cfg.validate();
  const WeightSchedule blend = WeightSchedule::ramp(cfg.blendStart, cfg.blendEnd);

  Eigen::Matrix<double, 5, 1> x = initial.vector();
  x[1] = std::clamp(x[1], -std::numbers::pi / 2, std::numbers::pi / 2);
  x.tail<3>() = x.tail<3>().cwiseMax(0.0).cwiseMin(1.0);
  Eigen::Matrix<double, 5, 1> m = Eigen::Matrix<double, 5, 1>::Zero();
  Eigen::Matrix<double, 5, 1> v = Eigen::Matrix<double, 5, 1>::Zero();
  Eigen::Matrix<double, 5, 1> baseStep;
  baseStep << cfg.angleStep, cfg.angleStep, cfg.ambientStep, cfg.ambientStep, cfg.ambientStep;

  SolveResult result;
  result.lossTrace.reserve(cfg.iterations);
  for (int it = 0; it < cfg.iterations; ++it) {
    const double beta = blend.at(it);
    const auto frames = sampleFrames(problem.frameCount(), cfg.framesPerIteration, mixSeed(cfg.seed, it));
    const LightParams params = LightParams::fromVector(x);
    const double loss = problem.loss(params, beta, cfg.wAmbient, frames);
    const auto g = problem.gradient(params, beta, cfg.wAmbient, cfg.angleProbe, cfg.ambientProbe, frames);
    if (!std::isfinite(loss) || !g.allFinite()) {
      throw OptimizationFailure(fmt::format("light solve diverged at iteration {}", it), static_cast<std::size_t>(it));
    }
    result.lossTrace.push_back(loss);

    m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * g;
    v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * g.cwiseProduct(g);
    const Eigen::Matrix<double, 5, 1> mHat = m / (1.0 - std::pow(kAdamBeta1, it + 1));
    const Eigen::Matrix<double, 5, 1> vHat = v / (1.0 - std::pow(kAdamBeta2, it + 1));
    const double decay = 1.0 - (1.0 - cfg.finalStepFraction) * static_cast<double>(it) / cfg.iterations;
    x -= decay * baseStep.cwiseProduct(mHat.cwiseQuotient((vHat.cwiseSqrt().array() + kAdamEpsilon).matrix()));

    // Stepping past a pole continues over it: same direction, azimuth
    // flipped, and elevation now moving the other way.
    if (std::abs(x[1]) > std::numbers::pi / 2) {
      x[1] = std::copysign(std::numbers::pi, x[1]) - x[1];
      x[0] += std::numbers::pi;
      m[1] = -m[1];
    }
    x[0] = std::remainder(x[0], 2.0 * std::numbers::pi);
    x.tail<3>() = x.tail<3>().cwiseMax(0.0).cwiseMin(1.0);
  }
  result.params = LightParams::fromVector(x);
  return result;
}

} // namespace gsc
