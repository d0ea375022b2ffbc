#pragma once

#include "gsc/gaussian.h"
#include "gsc/image.h"
#include "gsc/shading.h"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace gsc {

/// Mean absolute per-channel error over pixels with mask > 0.5. Throws
/// InvalidInput on a shape mismatch.
double lossRgb(const Image& rendered, const Image& reference, const Image& mask);

/// Mean absolute deviation of every channel from 0.75 over pixels with
/// mask > 0.5.
double lossGrey(const Image& rendered, const Image& mask);

/// Mean absolute difference of two single-channel masks over all pixels.
double lossMask(const Image& accumulation, const Image& mask);

/// Squared distance of the ambient triple from (0.1, 0.1, 0.1).
double lossAmbient(const Vec3& ambient);

/// Angle between two directions in degrees.
double angularErrorDegrees(const Vec3& a, const Vec3& b);

struct LightParams {
  double azimuth = 0.0;
  double elevation = 0.0;
  Vec3 ambient = Vec3::Constant(0.1);

  Vec3 direction() const {
    return directionFromAngles(azimuth, elevation);
  }
  /// The opposite direction with the same ambient.
  LightParams antipodal() const;

  Eigen::Matrix<double, 5, 1> vector() const;
  static LightParams fromVector(const Eigen::Matrix<double, 5, 1>& v);
};

struct SolveConfig {
  int iterations = 400;
  double angleStep = 0.05; // initial Adam step, radians
  double ambientStep = 0.01;
  double finalStepFraction = 0.1; // steps decay linearly to this fraction
  // Blend from the grey loss to the RGB loss between these iterations.
  double blendStart = 0.0;
  double blendEnd = 40.0;
  double wAmbient = 0.01;
  int framesPerIteration = 2;
  double angleProbe = 1e-3; // central-difference step for the angles
  double ambientProbe = 1e-3;
  std::uint64_t seed = 0;

  /// Throws InvalidParameter unless blendStart < blendEnd <= iterations and
  /// the steps and probes are positive.
  void validate() const;
};

/// One reference view: its geometry, the Gaussians that cast shadows in its
/// pose, and the photograph the solver should reproduce.
struct LightReference {
  Camera camera;
  GBuffer gbuffer;
  std::vector<PreparedGaussian> gaussians;
  Image image; // RGB, camera-sized
  Image mask; // loss region; empty means the G-buffer mask
};

/// The references with their masked pixels and shadow-ray origins
/// precomputed, so every loss evaluation only re-casts shadow rays.
class LightProblem {
 public:
  LightProblem(
      std::vector<LightReference> references,
      const Vec3& lightColor = Vec3::Constant(kDefaultLightMagnitude),
      const ShadowConfig& shadow = {});

  std::size_t frameCount() const {
    return frames_.size();
  }

  /// Per-frame average of (1 - beta) L_grey + beta L_RGB, plus
  /// wAmbient L_amb. An empty frame list means all frames.
  double loss(const LightParams& params, double beta, double wAmbient, std::span<const std::size_t> frames = {}) const;

  /// Central differences of loss() w.r.t. (azimuth, elevation, ambient rgb).
  Eigen::Matrix<double, 5, 1> gradient(
      const LightParams& params,
      double beta,
      double wAmbient,
      double angleProbe,
      double ambientProbe,
      std::span<const std::size_t> frames = {}) const;

  /// Full lit image of one frame under params. On foreground loss pixels it
  /// matches what loss() compares against the reference.
  Image render(std::size_t frame, const LightParams& params) const;

 private:
  struct Pixel {
    std::size_t index;
    Vec3 albedo;
    Vec3 normal;
    Vec3 origin; // biased surface point
    Vec3 reference;
    bool surface;
  };
  struct Frame {
    LightReference ref;
    std::vector<Pixel> pixels;
  };

  std::vector<double> shadows(const Frame& frame, const Vec3& direction) const;
  double frameLoss(
      const Frame& frame,
      const std::vector<double>& s,
      const Vec3& direction,
      const Vec3& ambient,
      double beta) const;

  std::vector<Frame> frames_;
  Vec3 lightColor_;
  ShadowConfig shadow_;
};

struct SolveResult {
  LightParams params;
  std::vector<double> lossTrace; // scheduled loss on the sampled frames
};

/// Adam on (azimuth, elevation, ambient) with finite-difference gradients.
/// A step past a pole is reflected back over it so elevation stays in
/// [-pi/2, pi/2]; ambient is clamped to [0, 1] after every step.
/// Deterministic given cfg.seed. Throws OptimizationFailure on a non-finite
/// loss.
SolveResult solveLight(const LightProblem& problem, const LightParams& initial, const SolveConfig& cfg);

} // namespace gsc
