#include "gsc/density_fit.h"

#include "binary_io.h"
#include "gsc/errors.h"
#include "gsc/rng.h"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace gsc {

// ---------------------------------------------------------------------------
// VoxelField

VoxelField::VoxelField(std::array<int, 3> resolution, const Vec3& boxMin, const Vec3& boxMax, std::vector<float> values)
    : resolution_(resolution), boxMin_(boxMin), boxMax_(boxMax), values_(std::move(values)) {
  for (int a = 0; a < 3; ++a) {
    if (resolution_[a] < 2) {
      throw InvalidInput(fmt::format("voxel resolution {} on axis {} must be at least 2", resolution_[a], a));
    }
  }
  if (!boxMin_.allFinite() || !boxMax_.allFinite() || !(boxMax_.array() > boxMin_.array()).all()) {
    throw InvalidInput("voxel bounding box is degenerate");
  }
  const std::size_t expected = static_cast<std::size_t>(resolution_[0]) * resolution_[1] * resolution_[2];
  if (values_.size() != expected) {
    throw InvalidInput(fmt::format("voxel grid needs {} values, got {}", expected, values_.size()));
  }
  for (float v : values_) {
    if (!std::isfinite(v) || v < 0.0f) {
      throw InvalidInput("voxel values must be finite and non-negative");
    }
  }
  spacing_ = (boxMax_ - boxMin_).cwiseQuotient(Vec3(resolution_[0] - 1, resolution_[1] - 1, resolution_[2] - 1));
}

VoxelField VoxelField::sample(
    std::array<int, 3> resolution,
    const Vec3& boxMin,
    const Vec3& boxMax,
    const std::function<double(const Vec3&)>& density) {
  const Vec3 spacing = (boxMax - boxMin).cwiseQuotient(Vec3(resolution[0] - 1, resolution[1] - 1, resolution[2] - 1));
  std::vector<float> values;
  values.reserve(static_cast<std::size_t>(resolution[0]) * resolution[1] * resolution[2]);
  for (int z = 0; z < resolution[2]; ++z) {
    for (int y = 0; y < resolution[1]; ++y) {
      for (int x = 0; x < resolution[0]; ++x) {
        values.push_back(static_cast<float>(density(boxMin + Vec3(x, y, z).cwiseProduct(spacing))));
      }
    }
  }
  return VoxelField(resolution, boxMin, boxMax, std::move(values));
}

Vec3 VoxelField::nodePosition(int ix, int iy, int iz) const {
  return boxMin_ + Vec3(ix, iy, iz).cwiseProduct(spacing_);
}

bool VoxelField::contains(const Vec3& x) const {
  return (x.array() >= boxMin_.array()).all() && (x.array() <= boxMax_.array()).all();
}

double VoxelField::operator()(const Vec3& x) const {
  if (!contains(x)) {
    return 0.0;
  }
  std::array<int, 3> i0;
  std::array<double, 3> frac;
  for (int a = 0; a < 3; ++a) {
    const double f = (x[a] - boxMin_[a]) / spacing_[a];
    i0[a] = std::clamp(static_cast<int>(std::floor(f)), 0, resolution_[a] - 2);
    frac[a] = std::clamp(f - i0[a], 0.0, 1.0);
  }
  const auto at = [&](int dx, int dy, int dz) {
    const std::size_t idx =
        (static_cast<std::size_t>(i0[2] + dz) * resolution_[1] + (i0[1] + dy)) * resolution_[0] + (i0[0] + dx);
    return static_cast<double>(values_[idx]);
  };
  double result = 0.0;
  for (int dz = 0; dz < 2; ++dz) {
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) {
        const double w = (dx ? frac[0] : 1.0 - frac[0]) * (dy ? frac[1] : 1.0 - frac[1]) * (dz ? frac[2] : 1.0 - frac[2]);
        result += w * at(dx, dy, dz);
      }
    }
  }
  return result;
}

double VoxelField::meanSquared() const {
  double sum = 0.0;
  for (float v : values_) {
    sum += static_cast<double>(v) * v;
  }
  return sum / static_cast<double>(values_.size());
}

VoxelField readVoxelField(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError(fmt::format("cannot open voxel field {}", path.string()));
  }
  std::array<int, 3> res;
  for (auto& r : res) {
    r = detail::readLittle<std::int32_t>(in);
  }
  Vec3 lo;
  Vec3 hi;
  for (int a = 0; a < 3; ++a) {
    lo[a] = detail::readLittle<float>(in);
  }
  for (int a = 0; a < 3; ++a) {
    hi[a] = detail::readLittle<float>(in);
  }
  if (res[0] < 2 || res[1] < 2 || res[2] < 2 || res[0] > 4096 || res[1] > 4096 || res[2] > 4096) {
    throw IoError(fmt::format("voxel field {} has invalid resolution", path.string()));
  }
  std::vector<float> values(static_cast<std::size_t>(res[0]) * res[1] * res[2]);
  for (auto& v : values) {
    v = detail::readLittle<float>(in);
  }
  return VoxelField(res, lo, hi, std::move(values));
}

void writeVoxelField(const VoxelField& field, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError(fmt::format("cannot write voxel field {}", path.string()));
  }
  for (int r : field.resolution()) {
    detail::writeLittle<std::int32_t>(out, r);
  }
  for (int a = 0; a < 3; ++a) {
    detail::writeLittle<float>(out, static_cast<float>(field.boxMin()[a]));
  }
  for (int a = 0; a < 3; ++a) {
    detail::writeLittle<float>(out, static_cast<float>(field.boxMax()[a]));
  }
  for (float v : field.values()) {
    detail::writeLittle<float>(out, v);
  }
  if (!out) {
    throw IoError(fmt::format("failed writing voxel field {}", path.string()));
  }
}

// ---------------------------------------------------------------------------
// Regularizers

namespace {

constexpr double kSigmaKnee = 0.02;

void checkSigma(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw InvalidParameter(fmt::format("sigma {} must be positive", sigma));
  }
}

double meanTerm(double d) {
  return std::pow(100.0 * d * d * d * d + 1.0, 0.25) - 1.0;
}

double meanTermDerivative(double d) {
  return 100.0 * d * d * d * std::pow(100.0 * d * d * d * d + 1.0, -0.75);
}

} // namespace

double lossSigma(double sigma) {
  checkSigma(sigma);
  if (sigma <= kSigmaKnee) {
    return 2e-5 / sigma;
  }
  const double d = sigma - kSigmaKnee;
  return 100.0 * d * d * d * d + 0.001;
}

double lossSigmaDerivative(double sigma) {
  checkSigma(sigma);
  if (sigma <= kSigmaKnee) {
    return -2e-5 / (sigma * sigma);
  }
  const double d = sigma - kSigmaKnee;
  return 400.0 * d * d * d;
}

double lossMean(const Vec3& mu, const Vec3& boneCenter) {
  const Vec3 d = mu - boneCenter;
  return meanTerm(d.x()) + meanTerm(d.y()) + meanTerm(d.z());
}

Vec3 lossMeanGradient(const Vec3& mu, const Vec3& boneCenter) {
  const Vec3 d = mu - boneCenter;
  return {meanTermDerivative(d.x()), meanTermDerivative(d.y()), meanTermDerivative(d.z())};
}

// ---------------------------------------------------------------------------
// Density loss and gradient

namespace {

constexpr int kP = AnisoGaussian::kParameterCount;

// Pulls a gradient on the orthonormal rows back through Gram-Schmidt to the
// raw rot6 entries.
Rot6 backpropRot6(const Rot6& raw, const Mat3& gradRows) {
  const Vec3 a(raw[0], raw[1], raw[2]);
  const Vec3 b(raw[3], raw[4], raw[5]);
  const double na = a.norm();
  const Vec3 r0 = a / na;
  const double s = r0.dot(b);
  const Vec3 bPerp = b - s * r0;
  const double nb = bPerp.norm();
  const Vec3 r1 = bPerp / nb;

  Vec3 g0 = gradRows.row(0).transpose();
  Vec3 g1 = gradRows.row(1).transpose();
  const Vec3 g2 = gradRows.row(2).transpose();
  // r2 = r0 x r1
  g0 += r1.cross(g2);
  g1 += g2.cross(r0);
  // r1 = bPerp / |bPerp|
  const Vec3 gPerp = (g1 - r1 * r1.dot(g1)) / nb;
  // bPerp = b - (r0 . b) r0
  const Vec3 gb = gPerp - r0 * r0.dot(gPerp);
  g0 -= r0.dot(gPerp) * b + s * gPerp;
  // r0 = a / |a|
  const Vec3 ga = (g0 - r0 * r0.dot(g0)) / na;
  return {ga.x(), ga.y(), ga.z(), gb.x(), gb.y(), gb.z()};
}

struct GaussianFrame {
  Mat3 jointRotation;
  Vec3 jointTranslation;
  Mat3 rotation; // orthonormalized rot6
  Vec3 inverseVariance;
  Vec3 mean;
  double amplitude;
};

std::vector<GaussianFrame> makeFrames(const GaussianBody& body, const Skeleton& skeleton, const PoseFrame& pose) {
  if (body.joints() != skeleton.jointCount() || static_cast<int>(pose.transforms.size()) != body.joints()) {
    throw InvalidInput("body, skeleton and pose joint counts differ");
  }
  std::vector<GaussianFrame> frames;
  frames.reserve(body.size());
  const auto gs = body.gaussians();
  for (std::size_t i = 0; i < gs.size(); ++i) {
    const Mat4& m = pose.transforms[body.jointOf(i)];
    gs[i].validate();
    frames.push_back(
        {m.topLeftCorner<3, 3>(),
         m.topRightCorner<3, 1>(),
         rotationFromRot6(gs[i].rot6),
         gs[i].sigma.cwiseProduct(gs[i].sigma).cwiseInverse(),
         gs[i].mean,
         gs[i].amplitude});
  }
  return frames;
}

// Gauss-Newton curvature per parameter group, in the optimizer's coordinates
// (mean, log sigma, rot6, log amplitude).
struct GroupCurvature {
  double mean = 0.0;
  double logSigma = 0.0;
  double rot = 0.0;
  double logAmplitude = 0.0;
};

struct DensityEvaluation {
  double loss = 0.0;
  Eigen::VectorXd gradient;
  std::vector<GroupCurvature> curvature;
};

DensityEvaluation evaluateDensity(
    const GaussianBody& body,
    const Skeleton& skeleton,
    const PoseFrame& pose,
    const VoxelField& field,
    std::span<const Vec3> points,
    bool withGradient) {
  if (points.empty()) {
    throw InvalidInput("density loss needs at least one query point");
  }
  const auto frames = makeFrames(body, skeleton, pose);
  const std::size_t n = frames.size();
  const double invCount = 1.0 / static_cast<double>(points.size());

  DensityEvaluation out;
  std::vector<Vec3> gradMean;
  std::vector<Vec3> gradSigma;
  std::vector<Mat3> gradRows;
  std::vector<double> gradAmplitude;
  if (withGradient) {
    gradMean.assign(n, Vec3::Zero());
    gradSigma.assign(n, Vec3::Zero());
    gradRows.assign(n, Mat3::Zero());
    gradAmplitude.assign(n, 0.0);
    out.curvature.assign(n, {});
  }

  std::vector<double> density(n);
  std::vector<Vec3> offset(n); // v = y - mean, in the joint frame
  std::vector<Vec3> axis(n); // u = R v

  for (const Vec3& x : points) {
    double model = 0.0;
    for (std::size_t g = 0; g < n; ++g) {
      const auto& f = frames[g];
      const Vec3 y = f.jointRotation.transpose() * (x - f.jointTranslation);
      offset[g] = y - f.mean;
      axis[g] = f.rotation * offset[g];
      density[g] = f.amplitude * std::exp(-0.5 * axis[g].cwiseProduct(axis[g]).dot(f.inverseVariance));
      model += density[g];
    }
    const double residual = model - field(x);
    out.loss += residual * residual;
    if (!withGradient) {
      continue;
    }
    const double coef = 2.0 * residual * invCount;
    for (std::size_t g = 0; g < n; ++g) {
      const double gd = density[g];
      if (gd == 0.0) {
        continue;
      }
      const auto& f = frames[g];
      const Vec3 scaledAxis = axis[g].cwiseProduct(f.inverseVariance);
      const Vec3 dMean = gd * (f.rotation.transpose() * scaledAxis);
      const Vec3 dLogSigma = gd * axis[g].cwiseProduct(scaledAxis);
      const Mat3 dRows = -gd * scaledAxis * offset[g].transpose();

      gradMean[g] += coef * dMean;
      gradSigma[g] += coef * dLogSigma; // converted from log sigma below
      gradRows[g] += coef * dRows;
      gradAmplitude[g] += coef * gd;

      auto& c = out.curvature[g];
      c.mean += 2.0 * invCount * dMean.squaredNorm() / 3.0;
      c.logSigma += 2.0 * invCount * dLogSigma.squaredNorm() / 3.0;
      c.rot += 2.0 * invCount * dRows.squaredNorm() / 6.0;
      c.logAmplitude += 2.0 * invCount * gd * gd;
    }
  }
  out.loss *= invCount;

  if (withGradient) {
    out.gradient = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n) * kP);
    const auto gs = body.gaussians();
    for (std::size_t g = 0; g < n; ++g) {
      const Eigen::Index o = static_cast<Eigen::Index>(g) * kP;
      out.gradient.segment<3>(o) = gradMean[g];
      // dG/dsigma_k = (dG/dlog sigma_k) / sigma_k
      out.gradient.segment<3>(o + 3) = gradSigma[g].cwiseQuotient(gs[g].sigma);
      const Rot6 gr = backpropRot6(gs[g].rot6, gradRows[g]);
      for (int i = 0; i < 6; ++i) {
        out.gradient[o + 6 + i] = gr[i];
      }
      // dG/dC = G / C; gradAmplitude accumulated G (the log-amplitude gradient).
      out.gradient[o + 12] = gs[g].amplitude > 0.0 ? gradAmplitude[g] / gs[g].amplitude : 0.0;
    }
  }
  return out;
}

// Bone center of joint j in its own frame, from the joint positions of pose.
Vec3 localBoneCenter(const Skeleton& skeleton, const PoseFrame& pose, int j) {
  const Mat4& m = pose.transforms[j];
  const int child = skeleton.firstChild(j);
  const Vec3 world = child < 0
      ? Vec3(m.topRightCorner<3, 1>())
      : Vec3(0.5 * (m.topRightCorner<3, 1>() + pose.transforms[child].topRightCorner<3, 1>()));
  return m.topLeftCorner<3, 3>().transpose() * (world - m.topRightCorner<3, 1>());
}

} // namespace

double lossDensity(
    const GaussianBody& body,
    const Skeleton& skeleton,
    const PoseFrame& pose,
    const VoxelField& field,
    std::span<const Vec3> points) {
  return evaluateDensity(body, skeleton, pose, field, points, false).loss;
}

LossAndGradient lossDensityWithGradient(
    const GaussianBody& body,
    const Skeleton& skeleton,
    const PoseFrame& pose,
    const VoxelField& field,
    std::span<const Vec3> points) {
  auto eval = evaluateDensity(body, skeleton, pose, field, points, true);
  return {eval.loss, std::move(eval.gradient)};
}

LossAndGradient regularizerWithGradient(
    const GaussianBody& body,
    const Skeleton& skeleton,
    const PoseFrame& pose,
    double wSigma,
    double wMean) {
  if (body.joints() != skeleton.jointCount() || static_cast<int>(pose.transforms.size()) != body.joints()) {
    throw InvalidInput("body, skeleton and pose joint counts differ");
  }
  LossAndGradient out;
  out.gradient = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(body.size()) * kP);
  const double perGaussian = 1.0 / static_cast<double>(body.size());
  std::vector<Vec3> centers(body.joints());
  for (int j = 0; j < body.joints(); ++j) {
    centers[j] = localBoneCenter(skeleton, pose, j);
  }
  const auto gs = body.gaussians();
  for (std::size_t g = 0; g < gs.size(); ++g) {
    const Eigen::Index o = static_cast<Eigen::Index>(g) * kP;
    if (wSigma != 0.0) {
      for (int k = 0; k < 3; ++k) {
        out.loss += wSigma * perGaussian * lossSigma(gs[g].sigma[k]);
        out.gradient[o + 3 + k] += wSigma * perGaussian * lossSigmaDerivative(gs[g].sigma[k]);
      }
    }
    if (wMean != 0.0) {
      const Vec3& b = centers[body.jointOf(g)];
      out.loss += wMean * perGaussian * lossMean(gs[g].mean, b);
      out.gradient.segment<3>(o) += wMean * perGaussian * lossMeanGradient(gs[g].mean, b);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Query points

std::vector<Vec3> sampleQueryPoints(
    const VoxelField& field,
    std::span<const AnisoGaussian> worldGaussians,
    int n,
    std::uint64_t seed) {
  if (n < 1) {
    throw InvalidInput(fmt::format("need at least one query point, got {}", n));
  }
  SplitMix64 gen(seed);
  const Vec3 extent = field.boxMax() - field.boxMin();
  auto uniformPoint = [&] {
    return Vec3(field.boxMin() + Vec3(uniform01(gen), uniform01(gen), uniform01(gen)).cwiseProduct(extent));
  };

  std::vector<Mat3> rotations;
  for (const auto& g : worldGaussians) {
    rotations.push_back(rotationFromRot6(g.rot6));
  }

  std::vector<Vec3> points;
  points.reserve(n);
  const int nearCount = worldGaussians.empty() ? 0 : n / 2;
  for (int i = 0; i < n - nearCount; ++i) {
    points.push_back(uniformPoint());
  }
  constexpr int kMaxAttempts = 64;
  for (int i = 0; i < nearCount; ++i) {
    Vec3 x;
    bool found = false;
    for (int attempt = 0; attempt < kMaxAttempts && !found; ++attempt) {
      const auto g = std::min<std::size_t>(
          static_cast<std::size_t>(uniform01(gen) * worldGaussians.size()), worldGaussians.size() - 1);
      Vec3 z(standardNormal(gen), standardNormal(gen), standardNormal(gen));
      if (z.norm() > 3.0) {
        continue;
      }
      x = worldGaussians[g].mean + rotations[g].transpose() * worldGaussians[g].sigma.cwiseProduct(z);
      found = field.contains(x);
    }
    points.push_back(found ? x : uniformPoint());
  }
  return points;
}

// ---------------------------------------------------------------------------
// Optimizer

void FitConfig::validate() const {
  if (iterations < 1 || batchSize < 1 || validationPoints < 1) {
    throw InvalidParameter("fit needs iterations, batch size and validation points >= 1");
  }
  if (!(stepSize > 0.0) || !(finalStepFraction > 0.0)) {
    throw InvalidParameter("fit step size must be positive");
  }
  if (wDensity < 0.0 || wSigma < 0.0 || wMean < 0.0) {
    throw InvalidParameter("loss weights must be non-negative");
  }
}

namespace {

// Damping added to each group's curvature, relative to the group's mean
// curvature across the body.
constexpr double kRelativeDamping = 1e-3;
constexpr double kAbsoluteDamping = 1e-12;

// Trust-region caps per step.
constexpr double kMaxMeanStepSigmas = 0.5;
constexpr double kMaxLogStep = 0.25;
constexpr double kMaxRotStep = 0.25;

constexpr double kMinAmplitude = 1e-12;
constexpr int kValidationInterval = 50;

struct Weights {
  double density;
  double sigma;
  double mean;
};

double totalLoss(
    const GaussianBody& body,
    const Skeleton& skeleton,
    const PoseFrame& pose,
    const VoxelField& field,
    std::span<const Vec3> points,
    const Weights& w) {
  double loss = w.density * lossDensity(body, skeleton, pose, field, points);
  if (w.sigma != 0.0 || w.mean != 0.0) {
    loss += regularizerWithGradient(body, skeleton, pose, w.sigma, w.mean).loss;
  }
  return loss;
}

double clampNorm(Eigen::Ref<Eigen::VectorXd> step, double maxNorm) {
  const double norm = step.norm();
  if (norm > maxNorm) {
    step *= maxNorm / norm;
  }
  return norm;
}

} // namespace

FitResult fit(
    const GaussianBody& initial,
    const Skeleton& skeleton,
    const PoseFrame& pose,
    const VoxelField& field,
    const FitConfig& cfg) {
  cfg.validate();
  initial.validate();

  GaussianBody body = initial;
  for (auto& g : body.gaussians()) {
    g.rot6 = rot6FromRotation(rotationFromRot6(g.rot6));
    g.amplitude = std::max(g.amplitude, kMinAmplitude);
  }

  auto weightsAt = [&](int iteration) {
    return Weights{
        cfg.wDensity * cfg.densitySchedule.at(iteration),
        cfg.wSigma * cfg.sigmaSchedule.at(iteration),
        cfg.wMean * cfg.meanSchedule.at(iteration)};
  };
  const Weights finalWeights = weightsAt(cfg.iterations);

  const auto validation = sampleQueryPoints(
      field, poseGaussians(body, skeleton, pose), cfg.validationPoints, mixSeed(cfg.seed, 0xfeedULL));
  const double initialLoss = totalLoss(body, skeleton, pose, field, validation, finalWeights);

  FitResult result;
  result.initialLoss = initialLoss;
  result.lossTrace.reserve(cfg.iterations);
  GaussianBody best = body;
  double bestLoss = initialLoss;

  const std::size_t n = body.size();
  for (int it = 0; it < cfg.iterations; ++it) {
    const Weights w = weightsAt(it);
    const auto points = sampleQueryPoints(
        field, poseGaussians(body, skeleton, pose), cfg.batchSize, mixSeed(cfg.seed, static_cast<std::uint64_t>(it) + 1));
    auto eval = evaluateDensity(body, skeleton, pose, field, points, true);
    const auto reg = regularizerWithGradient(body, skeleton, pose, w.sigma, w.mean);
    const double loss = w.density * eval.loss + reg.loss;
    const Eigen::VectorXd grad = w.density * eval.gradient + reg.gradient;
    if (!std::isfinite(loss) || !grad.allFinite()) {
      throw OptimizationFailure(fmt::format("density fit diverged at iteration {}", it), static_cast<std::size_t>(it));
    }
    result.lossTrace.push_back(loss);

    GroupCurvature meanCurv;
    for (const auto& c : eval.curvature) {
      meanCurv.mean += c.mean / n;
      meanCurv.logSigma += c.logSigma / n;
      meanCurv.rot += c.rot / n;
      meanCurv.logAmplitude += c.logAmplitude / n;
    }
    const double progress = static_cast<double>(it) / cfg.iterations;
    const double step = cfg.stepSize * (1.0 - (1.0 - cfg.finalStepFraction) * progress);

    auto gs = body.gaussians();
    for (std::size_t g = 0; g < n; ++g) {
      const Eigen::Index o = static_cast<Eigen::Index>(g) * kP;
      const auto& c = eval.curvature[g];
      auto& gauss = gs[g];
      auto precondition = [&](double curvature, double groupMean) {
        return step / (w.density * curvature + kRelativeDamping * w.density * groupMean + kAbsoluteDamping);
      };

      Eigen::VectorXd dMean = -precondition(c.mean, meanCurv.mean) * grad.segment<3>(o);
      clampNorm(dMean, kMaxMeanStepSigmas * gauss.sigma.maxCoeff());

      // Chain to log space: d/dlog(s) = s * d/ds.
      Eigen::VectorXd dLogSigma =
          -precondition(c.logSigma, meanCurv.logSigma) * grad.segment<3>(o + 3).cwiseProduct(gauss.sigma);
      dLogSigma = dLogSigma.cwiseMax(-kMaxLogStep).cwiseMin(kMaxLogStep);

      Eigen::VectorXd dRot = -precondition(c.rot, meanCurv.rot) * grad.segment<6>(o + 6);
      clampNorm(dRot, kMaxRotStep);

      const double dLogAmp = std::clamp(
          -precondition(c.logAmplitude, meanCurv.logAmplitude) * grad[o + 12] * gauss.amplitude, -kMaxLogStep, kMaxLogStep);

      gauss.mean += dMean;
      gauss.sigma = gauss.sigma.cwiseProduct(dLogSigma.array().exp().matrix());
      for (int i = 0; i < 6; ++i) {
        gauss.rot6[i] += dRot[i];
      }
      gauss.rot6 = rot6FromRotation(rotationFromRot6(gauss.rot6));
      gauss.amplitude = std::max(gauss.amplitude * std::exp(dLogAmp), kMinAmplitude);
    }

    if ((it + 1) % kValidationInterval == 0 || it + 1 == cfg.iterations) {
      const double validationLoss = totalLoss(body, skeleton, pose, field, validation, finalWeights);
      if (!std::isfinite(validationLoss)) {
        throw OptimizationFailure(fmt::format("density fit diverged at iteration {}", it), static_cast<std::size_t>(it));
      }
      if (validationLoss <= bestLoss) {
        bestLoss = validationLoss;
        best = body;
      }
    }
  }

  result.body = std::move(best);
  result.finalLoss = bestLoss;
  return result;
}

GaussianBody initializeBody(
    const Skeleton& skeleton,
    const PoseFrame& pose,
    int perJoint,
    double sigma,
    double amplitude) {
  skeleton.validate();
  pose.validate(skeleton.jointCount());
  if (perJoint < 1 || !(sigma > 0.0) || !(amplitude >= 0.0)) {
    throw InvalidParameter("initializeBody needs perJoint >= 1, sigma > 0, amplitude >= 0");
  }
  const int joints = skeleton.jointCount();
  auto position = [&](int j) { return Vec3(pose.transforms[j].topRightCorner<3, 1>()); };

  GaussianBody body(joints, perJoint);
  for (int j = 0; j < joints; ++j) {
    const Vec3 start = position(j);
    const int child = skeleton.firstChild(j);
    const int parent = skeleton.parents[j];
    Vec3 end;
    if (child >= 0) {
      end = position(child);
    } else if (parent >= 0) {
      end = start + 0.5 * (start - position(parent));
    } else {
      end = start + Vec3(0.0, 0.1, 0.0);
    }
    const Mat4& m = pose.transforms[j];
    for (int k = 0; k < perJoint; ++k) {
      const Vec3 world = start + (k + 0.5) / perJoint * (end - start);
      auto& g = body.at(j, k);
      g.mean = m.topLeftCorner<3, 3>().transpose() * (world - m.topRightCorner<3, 1>());
      g.sigma = Vec3::Constant(sigma);
      g.rot6 = kIdentityRot6;
      g.amplitude = amplitude;
    }
  }
  return body;
}

} // namespace gsc
