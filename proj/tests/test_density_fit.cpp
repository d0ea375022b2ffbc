#include "gsc/density_fit.h"
#include "gsc/errors.h"
#include "gsc/oracle.h"

#include "test_helpers.h"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <tuple>

using namespace gsc;

namespace {

Skeleton singleJoint() {
  Skeleton s;
  s.parents = {-1};
  s.restJoints = {Vec3::Zero()};
  return s;
}

Skeleton chain(int joints) {
  Skeleton s;
  for (int j = 0; j < joints; ++j) {
    s.parents.push_back(j - 1);
    s.restJoints.push_back(Vec3(0, 0.3 * j, 0));
  }
  return s;
}

PoseFrame randomPose(SplitMix64& gen, int joints) {
  PoseFrame pose;
  for (int j = 0; j < joints; ++j) {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = test::randomRotation(gen);
    m.topRightCorner<3, 1>() = Vec3(test::uniform(gen, -0.3, 0.3), test::uniform(gen, -0.3, 0.3), test::uniform(gen, -0.3, 0.3));
    pose.transforms.push_back(m);
  }
  return pose;
}

AnisoGaussian gaussianAt(const Vec3& mean, const Vec3& sigma, const Mat3& rot, double amplitude) {
  return {mean, sigma, rot6FromRotation(rot), amplitude};
}

double maxRelativeError(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
  return (analytic - numeric).lpNorm<Eigen::Infinity>() / std::max(numeric.lpNorm<Eigen::Infinity>(), 1e-12);
}

// Mean over all grid nodes of (G - D)^2, the metric for fit quality.
double nodeMse(const GaussianBody& body, const Skeleton& skeleton, const PoseFrame& pose, const VoxelField& field) {
  const auto world = poseGaussians(body, skeleton, pose);
  const auto& res = field.resolution();
  double sum = 0.0;
  std::size_t idx = 0;
  for (int z = 0; z < res[2]; ++z) {
    for (int y = 0; y < res[1]; ++y) {
      for (int x = 0; x < res[0]; ++x, ++idx) {
        const Vec3 p = field.nodePosition(x, y, z);
        double g = 0.0;
        for (const auto& w : world) {
          g += densityAt(w, p);
        }
        const double r = g - field.values()[idx];
        sum += r * r;
      }
    }
  }
  return sum / static_cast<double>(idx);
}

} // namespace

TEST_CASE("VoxelField interpolation and bounds") {
  const auto field = VoxelField::sample({3, 4, 5}, Vec3(-1, -1, -1), Vec3(1, 2, 3), [](const Vec3& x) {
    return 3.0 + x.x() + 0.5 * x.y() - 0.25 * x.z();
  });
  CHECK(field.nodePosition(2, 3, 4).isApprox(Vec3(1, 2, 3)));
  // A trilinear field reproduces an affine function exactly.
  SplitMix64 gen(5);
  for (int i = 0; i < 100; ++i) {
    const Vec3 x(test::uniform(gen, -1, 1), test::uniform(gen, -1, 2), test::uniform(gen, -1, 3));
    CHECK(field(x) == doctest::Approx(3.0 + x.x() + 0.5 * x.y() - 0.25 * x.z()).epsilon(1e-6));
  }
  CHECK(field(Vec3(1, 2, 3)) == doctest::Approx(3.0 + 1.0 + 1.0 - 0.75).epsilon(1e-6));
  CHECK(field(Vec3(1.01, 0, 0)) == 0.0);

  CHECK_THROWS_AS(VoxelField({1, 2, 2}, Vec3::Zero(), Vec3::Ones(), std::vector<float>(4)), InvalidInput);
  CHECK_THROWS_AS(VoxelField({2, 2, 2}, Vec3::Zero(), Vec3(1, 0, 1), std::vector<float>(8)), InvalidInput);
  CHECK_THROWS_AS(VoxelField({2, 2, 2}, Vec3::Zero(), Vec3::Ones(), std::vector<float>(7)), InvalidInput);
  std::vector<float> negative(8, 1.0f);
  negative[3] = -1.0f;
  CHECK_THROWS_AS(VoxelField({2, 2, 2}, Vec3::Zero(), Vec3::Ones(), negative), InvalidInput);
}

TEST_CASE("VoxelField file round trip") {
  const auto field = VoxelField::sample({4, 3, 2}, Vec3(-0.5, -1, 0), Vec3(0.5, 1, 2), [](const Vec3& x) {
    return x.squaredNorm();
  });
  const auto path = std::filesystem::temp_directory_path() / "gsc_voxel_roundtrip.bin";
  writeVoxelField(field, path);
  CHECK(std::filesystem::file_size(path) == 3 * 4 + 6 * 4 + 24 * 4);
  const auto back = readVoxelField(path);
  CHECK(back.resolution() == field.resolution());
  CHECK(back.boxMin() == field.boxMin());
  CHECK(back.boxMax() == field.boxMax());
  CHECK(std::equal(back.values().begin(), back.values().end(), field.values().begin()));

  std::filesystem::resize_file(path, 40);
  CHECK_THROWS_AS(readVoxelField(path), IoError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(readVoxelField(path), IoError);
}

TEST_CASE("lossSigma examples and continuity") {
  CHECK(lossSigma(0.02) == 0.001);
  CHECK(100.0 * std::pow(0.02 - 0.02, 4) + 0.001 == 0.001);
  CHECK(lossSigma(0.01) == doctest::Approx(0.002).epsilon(1e-14));
  CHECK(lossSigma(0.12) == doctest::Approx(0.011).epsilon(1e-12));
  CHECK_THROWS_AS(lossSigma(0.0), InvalidParameter);
  CHECK_THROWS_AS(lossSigma(-1.0), InvalidParameter);
  CHECK_THROWS_AS(lossSigmaDerivative(0.0), InvalidParameter);
}

TEST_CASE("lossMean examples") {
  CHECK(lossMean(Vec3(0.3, -0.2, 1.0), Vec3(0.3, -0.2, 1.0)) == 0.0);
  CHECK(lossMean(Vec3(0.1, 0, 0), Vec3::Zero()) == doctest::Approx(std::pow(1.01, 0.25) - 1.0).epsilon(1e-14));
  CHECK(lossMean(Vec3(0.1, 0, 0), Vec3::Zero()) == doctest::Approx(0.002491).epsilon(1e-3));
  CHECK(lossMean(Vec3(1, 0, 0), Vec3::Zero()) == doctest::Approx(2.1702).epsilon(1e-4));
  CHECK(lossMean(Vec3(0.1, 0.1, 0.1), Vec3::Zero()) == doctest::Approx(3.0 * (std::pow(1.01, 0.25) - 1.0)));
  // Even in each component.
  CHECK(lossMean(Vec3(-0.3, 0.2, -0.1), Vec3::Zero()) == lossMean(Vec3(0.3, -0.2, 0.1), Vec3::Zero()));
  CHECK(lossMean(Vec3(1e-3, 0, 0), Vec3::Zero()) > 0.0);
}

TEST_CASE("lossDensity examples") {
  const Skeleton s = singleJoint();
  const PoseFrame pose = restPose(s);
  const auto ones = VoxelField::sample({3, 3, 3}, Vec3::Constant(-1), Vec3::Constant(1), [](const Vec3&) { return 1.0; });
  GaussianBody zero(1, 2);
  for (auto& g : zero.gaussians()) {
    g.amplitude = 0.0;
  }
  const std::vector<Vec3> pts = {Vec3::Zero(), Vec3(0.5, 0.1, -0.3), Vec3(-0.9, 0.9, 0.2)};
  CHECK(lossDensity(zero, s, pose, ones, pts) == 1.0);
  CHECK_THROWS_AS(lossDensity(zero, s, pose, ones, std::vector<Vec3>{}), InvalidInput);

  // A field sampled from a body that has a trilinear-exact density: a single
  // Gaussian evaluated only at grid nodes.
  GaussianBody body(1, 1);
  body.at(0, 0) = gaussianAt(Vec3(0.1, 0, 0), Vec3(0.3, 0.2, 0.4), Mat3::Identity(), 2.0);
  const auto field = VoxelField::sample(
      {5, 5, 5}, Vec3::Constant(-1), Vec3::Constant(1), [&](const Vec3& x) { return densityAt(body.at(0, 0), x); });
  std::vector<Vec3> nodes;
  for (int i = 0; i < 5; ++i) {
    nodes.push_back(field.nodePosition(i, (i * 3) % 5, (i * 2) % 5));
  }
  CHECK(lossDensity(body, s, pose, field, nodes) < 1e-12);

  // Random case against a direct recomputation.
  SplitMix64 gen(17);
  const Skeleton c = chain(2);
  const PoseFrame p = randomPose(gen, 2);
  GaussianBody rb(2, 2);
  for (auto& g : rb.gaussians()) {
    g = test::randomGaussian(gen);
    g.mean *= 0.3;
  }
  std::vector<Vec3> rpts;
  for (int i = 0; i < 20; ++i) {
    rpts.push_back(Vec3(test::uniform(gen, -1, 1), test::uniform(gen, -1, 1), test::uniform(gen, -1, 1)));
  }
  double expected = 0.0;
  for (const auto& x : rpts) {
    double g = 0.0;
    for (std::size_t i = 0; i < rb.size(); ++i) {
      const Mat4& m = p.transforms[rb.jointOf(i)];
      const Vec3 local = m.topLeftCorner<3, 3>().transpose() * (x - m.topRightCorner<3, 1>());
      g += test::denseDensity(rb.gaussians()[i], local);
    }
    expected += (g - ones(x)) * (g - ones(x));
  }
  expected /= rpts.size();
  CHECK(lossDensity(rb, c, p, ones, rpts) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("analytic density gradient matches finite differences") {
  SplitMix64 gen(101);
  const Skeleton s = chain(2);
  const auto field = VoxelField::sample({9, 9, 9}, Vec3::Constant(-1), Vec3::Constant(1), [](const Vec3& x) {
    return 3.0 * std::exp(-4.0 * x.squaredNorm()) + 0.2 * (x.x() + 1.0);
  });
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const PoseFrame pose = randomPose(gen, 2);
    GaussianBody body(2, 2);
    for (auto& g : body.gaussians()) {
      g = test::randomGaussian(gen);
      g.mean *= 0.4;
      g.amplitude = test::uniform(gen, 0.2, 3.0);
    }
    std::vector<Vec3> pts;
    for (int i = 0; i < 16; ++i) {
      pts.push_back(Vec3(test::uniform(gen, -1, 1), test::uniform(gen, -1, 1), test::uniform(gen, -1, 1)));
    }
    const auto analytic = lossDensityWithGradient(body, s, pose, field, pts);
    CHECK(analytic.loss == doctest::Approx(lossDensity(body, s, pose, field, pts)).epsilon(1e-14));
    const auto numeric = oracle::fdGradient(
        [&](const Eigen::VectorXd& v) { return lossDensity(unpackParameters(v, 2, 2), s, pose, field, pts); },
        packParameters(body),
        1e-5);
    worst = std::max(worst, maxRelativeError(analytic.gradient, numeric));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("regularizer gradients match finite differences") {
  SplitMix64 gen(202);
  const Skeleton s = chain(3);
  double worstSigma = 0.0;
  double worstMean = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const PoseFrame pose = randomPose(gen, 3);
    GaussianBody body(3, 2);
    for (auto& g : body.gaussians()) {
      g = test::randomGaussian(gen);
      // Straddle the sigma knee.
      g.sigma = Vec3(test::uniform(gen, 0.005, 0.3), test::uniform(gen, 0.005, 0.3), test::uniform(gen, 0.005, 0.3));
    }
    const auto params = packParameters(body);
    for (const auto& [ws, wm, worst] :
         {std::tuple{1.0, 0.0, &worstSigma}, std::tuple{0.0, 1.0, &worstMean}}) {
      const auto analytic = regularizerWithGradient(body, s, pose, ws, wm);
      const auto numeric = oracle::fdGradient(
          [&](const Eigen::VectorXd& v) { return regularizerWithGradient(unpackParameters(v, 3, 2), s, pose, ws, wm).loss; },
          params,
          1e-5);
      *worst = std::max(*worst, maxRelativeError(analytic.gradient, numeric));
    }
  }
  CHECK(worstSigma <= 1e-4);
  CHECK(worstMean <= 1e-4);

  // Scalar derivatives on both sides of the knee.
  for (double sigma : {0.004, 0.0199, 0.0201, 0.05, 0.3}) {
    const double h = 1e-7;
    const double fd = (lossSigma(sigma + h) - lossSigma(sigma - h)) / (2 * h);
    CHECK(lossSigmaDerivative(sigma) == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("regularizer uses bone centers in the joint frame") {
  const Skeleton s = chain(2);
  SplitMix64 gen(3);
  const PoseFrame pose = randomPose(gen, 2);
  const Mat4& m0 = pose.transforms[0];
  const Vec3 worldCenter = 0.5 * (m0.topRightCorner<3, 1>() + pose.transforms[1].topRightCorner<3, 1>());
  GaussianBody body(2, 1);
  body.at(0, 0).mean = m0.topLeftCorner<3, 3>().transpose() * (worldCenter - m0.topRightCorner<3, 1>());
  body.at(1, 0).mean = Vec3::Zero(); // leaf: the joint itself
  const auto reg = regularizerWithGradient(body, s, pose, 0.0, 1.0);
  CHECK(reg.loss == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
}

TEST_CASE("sampleQueryPoints") {
  const auto field = VoxelField::sample({4, 4, 4}, Vec3::Constant(-1), Vec3::Constant(1), [](const Vec3&) { return 0.0; });
  SplitMix64 gen(9);
  std::vector<AnisoGaussian> world = {
      gaussianAt(Vec3(0.3, 0.2, 0.0), Vec3(0.05, 0.1, 0.02), Mat3::Identity(), 1.0),
      gaussianAt(Vec3(-0.4, -0.1, 0.5), Vec3(0.08, 0.03, 0.06), test::randomRotation(gen), 1.0),
      gaussianAt(Vec3(0.0, 0.7, -0.6), Vec3(0.04, 0.04, 0.04), Mat3::Identity(), 1.0),
  };
  CHECK_THROWS_AS(sampleQueryPoints(field, world, 0, 1), InvalidInput);

  const auto a = sampleQueryPoints(field, world, 5000, 42);
  const auto b = sampleQueryPoints(field, world, 5000, 42);
  const auto c = sampleQueryPoints(field, world, 5000, 43);
  CHECK(a.size() == 5000);
  CHECK(a == b);
  CHECK(a != c);

  int inside = 0;
  for (const auto& x : a) {
    CHECK(field.contains(x));
    for (const auto& g : world) {
      const Vec3 d = x - g.mean;
      if (d.dot(precisionMatrix(g) * d) <= 9.0) {
        ++inside;
        break;
      }
    }
  }
  CHECK(inside >= 0.4 * a.size());

  // No Gaussians: all uniform.
  CHECK(sampleQueryPoints(field, {}, 10, 1).size() == 10);
}

TEST_CASE("initializeBody places Gaussians along bones") {
  const Skeleton s = chain(3);
  SplitMix64 gen(8);
  const PoseFrame pose = randomPose(gen, 3);
  const auto body = initializeBody(s, pose, 4);
  CHECK(body.joints() == 3);
  CHECK(body.perJoint() == 4);
  const auto world = poseGaussians(body, s, pose);
  const Vec3 p0 = pose.transforms[0].topRightCorner<3, 1>();
  const Vec3 p1 = pose.transforms[1].topRightCorner<3, 1>();
  for (int k = 0; k < 4; ++k) {
    CHECK((world[k].mean - (p0 + (k + 0.5) / 4.0 * (p1 - p0))).norm() < 1e-12);
    CHECK(world[k].sigma == Vec3::Constant(0.05));
    CHECK(world[k].amplitude == 1.0);
  }
  // The leaf continues past its joint.
  const Vec3 p2 = pose.transforms[2].topRightCorner<3, 1>();
  const Vec3 leafEnd = p2 + 0.5 * (p2 - p1);
  CHECK((world[8].mean - (p2 + 0.125 * (leafEnd - p2))).norm() < 1e-12);

  CHECK_THROWS_AS(initializeBody(s, pose, 0), InvalidParameter);
  CHECK_THROWS_AS(initializeBody(s, pose, 2, -0.1), InvalidParameter);
  CHECK(initializeBody(singleJoint(), restPose(singleJoint()), 2).size() == 2);
}

TEST_CASE("FitConfig validation") {
  FitConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.iterations = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidParameter);
  cfg = {};
  cfg.batchSize = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidParameter);
  cfg = {};
  cfg.stepSize = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidParameter);
  cfg = {};
  cfg.wMean = -1.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidParameter);
}

TEST_CASE("fit recovers a perturbed single Gaussian") {
  const Skeleton s = singleJoint();
  const PoseFrame pose = restPose(s);
  const Mat3 rot = Eigen::AngleAxisd(0.4, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  const AnisoGaussian truth = gaussianAt(Vec3(0.02, -0.05, 0.04), Vec3(0.12, 0.08, 0.1), rot, 1.5);
  const auto field = VoxelField::sample(
      {64, 64, 64}, Vec3::Constant(-0.5), Vec3::Constant(0.5), [&](const Vec3& x) { return densityAt(truth, x); });

  GaussianBody body(1, 1);
  body.at(0, 0) = truth;
  body.at(0, 0).mean += Vec3(0.05, 0.0, 0.0);
  body.at(0, 0).sigma *= 1.5;

  FitConfig cfg;
  cfg.iterations = 1500;
  cfg.batchSize = 2048;
  cfg.seed = 7;
  const auto result = fit(body, s, pose, field, cfg);
  const auto& g = result.body.at(0, 0);
  CHECK((g.mean - truth.mean).norm() < 1e-3);
  CHECK((g.sigma - truth.sigma).lpNorm<Eigen::Infinity>() < 5e-3);
  CHECK(result.finalLoss <= result.initialLoss);
  CHECK(result.lossTrace.size() == 1500);

  // Exponential moving average of the loss trend does not rise.
  double ema = result.lossTrace.front();
  double firstEma = ema;
  const double alpha = 2.0 / 51.0;
  for (double l : result.lossTrace) {
    ema = alpha * l + (1.0 - alpha) * ema;
  }
  CHECK(ema <= firstEma);
}

TEST_CASE("fit recovers two blobs and is deterministic") {
  const Skeleton s = singleJoint();
  const PoseFrame pose = restPose(s);
  const Mat3 rotA = Eigen::AngleAxisd(0.7, Vec3(0, 0, 1)).toRotationMatrix();
  const Mat3 rotB = Eigen::AngleAxisd(-0.5, Vec3(1, 1, 0).normalized()).toRotationMatrix();
  const AnisoGaussian a = gaussianAt(Vec3(-0.18, 0.05, 0.0), Vec3(0.09, 0.05, 0.06), rotA, 1.0);
  const AnisoGaussian b = gaussianAt(Vec3(0.2, -0.05, 0.05), Vec3(0.06, 0.1, 0.07), rotB, 0.8);
  const auto field = VoxelField::sample({64, 64, 64}, Vec3::Constant(-0.5), Vec3::Constant(0.5), [&](const Vec3& x) {
    return densityAt(a, x) + densityAt(b, x);
  });

  GaussianBody body(1, 2);
  body.at(0, 0) = gaussianAt(Vec3(-0.1, 0.0, 0.0), Vec3::Constant(0.05), Mat3::Identity(), 1.0);
  body.at(0, 1) = gaussianAt(Vec3(0.1, 0.0, 0.0), Vec3::Constant(0.05), Mat3::Identity(), 1.0);

  FitConfig cfg;
  cfg.iterations = 2000;
  cfg.batchSize = 2048;
  cfg.seed = 11;
  const auto r1 = fit(body, s, pose, field, cfg);
  CHECK(nodeMse(r1.body, s, pose, field) < 0.01 * field.meanSquared());
  CHECK(r1.finalLoss <= r1.initialLoss);

  cfg.iterations = 200;
  const auto r2 = fit(body, s, pose, field, cfg);
  const auto r3 = fit(body, s, pose, field, cfg);
  CHECK(r2.lossTrace == r3.lossTrace);
  CHECK(r2.body == r3.body);
}

TEST_CASE("fit leaves an exact initialization in place") {
  const Skeleton s = singleJoint();
  const PoseFrame pose = restPose(s);
  const AnisoGaussian truth = gaussianAt(Vec3(0.0, 0.03, -0.02), Vec3(0.1, 0.07, 0.09), Mat3::Identity(), 1.0);
  const auto field = VoxelField::sample(
      {64, 64, 64}, Vec3::Constant(-0.5), Vec3::Constant(0.5), [&](const Vec3& x) { return densityAt(truth, x); });
  GaussianBody body(1, 1);
  body.at(0, 0) = truth;
  FitConfig cfg;
  cfg.iterations = 200;
  cfg.batchSize = 2048;
  const auto result = fit(body, s, pose, field, cfg);
  const auto& g = result.body.at(0, 0);
  CHECK((g.mean - truth.mean).norm() < 2e-3);
  CHECK((g.sigma - truth.sigma).lpNorm<Eigen::Infinity>() < 2e-3);
  CHECK(g.amplitude == doctest::Approx(1.0).epsilon(0.02));
  CHECK(result.finalLoss <= result.initialLoss);
}

TEST_CASE("fit reports divergence") {
  const Skeleton s = singleJoint();
  const PoseFrame pose = restPose(s);
  const auto field = VoxelField::sample({4, 4, 4}, Vec3::Constant(-1), Vec3::Constant(1), [](const Vec3&) { return 0.0; });
  GaussianBody body(1, 1);
  body.at(0, 0).sigma = Vec3::Constant(0.5);
  body.at(0, 0).amplitude = 1e200; // squared residual overflows
  FitConfig cfg;
  cfg.iterations = 5;
  cfg.batchSize = 16;
  cfg.validationPoints = 16;
  try {
    fit(body, s, pose, field, cfg);
    FAIL("expected OptimizationFailure");
  } catch (const OptimizationFailure& e) {
    CHECK(e.iteration() == 0);
  }
}
