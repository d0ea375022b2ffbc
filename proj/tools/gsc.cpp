// Command-line front end: render, relight, fit, solve-light, bench, psnr,
// plus helpers to write the example scene and light-solver references.

#include "gsc/bench.h"
#include "gsc/density_fit.h"
#include "gsc/errors.h"
#include "gsc/example_scene.h"
#include "gsc/light_solver.h"
#include "gsc/references.h"
#include "gsc/scene.h"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>

using namespace gsc;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitFailure = 2;

struct FrameOptions {
  std::string scene;
  std::size_t frame = 0;
  std::optional<std::size_t> camera;
  std::string out;
};

void addFrameOptions(CLI::App* cmd, FrameOptions& o) {
  cmd->add_option("--scene", o.scene, "Scene JSON file")->required();
  cmd->add_option("--frame", o.frame, "Pose frame index")->capture_default_str();
  cmd->add_option("--camera", o.camera, "Camera index (default: frame mod camera count)");
  cmd->add_option("--out", o.out, "Output image (.pfm or .png)")->required();
}

const Camera& pickCamera(const Scene& scene, const FrameOptions& o) {
  const std::size_t c = o.camera ? *o.camera : scene.cameraIndex(o.frame);
  if (c >= scene.cameras.size()) {
    throw UsageError(fmt::format("--camera {} out of range, scene has {} cameras", c, scene.cameras.size()));
  }
  if (o.frame >= scene.frameCount()) {
    throw UsageError(fmt::format("--frame {} out of range, scene has {} frames", o.frame, scene.frameCount()));
  }
  return scene.cameras[c];
}

struct RenderOptions {
  FrameOptions frame;
  std::string mode = "lit";
  double bias = kDefaultShadowBias;
  bool noGround = false;
};

int runRender(const RenderOptions& o) {
  const RenderMode mode = parseRenderMode(o.mode);
  const Scene scene = loadScene(o.frame.scene);
  const Camera& camera = pickCamera(scene, o.frame);
  const GBuffer gb = scene.gbuffer(o.frame.frame, camera);
  const auto gaussians = prepare(scene.posedGaussians(o.frame.frame));
  std::optional<GroundPlane> ground;
  if (scene.ground && !o.noGround) {
    ground = scene.groundPlane(camera);
  }
  FrameInputs in;
  in.camera = &camera;
  in.gbuffer = &gb;
  in.gaussians = gaussians;
  in.light = scene.light ? scene.light->directional() : DirectionalLight{};
  in.ground = ground ? &*ground : nullptr;
  in.shadow.bias = o.bias;
  ShadowDiagnostics diag;
  writeImage(renderFrame(in, mode, &diag), o.frame.out);
  if (diag.invalidPixels > 0) {
    std::cerr << fmt::format("warning: {} foreground pixels had unusable depth or normal\n", diag.invalidPixels);
  }
  std::cout << fmt::format("wrote {} ({} mode, frame {})\n", o.frame.out, renderModeName(mode), o.frame.frame);
  return 0;
}

struct RelightOptions {
  FrameOptions frame;
  int rays = 64;
  std::uint64_t seed = 0;
  std::string env;
};

int runRelight(const RelightOptions& o) {
  if (o.rays < 1) {
    throw UsageError("--rays must be at least 1");
  }
  Scene scene = loadScene(o.frame.scene);
  if (!o.env.empty()) {
    scene.envMap = std::filesystem::absolute(o.env).string();
  }
  if (scene.envMap.empty()) {
    throw UsageError("scene has no env_map; pass --env");
  }
  const Camera& camera = pickCamera(scene, o.frame);
  const GBuffer gb = scene.gbuffer(o.frame.frame, camera);
  const auto gaussians = prepare(scene.posedGaussians(o.frame.frame));
  writeImage(relightHdri(gb, camera, gaussians, scene.environment(), o.rays, o.seed), o.frame.out);
  std::cout << fmt::format("wrote {} ({} rays per pixel, seed {})\n", o.frame.out, o.rays, o.seed);
  return 0;
}

struct FitOptions {
  std::string scene;
  std::string voxels;
  std::size_t frame = 0;
  int perJoint = 0;
  int iterations = 2000;
  int batch = 4096;
  double step = 0.5;
  double wSigma = 0.0;
  double wMean = 0.0;
  std::uint64_t seed = 0;
  std::string out;
};

int runFit(const FitOptions& o) {
  Scene scene = loadScene(o.scene);
  if (o.frame >= scene.frameCount()) {
    throw UsageError(fmt::format("--frame {} out of range, scene has {} frames", o.frame, scene.frameCount()));
  }
  const VoxelField field = readVoxelField(o.voxels);
  const int k = o.perJoint > 0 ? o.perJoint : scene.body.perJoint();
  const PoseFrame& pose = scene.poses[o.frame];
  FitConfig cfg;
  cfg.iterations = o.iterations;
  cfg.batchSize = o.batch;
  cfg.stepSize = o.step;
  cfg.wSigma = o.wSigma;
  cfg.wMean = o.wMean;
  cfg.seed = o.seed;
  const FitResult result = fit(initializeBody(scene.skeleton, pose, k), scene.skeleton, pose, field, cfg);

  if (k != scene.body.perJoint()) {
    scene.colors.assign(result.body.size(), Vec3::Constant(0.8));
  }
  scene.body = result.body;
  const std::filesystem::path out(o.out);
  // Keep sidecar paths valid from the new location.
  if (!scene.envMap.empty()) {
    scene.envMap = std::filesystem::absolute(scene.resolve(scene.envMap)).string();
  }
  if (scene.ground && !scene.ground->background.empty()) {
    scene.ground->background = std::filesystem::absolute(scene.resolve(scene.ground->background)).string();
  }
  for (auto& dir : scene.gbufferSource.frames) {
    dir = std::filesystem::absolute(scene.resolve(dir)).string();
  }
  saveScene(scene, out);
  std::cout << fmt::format(
      "fitted {} Gaussians ({} per joint) in {} iterations\n", result.body.size(), k, cfg.iterations);
  std::cout << fmt::format("validation loss: {:.6g} -> {:.6g}\n", result.initialLoss, result.finalLoss);
  std::cout << fmt::format("field mean squared density: {:.6g}\n", field.meanSquared());
  std::cout << fmt::format("wrote {}\n", o.out);
  return 0;
}

struct SolveOptions {
  std::string scene;
  std::string refs;
  int iterations = 400;
  int framesPerIteration = 2;
  std::uint64_t seed = 0;
  std::optional<double> azimuth;
  std::optional<double> elevation;
  std::vector<double> ambient = {0.3, 0.3, 0.3};
  bool antipodal = false;
  std::string out;
};

int runSolveLight(const SolveOptions& o) {
  const Scene scene = loadScene(o.scene);
  const Vec3 color = scene.light ? scene.light->color : Vec3::Constant(kDefaultLightMagnitude);
  const LightProblem problem(loadLightReferences(scene, o.refs), color);

  LightParams init{0.0, 0.5, Vec3(o.ambient[0], o.ambient[1], o.ambient[2])};
  if (o.antipodal) {
    if (!scene.light) {
      throw UsageError("--antipodal needs a scene light");
    }
    const LightParams truth{scene.light->azimuth, scene.light->elevation, scene.light->ambient};
    init.azimuth = truth.antipodal().azimuth;
    init.elevation = truth.antipodal().elevation;
  }
  if (o.azimuth) {
    init.azimuth = *o.azimuth;
  }
  if (o.elevation) {
    init.elevation = *o.elevation;
  }

  SolveConfig cfg;
  cfg.iterations = o.iterations;
  cfg.framesPerIteration = o.framesPerIteration;
  cfg.seed = o.seed;
  cfg.blendEnd = std::min(cfg.blendEnd, 0.1 * cfg.iterations);
  if (cfg.blendEnd <= cfg.blendStart) {
    cfg.blendEnd = cfg.blendStart + 1.0;
  }
  const SolveResult result = solveLight(problem, init, cfg);
  const LightParams& p = result.params;

  std::cout << fmt::format("azimuth: {:.6f}\n", p.azimuth);
  std::cout << fmt::format("elevation: {:.6f}\n", p.elevation);
  std::cout << fmt::format("ambient: {:.6f} {:.6f} {:.6f}\n", p.ambient[0], p.ambient[1], p.ambient[2]);
  std::cout << fmt::format("final_loss: {:.6g}\n", problem.loss(p, 1.0, cfg.wAmbient));
  if (scene.light) {
    const Vec3 truth = directionFromAngles(scene.light->azimuth, scene.light->elevation);
    std::cout << fmt::format("angular_error_deg: {:.4f}\n", angularErrorDegrees(p.direction(), truth));
    std::cout << fmt::format(
        "ambient_error: {:.6f}\n", (p.ambient - scene.light->ambient).cwiseAbs().maxCoeff());
  }

  if (!o.out.empty()) {
    const std::filesystem::path dir(o.out);
    std::filesystem::create_directories(dir);
    for (std::size_t f = 0; f < problem.frameCount(); ++f) {
      writePfm(problem.render(f, p), dir / fmt::format("solved_{:03}.pfm", f));
    }
    nlohmann::json light = {
        {"azimuth", p.azimuth},
        {"elevation", p.elevation},
        {"ambient", {p.ambient[0], p.ambient[1], p.ambient[2]}},
        {"loss_trace", result.lossTrace},
    };
    std::ofstream(dir / "light.json") << light.dump(2) << "\n";
  }
  return 0;
}

struct BenchOptions {
  std::string scene;
  std::size_t frame = 0;
  std::size_t rays = 1000000;
  std::vector<int> samples = {16, 64};
  std::uint64_t seed = 0;
  std::string csv;
};

int runBench(const BenchOptions& o) {
  const Scene scene = loadScene(o.scene);
  if (o.frame >= scene.frameCount()) {
    throw UsageError(fmt::format("--frame {} out of range, scene has {} frames", o.frame, scene.frameCount()));
  }
  for (int n : o.samples) {
    if (n < 2) {
      throw UsageError(fmt::format("--samples {} is below 2", n));
    }
  }
  const auto gaussians = scene.posedGaussians(o.frame);
  const auto rows = benchShadows(gaussians, {o.rays, o.samples, o.seed});
  std::cout << formatBenchTable(rows);
  if (o.csv.empty()) {
    std::cout << "\n";
    writeBenchCsv(rows, std::cout);
  } else {
    std::ofstream out(o.csv);
    writeBenchCsv(rows, out);
    if (!out) {
      throw IoError(fmt::format("cannot write {}", o.csv));
    }
  }
  return 0;
}

struct PsnrOptions {
  std::string a;
  std::string b;
  std::string mask;
  bool linear = false;
};

int runPsnr(const PsnrOptions& o) {
  Image a = readImage(o.a);
  Image b = readImage(o.b);
  if (!o.linear) {
    a = toDisplay(a);
    b = toDisplay(b);
  }
  std::optional<Image> mask;
  if (!o.mask.empty()) {
    mask = readImage(o.mask);
  }
  const double db = psnr(a, b, mask ? &*mask : nullptr);
  std::cout << (std::isinf(db) ? std::string("psnr_db: inf\n") : fmt::format("psnr_db: {:.4f}\n", db));
  return 0;
}

CLI::App* activeSubcommand(CLI::App& app) {
  for (CLI::App* sub : app.get_subcommands()) {
    return sub;
  }
  return &app;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Analytic Gaussian shadow casting: rendering, relighting, fitting and light recovery."};
  app.require_subcommand(1);

  RenderOptions render;
  CLI::App* renderCmd = app.add_subcommand("render", "Render one frame: lit, albedo, shadow, normal or depth");
  addFrameOptions(renderCmd, render.frame);
  renderCmd->add_option("--mode", render.mode, "lit | albedo | shadow | normal | depth")->capture_default_str();
  renderCmd->add_option("--bias", render.bias, "Shadow-ray offset along the normal")->capture_default_str();
  renderCmd->add_flag("--no-ground", render.noGround, "Ignore the scene's ground plane");

  RelightOptions relight;
  CLI::App* relightCmd = app.add_subcommand("relight", "Relight one frame under the environment map");
  addFrameOptions(relightCmd, relight.frame);
  relightCmd->add_option("--rays", relight.rays, "Secondary rays per pixel")->capture_default_str();
  relightCmd->add_option("--seed", relight.seed, "Random seed")->capture_default_str();
  relightCmd->add_option("--env", relight.env, "Environment map overriding the scene's env_map");

  FitOptions fitOpts;
  CLI::App* fitCmd = app.add_subcommand("fit", "Fit the body Gaussians to a voxel density field");
  fitCmd->add_option("--scene", fitOpts.scene, "Scene JSON file (skeleton and poses)")->required();
  fitCmd->add_option("--voxels", fitOpts.voxels, "Voxel density file")->required();
  fitCmd->add_option("--frame", fitOpts.frame, "Pose frame the field was captured in")->capture_default_str();
  fitCmd->add_option("--per-joint", fitOpts.perJoint, "Gaussians per joint (default: the scene's K)");
  fitCmd->add_option("--iters", fitOpts.iterations, "Iterations")->capture_default_str();
  fitCmd->add_option("--batch", fitOpts.batch, "Query points per iteration")->capture_default_str();
  fitCmd->add_option("--step", fitOpts.step, "Initial step size")->capture_default_str();
  fitCmd->add_option("--w-sigma", fitOpts.wSigma, "Sigma regularizer weight")->capture_default_str();
  fitCmd->add_option("--w-mean", fitOpts.wMean, "Mean regularizer weight")->capture_default_str();
  fitCmd->add_option("--seed", fitOpts.seed, "Random seed")->capture_default_str();
  fitCmd->add_option("--out", fitOpts.out, "Output scene JSON with the fitted body")->required();

  SolveOptions solve;
  CLI::App* solveCmd = app.add_subcommand("solve-light", "Recover the directional light from reference images");
  solveCmd->add_option("--scene", solve.scene, "Scene JSON file")->required();
  solveCmd->add_option("--refs", solve.refs, "Reference directory containing refs.json")->required();
  solveCmd->add_option("--iters", solve.iterations, "Iterations")->capture_default_str();
  solveCmd->add_option("--frames-per-iter", solve.framesPerIteration, "References sampled per iteration")
      ->capture_default_str();
  solveCmd->add_option("--seed", solve.seed, "Random seed")->capture_default_str();
  solveCmd->add_option("--init-azimuth", solve.azimuth, "Initial azimuth in radians (default 0)");
  solveCmd->add_option("--init-elevation", solve.elevation, "Initial elevation in radians (default 0.5)");
  solveCmd->add_option("--init-ambient", solve.ambient, "Initial ambient RGB")->expected(3)->capture_default_str();
  solveCmd->add_flag("--antipodal", solve.antipodal, "Start opposite the scene light");
  solveCmd->add_option("--out", solve.out, "Directory for light.json and re-rendered references");

  BenchOptions bench;
  CLI::App* benchCmd = app.add_subcommand("bench", "Time analytic against sampled shadow rays");
  benchCmd->add_option("--scene", bench.scene, "Scene JSON file")->required();
  benchCmd->add_option("--frame", bench.frame, "Pose frame whose Gaussians cast the shadows")->capture_default_str();
  benchCmd->add_option("--rays", bench.rays, "Rays per method")->capture_default_str();
  benchCmd->add_option("--samples", bench.samples, "Comma-separated sample counts")
      ->delimiter(',')
      ->capture_default_str();
  benchCmd->add_option("--seed", bench.seed, "Random seed for the ray set")->capture_default_str();
  benchCmd->add_option("--csv", bench.csv, "CSV output path (default: after the table on stdout)");

  PsnrOptions psnrOpts;
  CLI::App* psnrCmd = app.add_subcommand("psnr", "PSNR between two images");
  psnrCmd->add_option("a", psnrOpts.a, "First image")->required();
  psnrCmd->add_option("b", psnrOpts.b, "Second image")->required();
  psnrCmd->add_option("--mask", psnrOpts.mask, "Single-channel mask; pixels > 0.5 count");
  psnrCmd->add_flag("--linear", psnrOpts.linear, "Compare linear values instead of display-encoded ones");

  std::string exampleDir;
  CLI::App* exampleCmd = app.add_subcommand("example-scene", "Write the bundled stick-figure scene");
  exampleCmd->add_option("--out", exampleDir, "Output directory")->required();

  std::string refsScene;
  std::string refsDir;
  CLI::App* refsCmd = app.add_subcommand("refs", "Render lit references of every frame for solve-light");
  refsCmd->add_option("--scene", refsScene, "Scene JSON file with a light")->required();
  refsCmd->add_option("--out", refsDir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << activeSubcommand(app)->help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << activeSubcommand(app)->help();
    return kExitUsage;
  }

  try {
    if (*renderCmd) {
      return runRender(render);
    }
    if (*relightCmd) {
      return runRelight(relight);
    }
    if (*fitCmd) {
      return runFit(fitOpts);
    }
    if (*solveCmd) {
      return runSolveLight(solve);
    }
    if (*benchCmd) {
      return runBench(bench);
    }
    if (*psnrCmd) {
      return runPsnr(psnrOpts);
    }
    if (*exampleCmd) {
      writeExampleScene(exampleDir);
      std::cout << fmt::format("wrote example scene to {}\n", exampleDir);
      return 0;
    }
    if (*refsCmd) {
      const auto entries = renderReferences(loadScene(refsScene), refsDir);
      std::cout << fmt::format("wrote {} references to {}\n", entries.size(), refsDir);
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << activeSubcommand(app)->help();
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
