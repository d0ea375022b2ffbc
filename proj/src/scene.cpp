#include "gsc/scene.h"

#include "gsc/errors.h"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace gsc {

namespace {

using json = nlohmann::json;

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

std::string index(const std::string& path, std::size_t i) {
  return fmt::format("{}[{}]", path, i);
}

const json& member(const json& object, const std::string& key, const std::string& path) {
  if (!object.is_object()) {
    throw SchemaError(path.empty() ? "<root>" : path, "expected an object");
  }
  const auto it = object.find(key);
  if (it == object.end()) {
    throw SchemaError(join(path, key), "missing field");
  }
  return *it;
}

const json& array(const json& j, const std::string& path, std::optional<std::size_t> size = std::nullopt) {
  if (!j.is_array()) {
    throw SchemaError(path, "expected an array");
  }
  if (size && j.size() != *size) {
    throw SchemaError(path, fmt::format("expected {} entries, got {}", *size, j.size()));
  }
  return j;
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) {
    throw SchemaError(path, "expected a number");
  }
  const double v = j.get<double>();
  if (!std::isfinite(v)) {
    throw SchemaError(path, "expected a finite number");
  }
  return v;
}

int integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) {
    throw SchemaError(path, "expected an integer");
  }
  return j.get<int>();
}

std::string string(const json& j, const std::string& path) {
  if (!j.is_string()) {
    throw SchemaError(path, "expected a string");
  }
  return j.get<std::string>();
}

Vec3 vec3(const json& j, const std::string& path) {
  array(j, path, 3);
  return {number(j[0], index(path, 0)), number(j[1], index(path, 1)), number(j[2], index(path, 2))};
}

Mat4 mat4(const json& j, const std::string& path) {
  array(j, path, 4);
  Mat4 m;
  for (std::size_t r = 0; r < 4; ++r) {
    const std::string row = index(path, r);
    array(j[r], row, 4);
    for (std::size_t c = 0; c < 4; ++c) {
      m(r, c) = number(j[r][c], index(row, c));
    }
  }
  return m;
}

json toJson(const Vec3& v) {
  return json::array({v.x(), v.y(), v.z()});
}

json toJson(const Mat4& m) {
  json rows = json::array();
  for (int r = 0; r < 4; ++r) {
    rows.push_back(json::array({m(r, 0), m(r, 1), m(r, 2), m(r, 3)}));
  }
  return rows;
}

// Indented JSON with arrays of plain values kept on one line, so a Gaussian
// or a matrix row reads as a single line.
void writeCompact(const json& j, int indent, std::string& out) {
  const std::string pad(2 * (indent + 1), ' ');
  if (j.is_object()) {
    if (j.empty()) {
      out += "{}";
      return;
    }
    out += "{\n";
    std::size_t i = 0;
    for (const auto& [key, value] : j.items()) {
      out += pad + json(key).dump() + ": ";
      writeCompact(value, indent + 1, out);
      out += ++i < j.size() ? ",\n" : "\n";
    }
    out += std::string(2 * indent, ' ') + "}";
  } else if (j.is_array() && std::any_of(j.begin(), j.end(), [](const json& e) { return e.is_structured(); })) {
    out += "[\n";
    for (std::size_t i = 0; i < j.size(); ++i) {
      out += pad;
      writeCompact(j[i], indent + 1, out);
      out += i + 1 < j.size() ? ",\n" : "\n";
    }
    out += std::string(2 * indent, ' ') + "]";
  } else if (j.is_array()) {
    out += "[";
    for (std::size_t i = 0; i < j.size(); ++i) {
      out += (i ? ", " : "") + j[i].dump();
    }
    out += "]";
  } else {
    out += j.dump();
  }
}

// Runs fn and rewraps library validation errors as schema errors at path.
template <typename Fn>
auto atPath(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const SchemaError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw SchemaError(path, e.what());
  }
}

Skeleton parseSkeleton(const json& j) {
  const int count = integer(member(j, "J", "skeleton"), "skeleton.J");
  if (count < 1 || count > kMaxJoints) {
    throw SchemaError("skeleton.J", fmt::format("joint count must be in [1, {}]", kMaxJoints));
  }
  const auto n = static_cast<std::size_t>(count);
  Skeleton s;
  const json& parents = array(member(j, "parents", "skeleton"), "skeleton.parents", n);
  for (std::size_t i = 0; i < n; ++i) {
    s.parents.push_back(integer(parents[i], index("skeleton.parents", i)));
  }
  const json& centers = array(member(j, "rest_centers", "skeleton"), "skeleton.rest_centers", n);
  for (std::size_t i = 0; i < n; ++i) {
    s.restJoints.push_back(vec3(centers[i], index("skeleton.rest_centers", i)));
  }
  atPath("skeleton.parents", [&] {
    s.validate();
    return 0;
  });
  return s;
}

Camera parseCamera(const json& j, const std::string& path) {
  const double fx = number(member(j, "fx", path), join(path, "fx"));
  const double fy = number(member(j, "fy", path), join(path, "fy"));
  const double cx = number(member(j, "cx", path), join(path, "cx"));
  const double cy = number(member(j, "cy", path), join(path, "cy"));
  const int width = integer(member(j, "width", path), join(path, "width"));
  const int height = integer(member(j, "height", path), join(path, "height"));
  const Mat4 w2c = mat4(member(j, "world_to_camera", path), join(path, "world_to_camera"));
  return atPath(path, [&] { return Camera(fx, fy, cx, cy, width, height, w2c); });
}

json cameraJson(const Camera& c) {
  return {
      {"fx", c.fx()},
      {"fy", c.fy()},
      {"cx", c.cx()},
      {"cy", c.cy()},
      {"width", c.width()},
      {"height", c.height()},
      {"world_to_camera", toJson(c.worldToCamera())},
  };
}

} // namespace

std::size_t Scene::cameraIndex(std::size_t frame) const {
  if (cameras.empty()) {
    throw InvalidInput("scene has no cameras");
  }
  return frame % cameras.size();
}

std::filesystem::path Scene::resolve(const std::string& path) const {
  const std::filesystem::path p(path);
  return p.is_absolute() ? p : baseDir / p;
}

std::vector<AnisoGaussian> Scene::posedGaussians(std::size_t frame) const {
  if (frame >= poses.size()) {
    throw InvalidInput(fmt::format("frame {} out of range, scene has {} frames", frame, poses.size()));
  }
  return poseGaussians(body, skeleton, poses[frame]);
}

GBuffer Scene::gbuffer(std::size_t frame, const Camera& camera) const {
  if (frame >= poses.size()) {
    throw InvalidInput(fmt::format("frame {} out of range, scene has {} frames", frame, poses.size()));
  }
  if (gbufferSource.kind == GBufferSource::Kind::Analytic) {
    return rasterize(camera, posedGaussians(frame), colors);
  }
  GBuffer gb = GBuffer::read(resolve(gbufferSource.frames.at(frame)));
  if (gb.width() != camera.width() || gb.height() != camera.height()) {
    throw InvalidInput(fmt::format(
        "G-buffer of frame {} is {}x{}, camera is {}x{}", frame, gb.width(), gb.height(), camera.width(),
        camera.height()));
  }
  return gb;
}

GroundPlane Scene::groundPlane(const Camera& camera) const {
  if (!ground) {
    throw InvalidInput("scene has no ground plane");
  }
  GroundPlane plane{ground->point, ground->normal, ground->color, {}};
  if (!ground->background.empty()) {
    plane.background = readImage(resolve(ground->background));
    if (plane.background.width() != camera.width() || plane.background.height() != camera.height() ||
        plane.background.channels() != 3) {
      throw InvalidInput("ground-plane background must be an RGB image of the camera size");
    }
  }
  return plane;
}

EnvironmentMap Scene::environment() const {
  if (envMap.empty()) {
    throw InvalidInput("scene has no environment map");
  }
  return EnvironmentMap(readImage(resolve(envMap)));
}

void Scene::validate() const {
  if (version != kSceneVersion) {
    throw SchemaError("version", fmt::format("unsupported scene version {}", version));
  }
  atPath("skeleton", [&] {
    skeleton.validate();
    return 0;
  });
  if (body.joints() != skeleton.jointCount()) {
    throw SchemaError("body.parameters", "joint count differs from the skeleton");
  }
  atPath("body.parameters", [&] {
    body.validate();
    return 0;
  });
  if (colors.size() != body.size()) {
    throw SchemaError("body.colors", "expected one color per Gaussian");
  }
  if (poses.empty()) {
    throw SchemaError("poses", "need at least one frame");
  }
  for (std::size_t f = 0; f < poses.size(); ++f) {
    atPath(index("poses", f), [&] {
      poses[f].validate(skeleton.jointCount());
      return 0;
    });
  }
  if (cameras.empty()) {
    throw SchemaError("cameras", "need at least one camera");
  }
  if (light) {
    atPath("light", [&] {
      light->directional().validate();
      return 0;
    });
  }
  if (!envMap.empty() && !std::filesystem::exists(resolve(envMap))) {
    throw SchemaError("env_map", fmt::format("file not found: {}", resolve(envMap).string()));
  }
  if (ground) {
    atPath("ground_plane", [&] {
      GroundPlane{ground->point, ground->normal, ground->color, {}}.validate();
      return 0;
    });
    if (!ground->background.empty() && !std::filesystem::exists(resolve(ground->background))) {
      throw SchemaError("ground_plane.background", fmt::format("file not found: {}", resolve(ground->background).string()));
    }
  }
  if (gbufferSource.kind == GBufferSource::Kind::Files) {
    if (gbufferSource.frames.size() != poses.size()) {
      throw SchemaError("gbuffer_source.frames", "expected one directory per pose frame");
    }
    for (std::size_t f = 0; f < gbufferSource.frames.size(); ++f) {
      for (const char* name : {"albedo.pfm", "normal.pfm", "depth.pfm", "mask.pfm"}) {
        const auto file = resolve(gbufferSource.frames[f]) / name;
        if (!std::filesystem::exists(file)) {
          throw SchemaError(index("gbuffer_source.frames", f), fmt::format("file not found: {}", file.string()));
        }
      }
    }
  }
}

Scene parseScene(std::string_view jsonText, const std::filesystem::path& baseDir) {
  json root;
  try {
    root = json::parse(jsonText);
  } catch (const json::parse_error& e) {
    throw SchemaError("<root>", fmt::format("invalid JSON: {}", e.what()));
  }

  Scene scene;
  scene.baseDir = baseDir;
  scene.version = integer(member(root, "version", ""), "version");
  if (scene.version != kSceneVersion) {
    throw SchemaError("version", fmt::format("unsupported scene version {}", scene.version));
  }
  scene.skeleton = parseSkeleton(member(root, "skeleton", ""));
  const auto joints = static_cast<std::size_t>(scene.skeleton.jointCount());

  const json& body = member(root, "body", "");
  const int perJoint = integer(member(body, "K", "body"), "body.K");
  if (perJoint < 1) {
    throw SchemaError("body.K", "need at least one Gaussian per joint");
  }
  const auto k = static_cast<std::size_t>(perJoint);
  const json& params = array(member(body, "parameters", "body"), "body.parameters", joints);
  std::vector<AnisoGaussian> gaussians;
  for (std::size_t j = 0; j < joints; ++j) {
    const std::string jp = index("body.parameters", j);
    array(params[j], jp, k);
    for (std::size_t i = 0; i < k; ++i) {
      const std::string gp = index(jp, i);
      const json& p = array(params[j][i], gp, AnisoGaussian::kParameterCount);
      AnisoGaussian g;
      g.mean = Vec3(number(p[0], index(gp, 0)), number(p[1], index(gp, 1)), number(p[2], index(gp, 2)));
      g.sigma = Vec3(number(p[3], index(gp, 3)), number(p[4], index(gp, 4)), number(p[5], index(gp, 5)));
      for (std::size_t r = 0; r < 6; ++r) {
        g.rot6[r] = number(p[6 + r], index(gp, 6 + r));
      }
      g.amplitude = number(p[12], index(gp, 12));
      atPath(gp, [&] {
        g.validate();
        return 0;
      });
      gaussians.push_back(g);
    }
  }
  scene.body = GaussianBody(static_cast<int>(joints), perJoint, std::move(gaussians));
  if (body.contains("colors")) {
    const json& colors = array(body["colors"], "body.colors", joints);
    for (std::size_t j = 0; j < joints; ++j) {
      array(colors[j], index("body.colors", j), k);
      for (std::size_t i = 0; i < k; ++i) {
        scene.colors.push_back(vec3(colors[j][i], index(index("body.colors", j), i)));
      }
    }
  } else {
    scene.colors.assign(scene.body.size(), Vec3::Constant(0.8));
  }

  const json& poses = array(member(root, "poses", ""), "poses");
  for (std::size_t f = 0; f < poses.size(); ++f) {
    const std::string fp = index("poses", f);
    array(poses[f], fp, joints);
    PoseFrame frame;
    frame.timestamp = static_cast<std::int64_t>(f);
    for (std::size_t j = 0; j < joints; ++j) {
      frame.transforms.push_back(mat4(poses[f][j], index(fp, j)));
    }
    scene.poses.push_back(std::move(frame));
  }

  const json& cameras = array(member(root, "cameras", ""), "cameras");
  for (std::size_t c = 0; c < cameras.size(); ++c) {
    scene.cameras.push_back(parseCamera(cameras[c], index("cameras", c)));
  }

  if (root.contains("light")) {
    const json& l = root["light"];
    SceneLight light;
    light.azimuth = number(member(l, "azimuth", "light"), "light.azimuth");
    light.elevation = number(member(l, "elevation", "light"), "light.elevation");
    light.ambient = vec3(member(l, "ambient", "light"), "light.ambient");
    if (l.contains("color")) {
      light.color = vec3(l["color"], "light.color");
    }
    scene.light = light;
  }
  if (root.contains("env_map")) {
    scene.envMap = string(root["env_map"], "env_map");
  }
  if (root.contains("ground_plane")) {
    const json& g = root["ground_plane"];
    SceneGround ground;
    ground.point = vec3(member(g, "point", "ground_plane"), "ground_plane.point");
    ground.normal = vec3(member(g, "normal", "ground_plane"), "ground_plane.normal");
    if (g.contains("color")) {
      ground.color = vec3(g["color"], "ground_plane.color");
    }
    if (g.contains("background")) {
      ground.background = string(g["background"], "ground_plane.background");
    }
    scene.ground = ground;
  }
  if (root.contains("gbuffer_source")) {
    const json& src = root["gbuffer_source"];
    const std::string type = string(member(src, "type", "gbuffer_source"), "gbuffer_source.type");
    if (type == "analytic") {
      scene.gbufferSource.kind = GBufferSource::Kind::Analytic;
    } else if (type == "files") {
      scene.gbufferSource.kind = GBufferSource::Kind::Files;
      const json& frames = array(member(src, "frames", "gbuffer_source"), "gbuffer_source.frames");
      for (std::size_t f = 0; f < frames.size(); ++f) {
        scene.gbufferSource.frames.push_back(string(frames[f], index("gbuffer_source.frames", f)));
      }
    } else {
      throw SchemaError("gbuffer_source.type", fmt::format("expected \"analytic\" or \"files\", got \"{}\"", type));
    }
  }

  scene.validate();
  return scene;
}

std::string serializeScene(const Scene& scene) {
  json root;
  root["version"] = scene.version;

  json parents = json::array();
  json centers = json::array();
  for (int j = 0; j < scene.skeleton.jointCount(); ++j) {
    parents.push_back(scene.skeleton.parents[j]);
    centers.push_back(toJson(scene.skeleton.restJoints[j]));
  }
  root["skeleton"] = {{"J", scene.skeleton.jointCount()}, {"parents", parents}, {"rest_centers", centers}};

  json params = json::array();
  json colors = json::array();
  for (int j = 0; j < scene.body.joints(); ++j) {
    json jp = json::array();
    json jc = json::array();
    for (int k = 0; k < scene.body.perJoint(); ++k) {
      const AnisoGaussian& g = scene.body.at(j, k);
      json p = json::array({g.mean.x(), g.mean.y(), g.mean.z(), g.sigma.x(), g.sigma.y(), g.sigma.z()});
      for (double r : g.rot6) {
        p.push_back(r);
      }
      p.push_back(g.amplitude);
      jp.push_back(std::move(p));
      jc.push_back(toJson(scene.colors.at(static_cast<std::size_t>(j) * scene.body.perJoint() + k)));
    }
    params.push_back(std::move(jp));
    colors.push_back(std::move(jc));
  }
  root["body"] = {{"K", scene.body.perJoint()}, {"parameters", params}, {"colors", colors}};

  json poses = json::array();
  for (const auto& frame : scene.poses) {
    json transforms = json::array();
    for (const auto& t : frame.transforms) {
      transforms.push_back(toJson(t));
    }
    poses.push_back(std::move(transforms));
  }
  root["poses"] = poses;

  json cameras = json::array();
  for (const auto& c : scene.cameras) {
    cameras.push_back(cameraJson(c));
  }
  root["cameras"] = cameras;

  if (scene.light) {
    root["light"] = {
        {"azimuth", scene.light->azimuth},
        {"elevation", scene.light->elevation},
        {"ambient", toJson(scene.light->ambient)},
        {"color", toJson(scene.light->color)},
    };
  }
  if (!scene.envMap.empty()) {
    root["env_map"] = scene.envMap;
  }
  if (scene.ground) {
    json g = {
        {"point", toJson(scene.ground->point)},
        {"normal", toJson(scene.ground->normal)},
        {"color", toJson(scene.ground->color)},
    };
    if (!scene.ground->background.empty()) {
      g["background"] = scene.ground->background;
    }
    root["ground_plane"] = g;
  }
  if (scene.gbufferSource.kind == GBufferSource::Kind::Files) {
    root["gbuffer_source"] = {{"type", "files"}, {"frames", scene.gbufferSource.frames}};
  } else {
    root["gbuffer_source"] = {{"type", "analytic"}};
  }
  std::string out;
  writeCompact(root, 0, out);
  return out + "\n";
}

Scene loadScene(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError(fmt::format("cannot open scene file {}", path.string()));
  }
  std::ostringstream text;
  text << in.rdbuf();
  return parseScene(text.str(), path.parent_path());
}

void saveScene(const Scene& scene, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError(fmt::format("cannot write scene file {}", path.string()));
  }
  out << serializeScene(scene);
  if (!out) {
    throw IoError(fmt::format("failed writing scene file {}", path.string()));
  }
}

} // namespace gsc
