#include "gsc/references.h"

#include "gsc/errors.h"

#include <fmt/format.h>
#include <json.hpp>

#include <fstream>

namespace gsc {

namespace {

using json = nlohmann::json;

std::size_t count(const json& entry, const char* key, const std::string& path) {
  if (!entry.contains(key) || !entry[key].is_number_unsigned()) {
    throw SchemaError(fmt::format("{}.{}", path, key), "expected a non-negative integer");
  }
  return entry[key].get<std::size_t>();
}

} // namespace

std::vector<ReferenceEntry> readReferenceManifest(const std::filesystem::path& dir) {
  const auto path = dir / kReferenceManifest;
  std::ifstream in(path);
  if (!in) {
    throw IoError(fmt::format("cannot open reference manifest {}", path.string()));
  }
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError("<root>", fmt::format("invalid JSON in {}: {}", path.string(), e.what()));
  }
  if (!root.is_object() || !root.contains("frames") || !root["frames"].is_array() || root["frames"].empty()) {
    throw SchemaError("frames", "expected a non-empty array");
  }
  std::vector<ReferenceEntry> entries;
  for (std::size_t i = 0; i < root["frames"].size(); ++i) {
    const json& e = root["frames"][i];
    const std::string p = fmt::format("frames[{}]", i);
    if (!e.is_object() || !e.contains("image") || !e["image"].is_string()) {
      throw SchemaError(p + ".image", "expected a file name");
    }
    ReferenceEntry entry{count(e, "frame", p), count(e, "camera", p), e["image"].get<std::string>(), {}};
    if (e.contains("mask")) {
      if (!e["mask"].is_string()) {
        throw SchemaError(p + ".mask", "expected a file name");
      }
      entry.mask = e["mask"].get<std::string>();
    }
    entries.push_back(std::move(entry));
  }
  return entries;
}

void writeReferenceManifest(const std::filesystem::path& dir, const std::vector<ReferenceEntry>& entries) {
  json frames = json::array();
  for (const auto& e : entries) {
    json j = {{"frame", e.frame}, {"camera", e.camera}, {"image", e.image}};
    if (!e.mask.empty()) {
      j["mask"] = e.mask;
    }
    frames.push_back(std::move(j));
  }
  const auto path = dir / kReferenceManifest;
  std::ofstream out(path);
  out << json{{"frames", frames}}.dump(2) << "\n";
  if (!out) {
    throw IoError(fmt::format("cannot write reference manifest {}", path.string()));
  }
}

std::vector<LightReference> loadLightReferences(const Scene& scene, const std::filesystem::path& dir) {
  std::vector<LightReference> refs;
  const auto entries = readReferenceManifest(dir);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (e.frame >= scene.frameCount()) {
      throw SchemaError(fmt::format("frames[{}].frame", i), fmt::format("scene has {} frames", scene.frameCount()));
    }
    if (e.camera >= scene.cameras.size()) {
      throw SchemaError(fmt::format("frames[{}].camera", i), fmt::format("scene has {} cameras", scene.cameras.size()));
    }
    const Camera& camera = scene.cameras[e.camera];
    LightReference ref{camera, scene.gbuffer(e.frame, camera), prepare(scene.posedGaussians(e.frame)),
                       readImage(dir / e.image), Image()};
    if (!e.mask.empty()) {
      ref.mask = readImage(dir / e.mask);
    }
    refs.push_back(std::move(ref));
  }
  return refs;
}

std::vector<ReferenceEntry> renderReferences(const Scene& scene, const std::filesystem::path& dir) {
  if (!scene.light) {
    throw InvalidInput("rendering references needs a scene light");
  }
  std::filesystem::create_directories(dir);
  std::vector<ReferenceEntry> entries;
  for (std::size_t f = 0; f < scene.frameCount(); ++f) {
    const std::size_t c = scene.cameraIndex(f);
    const Camera& camera = scene.cameras[c];
    const GBuffer gb = scene.gbuffer(f, camera);
    const auto gaussians = prepare(scene.posedGaussians(f));
    std::optional<GroundPlane> ground;
    if (scene.ground) {
      ground = scene.groundPlane(camera);
    }
    FrameInputs in;
    in.camera = &camera;
    in.gbuffer = &gb;
    in.gaussians = gaussians;
    in.light = scene.light->directional();
    in.ground = ground ? &*ground : nullptr;
    const std::string name = fmt::format("frame_{:03}.pfm", f);
    writePfm(renderFrame(in, RenderMode::Lit), dir / name);
    entries.push_back({f, c, name, {}});
  }
  writeReferenceManifest(dir, entries);
  return entries;
}

} // namespace gsc
