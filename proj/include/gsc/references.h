#pragma once

#include "gsc/light_solver.h"
#include "gsc/scene.h"

#include <filesystem>
#include <string>
#include <vector>

namespace gsc {

/// One photograph for the light solver: which pose frame and camera it
/// shows, and file names relative to the reference directory.
struct ReferenceEntry {
  std::size_t frame = 0;
  std::size_t camera = 0;
  std::string image;
  std::string mask; // optional single-channel loss region
};

inline constexpr const char* kReferenceManifest = "refs.json";

/// Reads dir/refs.json: {"frames": [{"frame", "camera", "image", "mask"?}]}.
/// Throws IoError for a missing file and SchemaError for a bad manifest.
std::vector<ReferenceEntry> readReferenceManifest(const std::filesystem::path& dir);
void writeReferenceManifest(const std::filesystem::path& dir, const std::vector<ReferenceEntry>& entries);

/// Loads the manifest's images and pairs them with the scene's geometry.
std::vector<LightReference> loadLightReferences(const Scene& scene, const std::filesystem::path& dir);

/// Renders every pose frame lit by the scene light (ground included when
/// present) into dir as frame_NNN.pfm, and writes the manifest. Returns the
/// entries written. Throws InvalidInput if the scene has no light.
std::vector<ReferenceEntry> renderReferences(const Scene& scene, const std::filesystem::path& dir);

} // namespace gsc
