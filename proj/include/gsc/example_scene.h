#pragma once

#include "gsc/density_fit.h"
#include "gsc/scene.h"

#include <filesystem>

namespace gsc {

/// A 16-joint stick figure with 4 Gaussians per joint, a four-frame walk
/// cycle seen by four orbiting cameras, a sun light and a ground plane.
/// The env_map entry names "sky.pfm"; pair it with exampleSky().
Scene exampleScene();

/// Equirectangular sky with a horizon gradient and one sun texel in the
/// direction of the example light, bright enough that the sun alone gives
/// the same irradiance as the directional light.
EnvironmentMap exampleSky(int width = 64, int height = 32);

/// Body density of frame 0 sampled on a cube grid around the figure.
VoxelField exampleDensity(const Scene& scene, int resolution = 32);

/// Writes scene.json, sky.pfm and body_density.vox into dir.
void writeExampleScene(const std::filesystem::path& dir);

} // namespace gsc
