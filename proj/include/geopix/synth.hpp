#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "geopix/dataset.hpp"
#include "geopix/image.hpp"

namespace geopix {

// Desk-scale stand-in for a reasoning-segmentation corpus: parametric shapes
// (disks, bars, block grids) queried by templated instructions.
struct SynthConfig {
    int n = 8;
    int size = 64;
    std::uint64_t seed = 0;
    double empty_fraction = 0.25;
    double referring_fraction = 0.0;
    int questions_per_image = 1;
    Split split = Split::train;
};

// Throws ConfigError on n < 1 or a size that is not a multiple of 32.
std::vector<AnnotatedImage> synth_images(const SynthConfig& config);

// Writes the split under root and reads it back through load_manifest.
DatasetManifest synth_dataset(const std::filesystem::path& root, const SynthConfig& config);

// Texture generators used for redundancy comparisons.
Image periodic_texture(int size, std::uint64_t seed);
Image white_noise(int size, std::uint64_t seed);

}  // namespace geopix
