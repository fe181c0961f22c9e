#pragma once

#include <array>
#include <string>
#include <vector>

#include "geopix/dataset.hpp"
#include "geopix/image.hpp"

namespace geopix {

// Per-channel constants applied as (x - mean) / std on 0..255 values.
// Defaults are the ImageNet statistics.
struct Normalization {
    std::array<double, 3> mean{123.675, 116.28, 103.53};
    std::array<double, 3> stddev{58.395, 57.12, 57.375};
};

struct Rect {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;
    friend bool operator==(const Rect&, const Rect&) = default;
};

struct PreprocessedSample {
    int size = 0;
    std::vector<float> image;  // 3 x size x size, normalized, zero in the padding
    Mask mask;                 // size x size
    Rect valid_region;
    double scale_factor = 1.0;
    std::string source_id;
    int source_height = 0;
    int source_width = 0;
};

// Scales the long edge to target_size, pads bottom/right. target_size must be a multiple of 32.
PreprocessedSample preprocess(const ImageSample& sample, int target_size, const Normalization& norm = {});
PreprocessedSample preprocess_image(const Image& image, int target_size, const Normalization& norm = {});

// Crops the valid region of a target_size mask and maps it back to the source resolution.
Mask restore_mask(const Mask& square, const PreprocessedSample& geometry);

}  // namespace geopix
