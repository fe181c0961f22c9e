#include "geopix/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "geopix/errors.hpp"

namespace geopix {

namespace {

void check_target(int target_size) {
    if (target_size <= 0 || target_size % 32 != 0) {
        throw ConfigError("target size " + std::to_string(target_size) + " must be a positive multiple of 32");
    }
}

Rect content_region(int height, int width, int target_size, double& scale) {
    scale = static_cast<double>(target_size) / std::max(height, width);
    Rect r;
    r.height = std::clamp(static_cast<int>(std::lround(height * scale)), 1, target_size);
    r.width = std::clamp(static_cast<int>(std::lround(width * scale)), 1, target_size);
    return r;
}

}  // namespace

PreprocessedSample preprocess_image(const Image& image, int target_size, const Normalization& norm) {
    check_target(target_size);
    if (image.empty()) {
        throw FormatError("cannot preprocess an empty image");
    }
    PreprocessedSample out;
    out.size = target_size;
    out.source_height = image.height;
    out.source_width = image.width;
    out.valid_region = content_region(image.height, image.width, target_size, out.scale_factor);

    const Image scaled = resize_bilinear(image, out.valid_region.height, out.valid_region.width);
    const std::size_t plane = static_cast<std::size_t>(target_size) * target_size;
    out.image.assign(3 * plane, 0.0f);
    for (int c = 0; c < 3; ++c) {
        float* dst = out.image.data() + c * plane;
        for (int y = 0; y < scaled.height; ++y) {
            for (int x = 0; x < scaled.width; ++x) {
                const double v = (scaled.at(y, x, c) - norm.mean[c]) / norm.stddev[c];
                dst[static_cast<std::size_t>(y) * target_size + x] = static_cast<float>(v);
            }
        }
    }
    out.mask = Mask(target_size, target_size);
    return out;
}

PreprocessedSample preprocess(const ImageSample& sample, int target_size, const Normalization& norm) {
    PreprocessedSample out = preprocess_image(sample.image, target_size, norm);
    out.source_id = sample.id;
    if (sample.mask.height != sample.image.height || sample.mask.width != sample.image.width) {
        throw FormatError("sample " + sample.id + ": image and mask dimensions differ");
    }
    const Mask scaled = resize_nearest(sample.mask, out.valid_region.height, out.valid_region.width);
    for (int y = 0; y < scaled.height; ++y) {
        for (int x = 0; x < scaled.width; ++x) out.mask.at(y, x) = scaled.at(y, x);
    }
    return out;
}

Mask restore_mask(const Mask& square, const PreprocessedSample& geometry) {
    const Rect& r = geometry.valid_region;
    Mask crop(r.height, r.width);
    for (int y = 0; y < r.height; ++y) {
        for (int x = 0; x < r.width; ++x) crop.at(y, x) = square.at(r.y + y, r.x + x);
    }
    return resize_nearest(crop, geometry.source_height, geometry.source_width);
}

}  // namespace geopix
